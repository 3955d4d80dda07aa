#include <catch_amalgamated.hpp>

#include "vds/core/normalize.hpp"
#include "vds/core/rng.hpp"

using namespace vds;

namespace {

DisparityMap map_from(std::vector<double> vals, int h, int w) {
    DisparityMap m(h, w);
    m.values.data = std::move(vals);
    return m;
}

}  // namespace

TEST_CASE("normalize_window maps the joint min/max to [0,1]") {
    // window spanning min 2, max 8: a pixel of value 5 -> 0.5
    auto a = map_from({2.0, 5.0}, 1, 2);
    auto b = map_from({8.0, 3.0}, 1, 2);
    auto r = normalize_window({a, b});
    REQUIRE_FALSE(r.degenerate);
    CHECK(r.maps[0].values.data[0] == Catch::Approx(0.0));
    CHECK(r.maps[0].values.data[1] == Catch::Approx(0.5));
    CHECK(r.maps[1].values.data[0] == Catch::Approx(1.0));
    CHECK(r.maps[1].values.data[1] == Catch::Approx(1.0 / 6.0));
    CHECK(r.maps[0].space == DispSpace::window_normalized);
}

TEST_CASE("normalize_window leaves an exact [0,1] window unchanged") {
    auto a = map_from({0.0, 0.25}, 1, 2);
    auto b = map_from({1.0, 0.5}, 1, 2);
    auto r = normalize_window({a, b});
    REQUIRE_FALSE(r.degenerate);
    CHECK(r.maps[0].values.data[0] == Catch::Approx(0.0));
    CHECK(r.maps[0].values.data[1] == Catch::Approx(0.25));
    CHECK(r.maps[1].values.data[0] == Catch::Approx(1.0));
    CHECK(r.maps[1].values.data[1] == Catch::Approx(0.5));
}

TEST_CASE("normalize_window flags constant windows and returns zeros") {
    auto a = map_from({3.0, 3.0}, 1, 2);
    auto b = map_from({3.0, 3.0}, 1, 2);
    auto r = normalize_window({a, b});
    REQUIRE(r.degenerate);
    for (const auto& m : r.maps)
        for (double v : m.values.data) CHECK(v == 0.0);
}

TEST_CASE("normalize_window ignores invalid pixels when finding the range") {
    auto a = map_from({2.0, 100.0}, 1, 2);
    a.valid.data[1] = 0;
    auto b = map_from({8.0, 5.0}, 1, 2);
    auto r = normalize_window({a, b});
    REQUIRE_FALSE(r.degenerate);
    CHECK(r.min == 2.0);
    CHECK(r.max == 8.0);
}

TEST_CASE("normalize_window output spans exactly [0,1] on valid pixels") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<DisparityMap> maps;
        for (int i = 0; i < 4; ++i) {
            DisparityMap m(5, 6);
            for (auto& v : m.values.data) v = rng.uniform(-3.0, 9.0);
            maps.push_back(m);
        }
        auto r = normalize_window(maps);
        REQUIRE_FALSE(r.degenerate);
        double lo = 1e9, hi = -1e9;
        for (const auto& m : r.maps)
            for (double v : m.values.data) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        CHECK(lo == Catch::Approx(0.0).margin(1e-12));
        CHECK(hi == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("align_scale_shift matches the hand-computed example") {
    // gt values {1,2,3,4}: t = 2.5, s = 1.0, aligned = {-1.5,-0.5,0.5,1.5}
    auto gt = map_from({1.0, 2.0, 3.0, 4.0}, 2, 2);
    auto pred = map_from({4.0, 3.0, 2.0, 1.0}, 2, 2);
    auto r = align_scale_shift(pred, gt);
    CHECK(r.gt.t == Catch::Approx(2.5));
    CHECK(r.gt.s == Catch::Approx(1.0));
    CHECK(r.gt_aligned.values.data[0] == Catch::Approx(-1.5));
    CHECK(r.gt_aligned.values.data[1] == Catch::Approx(-0.5));
    CHECK(r.gt_aligned.values.data[2] == Catch::Approx(0.5));
    CHECK(r.gt_aligned.values.data[3] == Catch::Approx(1.5));
}

TEST_CASE("align_scale_shift is invariant under positive affine transforms") {
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        DisparityMap gt(4, 5), pred(4, 5);
        for (auto& v : gt.values.data) v = rng.uniform(0.1, 2.0);
        for (auto& v : pred.values.data) v = rng.uniform(0.1, 2.0);
        double a = rng.uniform(0.2, 5.0);
        double b = rng.uniform(-4.0, 4.0);
        DisparityMap scaled = pred;
        for (auto& v : scaled.values.data) v = a * v + b;
        auto r1 = align_scale_shift(pred, gt);
        auto r2 = align_scale_shift(scaled, gt);
        for (size_t i = 0; i < r1.pred_aligned.values.data.size(); ++i)
            CHECK(r2.pred_aligned.values.data[i] ==
                  Catch::Approx(r1.pred_aligned.values.data[i]).margin(1e-9));
    }
}

TEST_CASE("align_scale_shift: pred = 2*gt + 3 aligns onto gt exactly") {
    auto gt = map_from({1.0, 2.0, 3.0, 4.0, 7.0, 5.0}, 2, 3);
    DisparityMap pred = gt;
    for (auto& v : pred.values.data) v = 2.0 * v + 3.0;
    auto r = align_scale_shift(pred, gt);
    for (size_t i = 0; i < r.pred_aligned.values.data.size(); ++i)
        CHECK(r.pred_aligned.values.data[i] ==
              Catch::Approx(r.gt_aligned.values.data[i]).margin(1e-12));
}

TEST_CASE("align_scale_shift rejects constant maps") {
    auto gt = map_from({2.0, 2.0, 2.0, 2.0}, 2, 2);
    auto pred = map_from({1.0, 2.0, 3.0, 4.0}, 2, 2);
    CHECK_THROWS_AS(align_scale_shift(pred, gt), NumericalError);
}

TEST_CASE("median of an even-sized set is the mean of the central pair") {
    auto m = map_from({1.0, 10.0, 3.0, 7.0}, 2, 2);
    CHECK(masked_median(m.values, m.valid) == Catch::Approx(5.0));
}

TEST_CASE("discretize_disparity endpoints and half-up rounding") {
    auto d = map_from({1.0, 0.0, 0.5}, 1, 3);
    d.space = DispSpace::window_normalized;
    auto q = discretize_disparity(d);
    CHECK(q.data[0] == 65535);
    CHECK(q.data[1] == 0);
    CHECK(q.data[2] == 32768);  // round(32767.5) half-up
}

TEST_CASE("discretize is the identity on the 65535-level lattice") {
    DisparityMap d(1, 256);
    Rng rng(3);
    std::vector<int> levels;
    for (int i = 0; i < 256; ++i) levels.push_back(rng.uniform_int(0, 65535));
    levels[0] = 0;
    levels[1] = 65535;
    for (int i = 0; i < 256; ++i) d.values.data[i] = levels[i] / 65535.0;
    auto q = discretize_disparity(d);
    for (int i = 0; i < 256; ++i) CHECK(q.data[i] == levels[i]);
}

TEST_CASE("discretize_disparity rejects out-of-range input") {
    auto d = map_from({1.5}, 1, 1);
    CHECK_THROWS_AS(discretize_disparity(d), DataError);
}

TEST_CASE("window_reference_indices clamps at the sequence bounds") {
    CHECK(window_reference_indices(1, 10, 3, 1, WindowDirection::pre) ==
          std::vector<int>{1, 1, 1});
    CHECK(window_reference_indices(5, 10, 3, 1, WindowDirection::pre) ==
          std::vector<int>{4, 3, 2});
    CHECK(window_reference_indices(5, 10, 3, 2, WindowDirection::pre) ==
          std::vector<int>{3, 1, 1});
    CHECK(window_reference_indices(2, 10, 3, 1, WindowDirection::post) ==
          std::vector<int>{3, 4, 5});
    CHECK(window_reference_indices(10, 10, 3, 1, WindowDirection::post) ==
          std::vector<int>{10, 10, 10});
}
