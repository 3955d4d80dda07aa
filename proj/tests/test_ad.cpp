#include <catch_amalgamated.hpp>

#include <functional>

#include "vds/ad/nn_ops.hpp"
#include "vds/core/rng.hpp"

using namespace vds;
using ad::Tensor;
using ad::Var;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.v) v = rng.uniform(lo, hi);
    return t;
}

// Central finite differences over every entry of every input tensor.
void check_gradients(const std::vector<Tensor>& inputs,
                     const std::function<Var(const std::vector<Var>&)>& fn, double tol = 1e-6,
                     double step = 1e-5) {
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(ad::param(t));
    Var out = fn(vars);
    REQUIRE(out->val.numel() == 1);
    ad::backprop(out);
    for (size_t vi = 0; vi < vars.size(); ++vi) {
        for (int64_t i = 0; i < inputs[vi].numel(); ++i) {
            std::vector<Tensor> shifted = inputs;
            shifted[vi].v[static_cast<size_t>(i)] += step;
            std::vector<Var> vp;
            for (const auto& t : shifted) vp.push_back(ad::constant(t));
            double up = fn(vp)->val.item();
            shifted[vi].v[static_cast<size_t>(i)] -= 2 * step;
            std::vector<Var> vm;
            for (const auto& t : shifted) vm.push_back(ad::constant(t));
            double down = fn(vm)->val.item();
            double fd = (up - down) / (2 * step);
            double an = vars[vi]->grad.v.empty() ? 0.0 : vars[vi]->grad.v[static_cast<size_t>(i)];
            double denom = std::max({std::abs(fd), std::abs(an), 1.0});
            INFO("input " << vi << " entry " << i << " fd=" << fd << " analytic=" << an);
            CHECK(std::abs(fd - an) / denom < tol);
        }
    }
}

Mask checker_mask(int h, int w) {
    Mask m(h, w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.at(y, x) = ((y * w + x) % 3 != 0);
    return m;
}

}  // namespace

TEST_CASE("gradients: elementwise and broadcast ops") {
    Rng rng(101);
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({3, 4}, rng);
    auto s = random_tensor({1}, rng, 0.5, 2.0);
    Mask m = checker_mask(3, 4);

    check_gradients({a, b}, [&](const std::vector<Var>& v) {
        return ad::masked_mean(ad::mul(ad::add(v[0], v[1]), ad::sub(v[0], v[1])), m);
    });
    check_gradients({a}, [&](const std::vector<Var>& v) {
        return ad::masked_mean(ad::abs_(ad::scale(v[0], 1.7)), m);
    });
    check_gradients({a, s}, [&](const std::vector<Var>& v) {
        return ad::masked_sum(ad::div_bcast(ad::sub_bcast(v[0], v[1]), v[1]), m);
    });
    check_gradients({a}, [&](const std::vector<Var>& v) {
        return ad::masked_mean(ad::sigmoid(v[0]), m);
    });
    check_gradients({a}, [&](const std::vector<Var>& v) {
        return ad::masked_mean(ad::gelu(v[0]), m);
    });
}

TEST_CASE("gradients: masked median routes to the central order statistics") {
    Rng rng(7);
    auto a = random_tensor({3, 3}, rng);
    Mask full = full_mask(3, 3);
    check_gradients({a}, [&](const std::vector<Var>& v) { return ad::masked_median(v[0], full); });
    Mask even(3, 3, 1);
    even.at(2, 2) = 0;  // 8 valid entries
    check_gradients({a}, [&](const std::vector<Var>& v) { return ad::masked_median(v[0], even); });
}

TEST_CASE("gradients: grid ops") {
    Rng rng(17);
    auto a = random_tensor({4, 6}, rng);
    Mask mx = checker_mask(4, 5), my = checker_mask(3, 6);
    check_gradients({a}, [&](const std::vector<Var>& v) {
        return ad::masked_mean(ad::abs_(ad::forward_diff_x(v[0])), mx);
    });
    check_gradients({a}, [&](const std::vector<Var>& v) {
        return ad::masked_mean(ad::abs_(ad::forward_diff_y(v[0])), my);
    });
    check_gradients({a}, [&](const std::vector<Var>& v) {
        return ad::masked_mean(ad::avgpool2x2(v[0]), full_mask(2, 3));
    });

    FlowField flow(4, 6);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x) {
            flow.u.at(y, x) = rng.uniform(-1.5, 1.5);
            flow.v.at(y, x) = rng.uniform(-1.5, 1.5);
        }
    check_gradients({a}, [&](const std::vector<Var>& v) {
        return ad::masked_mean(ad::warp_bilinear(v[0], flow), full_mask(4, 6));
    });
}

TEST_CASE("gradients: conv2d strides and padding") {
    Rng rng(23);
    auto x = random_tensor({2, 5, 6}, rng);
    auto w = random_tensor({3, 2, 3, 3}, rng);
    auto b = random_tensor({3}, rng);
    for (int stride : {1, 2}) {
        check_gradients({x, w, b}, [&](const std::vector<Var>& v) {
            Var y = ad::conv2d(v[0], v[1], v[2], stride, 1);
            Mask m(y->val.dim(1), y->val.dim(2), 1);
            return ad::masked_mean(ad::select_channel(ad::gelu(y), 1), m);
        });
    }
}

TEST_CASE("gradients: linear, layer_norm, softmax") {
    Rng rng(29);
    auto x = random_tensor({4, 6}, rng);
    auto w = random_tensor({5, 6}, rng);
    auto b = random_tensor({5}, rng);
    auto g = random_tensor({5}, rng, 0.5, 1.5);
    auto be = random_tensor({5}, rng);
    check_gradients({x, w, b, g, be}, [&](const std::vector<Var>& v) {
        Var y = ad::layer_norm(ad::linear(v[0], v[1], v[2]), v[3], v[4]);
        return ad::masked_mean(ad::softmax_lastdim(y), full_mask(4, 5));
    }, 2e-6);
}

TEST_CASE("gradients: attention primitives") {
    Rng rng(31);
    const int p = 4, c = 6, r = 3;
    auto q = random_tensor({p, c}, rng);
    auto k1 = random_tensor({p, c}, rng);
    auto k2 = random_tensor({p, c}, rng);
    auto k3 = random_tensor({p, c}, rng);
    for (int heads : {1, 2}) {
        check_gradients({q, k1, k2, k3}, [&](const std::vector<Var>& v) {
            Var k = ad::stack_tokens({v[1], v[2], v[3]});
            Var logits = ad::attention_logits(v[0], k, heads);
            Var alpha = ad::softmax_lastdim(logits);
            Var out = ad::attention_mix(alpha, k, heads);
            return ad::masked_mean(out, full_mask(p, c));
        }, 2e-6);
    }
}

TEST_CASE("gradients: token pooling and resize") {
    Rng rng(37);
    auto x = random_tensor({2, 5, 7}, rng);
    check_gradients({x}, [&](const std::vector<Var>& v) {
        Var t = ad::patch_tokens(v[0], 3);  // 2x3 patch grid
        Var g = ad::tokens_to_grid(t, 2, 3);
        Var up = ad::bilinear_resize(g, 5, 7);
        return ad::masked_mean(ad::select_channel(up, 0), full_mask(5, 7));
    });
    check_gradients({x}, [&](const std::vector<Var>& v) {
        Var t = ad::pooled_ref_tokens(v[0], 3, 3);
        return ad::masked_mean(t, full_mask(6, 2));
    });
}

TEST_CASE("gradients: channel ops and cross entropy") {
    Rng rng(41);
    auto x = random_tensor({3, 4, 4}, rng);
    auto y = random_tensor({2, 4, 4}, rng);
    check_gradients({x, y}, [&](const std::vector<Var>& v) {
        Var c = ad::concat_channels(v[0], v[1]);
        return ad::masked_mean(ad::select_channel(c, 4), full_mask(4, 4));
    });
    LabelGrid labels(4, 4, 0);
    for (int i = 0; i < 16; ++i) labels.data[static_cast<size_t>(i)] = i % 3;
    check_gradients({x}, [&](const std::vector<Var>& v) {
        return ad::cross_entropy(ad::softmax_channels(v[0]), labels);
    });
}

TEST_CASE("softmax of identical logits is uniform") {
    Tensor t({1, 3});
    t.v = {0.4, 0.4, 0.4};
    Var s = ad::softmax_lastdim(ad::constant(t));
    for (double v : s->val.v) CHECK(v == Catch::Approx(1.0 / 3.0));
}
