#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "vds/core/types.hpp"

namespace vds {

struct WindowNormResult {
    std::vector<DisparityMap> maps;
    bool degenerate = false;  // max == min over all valid pixels of the window
    double min = 0.0;
    double max = 0.0;
};

// Joint min/max normalization of all maps in a sliding window: the min and max
// are taken over the valid pixels of the whole window, not per frame. A
// constant window normalizes to all zeros with the degenerate flag set.
inline WindowNormResult normalize_window(const std::vector<DisparityMap>& maps) {
    if (maps.empty()) throw DataError("normalize_window: empty window");
    for (const auto& m : maps)
        if (!m.values.same_shape(maps.front().values))
            throw DataError("normalize_window: shape mismatch");

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& m : maps)
        for (size_t i = 0; i < m.values.data.size(); ++i)
            if (m.valid.data[i]) {
                lo = std::min(lo, m.values.data[i]);
                hi = std::max(hi, m.values.data[i]);
            }

    WindowNormResult out;
    out.maps.reserve(maps.size());
    if (!(hi > lo)) {  // also covers the no-valid-pixel case
        out.degenerate = true;
        out.min = out.max = std::isfinite(lo) ? lo : 0.0;
        for (const auto& m : maps) {
            DisparityMap z = m;
            std::fill(z.values.data.begin(), z.values.data.end(), 0.0);
            z.space = DispSpace::window_normalized;
            out.maps.push_back(std::move(z));
        }
        return out;
    }
    out.min = lo;
    out.max = hi;
    const double inv = 1.0 / (hi - lo);
    for (const auto& m : maps) {
        DisparityMap n = m;
        for (double& v : n.values.data) v = (v - lo) * inv;
        n.space = DispSpace::window_normalized;
        out.maps.push_back(std::move(n));
    }
    return out;
}

struct AlignStats {
    double t = 0.0;  // median over valid pixels
    double s = 0.0;  // mean absolute deviation from the median
};

// Median of the valid pixels; an even-sized set uses the mean of the two
// central order statistics.
inline double masked_median(const Grid<double>& values, const Mask& valid) {
    std::vector<double> v;
    v.reserve(values.data.size());
    for (size_t i = 0; i < values.data.size(); ++i)
        if (valid.data[i]) v.push_back(values.data[i]);
    if (v.empty()) throw DataError("masked_median: no valid pixels");
    size_t m = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + m, v.end());
    double hi = v[m];
    if (v.size() % 2 == 1) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + m);
    return 0.5 * (lo + hi);
}

inline AlignStats alignment_stats(const Grid<double>& values, const Mask& valid) {
    AlignStats st;
    st.t = masked_median(values, valid);
    size_t m = 0;
    double acc = 0.0;
    for (size_t i = 0; i < values.data.size(); ++i)
        if (valid.data[i]) {
            acc += std::abs(values.data[i] - st.t);
            ++m;
        }
    st.s = acc / static_cast<double>(m);
    return st;
}

struct ScaleShiftAlignment {
    AlignStats pred;
    AlignStats gt;
    DisparityMap pred_aligned;
    DisparityMap gt_aligned;
    Mask joint_valid;
};

// Align both maps to zero median and unit mean absolute deviation over the
// joint valid mask. Invariant under positive affine transforms of either
// input. A constant map (s == 0) is alignment-degenerate.
inline ScaleShiftAlignment align_scale_shift(const DisparityMap& pred, const DisparityMap& gt) {
    if (!pred.values.same_shape(gt.values))
        throw DataError("align_scale_shift: shape mismatch");
    ScaleShiftAlignment out;
    out.joint_valid = mask_and(pred.valid, gt.valid);
    if (mask_count(out.joint_valid) == 0)
        throw DataError("align_scale_shift: empty joint valid mask");
    out.pred = alignment_stats(pred.values, out.joint_valid);
    out.gt = alignment_stats(gt.values, out.joint_valid);
    if (out.pred.s <= 0.0 || out.gt.s <= 0.0)
        throw NumericalError("align_scale_shift: degenerate (constant) map, s = 0");

    auto apply = [&](const DisparityMap& m, const AlignStats& st) {
        DisparityMap a = m;
        a.valid = out.joint_valid;
        for (double& v : a.values.data) v = (v - st.t) / st.s;
        a.space = DispSpace::aligned;
        return a;
    };
    out.pred_aligned = apply(pred, out.pred);
    out.gt_aligned = apply(gt, out.gt);
    return out;
}

// Half-up rounding onto 65535 levels; input must be window-normalized [0,1].
inline Grid<uint16_t> discretize_disparity(const DisparityMap& d) {
    Grid<uint16_t> q(d.h(), d.w(), 0);
    for (size_t i = 0; i < d.values.data.size(); ++i) {
        if (!d.valid.data[i]) continue;
        double v = d.values.data[i];
        if (v < 0.0 || v > 1.0)
            throw DataError("discretize_disparity: value outside [0,1]");
        q.data[i] = static_cast<uint16_t>(std::floor(v * 65535.0 + 0.5));
    }
    return q;
}

}  // namespace vds
