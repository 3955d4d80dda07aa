#pragma once

#include <vector>

#include "vds/ad/graph.hpp"
#include "vds/core/normalize.hpp"
#include "vds/flow/warp.hpp"

namespace vds {

struct LossWeights {
    double lambda_temporal = 0.2;
    double mu_gradient = 0.5;
    int K_scales = 4;
    double gamma_visibility = 50.0;
};

namespace loss {

// Scale-shift alignment inside the graph: median and mean absolute deviation
// carry almost-everywhere gradients, ties contribute subgradient 0.
struct AlignedPair {
    ad::Var pred;
    ad::Var gt;
    Mask joint;
};

inline AlignedPair align_pair(const ad::Var& pred, const Mask& pred_valid, const ad::Var& gt,
                              const Mask& gt_valid) {
    AlignedPair out;
    out.joint = mask_and(pred_valid, gt_valid);
    if (mask_count(out.joint) == 0) throw DataError("align_pair: empty joint mask");
    auto align_one = [&](const ad::Var& v) {
        ad::Var t = ad::masked_median(v, out.joint);
        ad::Var centered = ad::sub_bcast(v, t);
        ad::Var s = ad::masked_mean(ad::abs_(centered), out.joint);
        if (s->val.item() <= 0.0)
            throw NumericalError("alignment degenerate: constant map (s = 0)");
        return ad::div_bcast(centered, s);
    };
    out.pred = align_one(pred);
    out.gt = align_one(gt);
    return out;
}

// L_af: mean absolute difference of the two aligned maps over valid pixels.
inline ad::Var affinity_invariant(const ad::Var& pred, const Mask& pred_valid, const ad::Var& gt,
                                  const Mask& gt_valid) {
    AlignedPair a = align_pair(pred, pred_valid, gt, gt_valid);
    return ad::masked_mean(ad::abs_(ad::sub(a.pred, a.gt)), a.joint);
}

// Downscale a mask by 2x2 blocks; a pooled pixel is valid iff all four
// children are valid (trailing odd row/column dropped, mirroring avgpool2x2).
inline Mask pool_mask2x2(const Mask& m) {
    Mask out(m.h / 2, m.w / 2, 0);
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            out.at(y, x) = m.at(2 * y, 2 * x) && m.at(2 * y, 2 * x + 1) &&
                           m.at(2 * y + 1, 2 * x) && m.at(2 * y + 1, 2 * x + 1);
    return out;
}

// L_grad: K scales of mean absolute forward differences of the aligned
// residual, halving the resolution by average pooling at each level. Each
// scale normalizes by its own valid-difference count.
inline ad::Var gradient_matching(const ad::Var& pred, const Mask& pred_valid, const ad::Var& gt,
                                 const Mask& gt_valid, int k_scales) {
    AlignedPair a = align_pair(pred, pred_valid, gt, gt_valid);
    ad::Var residual = ad::sub(a.pred, a.gt);
    Mask mask = a.joint;
    ad::Var total = ad::constant(0.0);
    for (int k = 0; k < k_scales; ++k) {
        if (k > 0) {
            if (residual->val.dim(0) < 4 || residual->val.dim(1) < 4)
                throw DataError("gradient_matching: resolution too small for K scales");
            residual = ad::avgpool2x2(residual);
            mask = pool_mask2x2(mask);
        }
        const int h = residual->val.dim(0), w = residual->val.dim(1);
        Mask mx(h, w - 1, 0), my(h - 1, w, 0);
        size_t count = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x + 1 < w; ++x)
                if ((mx.at(y, x) = mask.at(y, x) && mask.at(y, x + 1))) ++count;
        for (int y = 0; y + 1 < h; ++y)
            for (int x = 0; x < w; ++x)
                if ((my.at(y, x) = mask.at(y, x) && mask.at(y + 1, x))) ++count;
        if (count == 0) continue;
        ad::Var sum = ad::add(ad::masked_sum(ad::abs_(ad::forward_diff_x(residual)), mx),
                              ad::masked_sum(ad::abs_(ad::forward_diff_y(residual)), my));
        total = ad::add(total, ad::scale(sum, 1.0 / static_cast<double>(count)));
    }
    return total;
}

// Validity of a backward warp: sample in bounds and every support pixel with
// nonzero bilinear weight valid in the source mask.
inline Mask warp_validity(const Mask& src_valid, const FlowField& flow) {
    const int h = src_valid.h, w = src_valid.w;
    Mask out(h, w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            BilinearSample s = bilinear_setup(x + flow.u.at(y, x), y + flow.v.at(y, x), h, w);
            if (!s.in_bounds) continue;
            bool ok = true;
            double w00 = (1 - s.fx) * (1 - s.fy), w01 = s.fx * (1 - s.fy);
            double w10 = (1 - s.fx) * s.fy, w11 = s.fx * s.fy;
            if (w00 > 0 && !src_valid.at(s.y0, s.x0)) ok = false;
            if (w01 > 0 && !src_valid.at(s.y0, s.x1)) ok = false;
            if (w10 > 0 && !src_valid.at(s.y1, s.x0)) ok = false;
            if (w11 > 0 && !src_valid.at(s.y1, s.x1)) ok = false;
            out.at(y, x) = ok;
        }
    return out;
}

// L_t(n, n-1): visibility-weighted mean absolute difference between D_n and
// D_{n-1} warped toward frame n by FL_{n=>n-1}.
inline ad::Var temporal(const ad::Var& d_n, const Mask& d_n_valid, const ad::Var& d_prev,
                        const Mask& d_prev_valid, const FlowField& flow_n_to_prev,
                        const Frame& frame_n, const Frame& frame_prev, double gamma = 50.0) {
    ad::Var warped_prev = ad::warp_bilinear(d_prev, flow_n_to_prev);
    Mask joint = mask_and(d_n_valid, warp_validity(d_prev_valid, flow_n_to_prev));
    if (mask_count(joint) == 0) throw DataError("temporal loss: empty joint mask");
    WarpedFrame wf = warp_backward(frame_prev, flow_n_to_prev);
    VisibilityMask vis = visibility_mask(frame_n, wf.frame, gamma);
    ad::Var weighted =
        ad::mul(ad::constant(ad::Tensor::from_grid(vis.weights)), ad::abs_(ad::sub(d_n, warped_prev)));
    return ad::masked_mean(weighted, joint);
}

struct FramePred {
    ad::Var values;  // (H, W)
    Mask valid;
};

struct WindowLossBreakdown {
    ad::Var total;
    double spatial = 0.0;
    double affinity = 0.0;
    double gradient = 0.0;
    double temporal = 0.0;
};

// L = sum_{n=2}^{N} [ L_s(n-1) + L_s(n) + lambda * L_t(n, n-1) ] with
// L_s = L_af + mu * L_grad, taken literally: interior frames contribute their
// spatial term to both adjacent summands.
inline WindowLossBreakdown window_loss(const std::vector<FramePred>& preds,
                                       const std::vector<DisparityMap>& gts,
                                       const std::vector<FlowField>& flows_n_to_prev,
                                       const std::vector<Frame>& frames, const LossWeights& w) {
    const size_t n = preds.size();
    if (n < 2) throw DataError("window_loss: need at least two frames");
    if (gts.size() != n || frames.size() != n || flows_n_to_prev.size() != n - 1)
        throw DataError("window_loss: length mismatch");

    std::vector<ad::Var> spatial(n);
    WindowLossBreakdown out;
    for (size_t i = 0; i < n; ++i) {
        ad::Var gt = ad::constant(ad::Tensor::from_grid(gts[i].values));
        ad::Var af = affinity_invariant(preds[i].values, preds[i].valid, gt, gts[i].valid);
        ad::Var gr =
            gradient_matching(preds[i].values, preds[i].valid, gt, gts[i].valid, w.K_scales);
        spatial[i] = ad::add(af, ad::scale(gr, w.mu_gradient));
        out.affinity += af->val.item();
        out.gradient += gr->val.item();
    }
    ad::Var total = ad::constant(0.0);
    for (size_t i = 1; i < n; ++i) {
        ad::Var lt = temporal(preds[i].values, preds[i].valid, preds[i - 1].values,
                              preds[i - 1].valid, flows_n_to_prev[i - 1], frames[i],
                              frames[i - 1], w.gamma_visibility);
        out.temporal += lt->val.item();
        total = ad::add(total, ad::add(ad::add(spatial[i - 1], spatial[i]),
                                       ad::scale(lt, w.lambda_temporal)));
        out.spatial += spatial[i - 1]->val.item() + spatial[i]->val.item();
    }
    out.total = total;
    return out;
}

// ---- plain-value entry points (shared implementation with the graph path) ----

inline double affinity_invariant_loss(const DisparityMap& pred, const DisparityMap& gt) {
    return affinity_invariant(ad::constant(ad::Tensor::from_grid(pred.values)), pred.valid,
                              ad::constant(ad::Tensor::from_grid(gt.values)), gt.valid)
        ->val.item();
}

inline double gradient_matching_loss(const DisparityMap& pred, const DisparityMap& gt,
                                     int k_scales) {
    return gradient_matching(ad::constant(ad::Tensor::from_grid(pred.values)), pred.valid,
                             ad::constant(ad::Tensor::from_grid(gt.values)), gt.valid, k_scales)
        ->val.item();
}

inline double temporal_loss(const DisparityMap& d_n, const DisparityMap& d_prev,
                            const FlowField& flow_n_to_prev, const Frame& frame_n,
                            const Frame& frame_prev, double gamma = 50.0) {
    return temporal(ad::constant(ad::Tensor::from_grid(d_n.values)), d_n.valid,
                    ad::constant(ad::Tensor::from_grid(d_prev.values)), d_prev.valid,
                    flow_n_to_prev, frame_n, frame_prev, gamma)
        ->val.item();
}

}  // namespace loss
}  // namespace vds
