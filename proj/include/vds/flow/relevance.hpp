#pragma once

#include <cmath>
#include <functional>

#include "vds/flow/warp.hpp"

namespace vds {

// Per-pixel fusion weight exp(-alpha * (|FL_i->n| + |FL_n->i|)) where the
// per-pixel flow magnitudes are normalized by the image diagonal so the
// exponent stays O(1) for sub-pixel through full-image motion.
struct RelevanceMap {
    Grid<double> weights;  // in (0,1]
    int ref_index = 0;
};

inline RelevanceMap relevance_map(const FlowField& flow_i_to_n, const FlowField& flow_n_to_i,
                                  double alpha = 10.0) {
    if (!flow_i_to_n.u.same_shape(flow_n_to_i.u))
        throw DataError("relevance_map: shape mismatch");
    const int h = flow_i_to_n.h(), w = flow_i_to_n.w();
    const double inv_diag = 1.0 / std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w);
    RelevanceMap out{Grid<double>(h, w, 1.0), flow_i_to_n.src_index};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double m1 = std::hypot(flow_i_to_n.u.at(y, x), flow_i_to_n.v.at(y, x));
            double m2 = std::hypot(flow_n_to_i.u.at(y, x), flow_n_to_i.v.at(y, x));
            out.weights.at(y, x) = std::exp(-alpha * (m1 + m2) * inv_diag);
        }
    return out;
}

// Chain two flows: a maps frame s -> m, b maps m -> d; the composition maps
// s -> d via f(p) = a(p) + b(p + a(p)), with b sampled bilinearly (clamped at
// the border).
inline FlowField compose_flow(const FlowField& a, const FlowField& b) {
    if (!a.u.same_shape(b.u)) throw DataError("compose_flow: shape mismatch");
    const int h = a.h(), w = a.w();
    FlowField out(h, w, a.src_index, b.dst_index);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double au = a.u.at(y, x), av = a.v.at(y, x);
            BilinearSample s = bilinear_setup(x + au, y + av, h, w);
            out.u.at(y, x) = au + bilinear_value(b.u, s);
            out.v.at(y, x) = av + bilinear_value(b.v, s);
        }
    return out;
}

// Supplies the flow between two (possibly non-adjacent) frames of a sequence.
// Frame indices are 1-based.
class FlowProvider {
public:
    virtual ~FlowProvider() = default;
    virtual FlowField flow(int from, int to) const = 0;
};

// Chains the stored consecutive-frame flows of a sequence.
class ComposedFlowProvider : public FlowProvider {
public:
    explicit ComposedFlowProvider(const VideoSequence& seq) : seq_(seq) {}

    FlowField flow(int from, int to) const override {
        if (from == to) {
            FlowField f(seq_.height(), seq_.width(), from, to);
            return f;
        }
        int step = from < to ? 1 : -1;
        FlowField acc = consecutive(from, from + step);
        for (int i = from + step; i != to; i += step)
            acc = compose_flow(acc, consecutive(i, i + step));
        return acc;
    }

private:
    FlowField consecutive(int from, int to) const {
        if (to == from + 1) {
            if (from < 1 || from > static_cast<int>(seq_.gt_flow_fwd.size()))
                throw DataError("ComposedFlowProvider: missing forward flow");
            return seq_.gt_flow_fwd[from - 1];
        }
        if (to == from - 1) {
            if (to < 1 || to > static_cast<int>(seq_.gt_flow_bwd.size()))
                throw DataError("ComposedFlowProvider: missing backward flow");
            return seq_.gt_flow_bwd[to - 1];
        }
        throw DataError("ComposedFlowProvider: not a consecutive pair");
    }

    const VideoSequence& seq_;
};

// Serves exact pairwise flows from a callback (e.g. the synthetic generator).
class ExactFlowProvider : public FlowProvider {
public:
    using Fn = std::function<FlowField(int, int)>;
    explicit ExactFlowProvider(Fn fn) : fn_(std::move(fn)) {}
    FlowField flow(int from, int to) const override { return fn_(from, to); }

private:
    Fn fn_;
};

}  // namespace vds
