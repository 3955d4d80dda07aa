#pragma once

#include <cmath>

#include "vds/flow/warp.hpp"

namespace vds {

struct ConsistencyParams {
    double a1 = 0.01;
    double a2 = 0.5;
};

// Forward-backward flow consistency: pixel p is valid iff
//   ||f(p) + b(p + f(p))||^2 < a1 * (||f(p)||^2 + ||b(p + f(p))||^2) + a2.
// Pixels whose forward displacement lands outside the image are invalid.
inline Mask flow_consistency_mask(const FlowField& fwd, const FlowField& bwd,
                                  ConsistencyParams p = {}) {
    if (!fwd.u.same_shape(bwd.u)) throw DataError("flow_consistency_mask: shape mismatch");
    const int h = fwd.h(), w = fwd.w();
    Mask out(h, w, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double fu = fwd.u.at(y, x), fv = fwd.v.at(y, x);
            BilinearSample s = bilinear_setup(x + fu, y + fv, h, w);
            if (!s.in_bounds) continue;
            double bu = bilinear_value(bwd.u, s);
            double bv = bilinear_value(bwd.v, s);
            double ru = fu + bu, rv = fv + bv;
            double residual = ru * ru + rv * rv;
            double mag = fu * fu + fv * fv + bu * bu + bv * bv;
            out.at(y, x) = residual < p.a1 * mag + p.a2 ? 1 : 0;
        }
    }
    return out;
}

}  // namespace vds
