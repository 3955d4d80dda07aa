#pragma once

#include <cmath>

#include "vds/core/types.hpp"

namespace vds {

struct BilinearSample {
    int x0, y0, x1, y1;
    double fx, fy;
    bool in_bounds;  // sample point inside the image before clamping
};

inline BilinearSample bilinear_setup(double sx, double sy, int h, int w) {
    BilinearSample s;
    s.in_bounds = sx >= 0.0 && sx <= w - 1.0 && sy >= 0.0 && sy <= h - 1.0;
    double cx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
    double cy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
    s.x0 = static_cast<int>(std::floor(cx));
    s.y0 = static_cast<int>(std::floor(cy));
    s.x1 = std::min(s.x0 + 1, w - 1);
    s.y1 = std::min(s.y0 + 1, h - 1);
    s.fx = cx - s.x0;
    s.fy = cy - s.y0;
    return s;
}

inline double bilinear_value(const Grid<double>& g, const BilinearSample& s) {
    double a = g.at(s.y0, s.x0) * (1.0 - s.fx) + g.at(s.y0, s.x1) * s.fx;
    double b = g.at(s.y1, s.x0) * (1.0 - s.fx) + g.at(s.y1, s.x1) * s.fx;
    return a * (1.0 - s.fy) + b * s.fy;
}

// Backward warp: output(p) = bilinear sample of input at p + flow(p).
// Samples falling outside the image clamp to the border and invalidate the
// output pixel. Input validity propagates through every support pixel that
// carries nonzero bilinear weight.
inline DisparityMap warp_backward(const DisparityMap& map, const FlowField& flow) {
    if (!map.values.same_shape(flow.u)) throw DataError("warp_backward: shape mismatch");
    const int h = map.h(), w = map.w();
    DisparityMap out(h, w, 0.0, map.space);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            BilinearSample s =
                bilinear_setup(x + flow.u.at(y, x), y + flow.v.at(y, x), h, w);
            out.values.at(y, x) = bilinear_value(map.values, s);
            bool ok = s.in_bounds;
            if (ok) {
                // support pixels with nonzero weight must all be valid
                double w00 = (1.0 - s.fx) * (1.0 - s.fy);
                double w01 = s.fx * (1.0 - s.fy);
                double w10 = (1.0 - s.fx) * s.fy;
                double w11 = s.fx * s.fy;
                if (w00 > 0.0 && !map.valid.at(s.y0, s.x0)) ok = false;
                if (w01 > 0.0 && !map.valid.at(s.y0, s.x1)) ok = false;
                if (w10 > 0.0 && !map.valid.at(s.y1, s.x0)) ok = false;
                if (w11 > 0.0 && !map.valid.at(s.y1, s.x1)) ok = false;
            }
            out.valid.at(y, x) = ok ? 1 : 0;
        }
    }
    return out;
}

struct WarpedFrame {
    Frame frame;
    Mask valid;
};

inline WarpedFrame warp_backward(const Frame& f, const FlowField& flow) {
    if (f.h != flow.h() || f.w != flow.w()) throw DataError("warp_backward: shape mismatch");
    WarpedFrame out{Frame(f.index, f.h, f.w), full_mask(f.h, f.w)};
    for (int y = 0; y < f.h; ++y) {
        for (int x = 0; x < f.w; ++x) {
            BilinearSample s =
                bilinear_setup(x + flow.u.at(y, x), y + flow.v.at(y, x), f.h, f.w);
            for (int c = 0; c < 3; ++c) {
                double a = f.at(s.y0, s.x0, c) * (1.0 - s.fx) + f.at(s.y0, s.x1, c) * s.fx;
                double b = f.at(s.y1, s.x0, c) * (1.0 - s.fx) + f.at(s.y1, s.x1, c) * s.fx;
                out.frame.at(y, x, c) = a * (1.0 - s.fy) + b * s.fy;
            }
            out.valid.at(y, x) = s.in_bounds ? 1 : 0;
        }
    }
    return out;
}

// Per-pixel weights exp(-gamma * ||rgb_n - rgb_warped||^2), the squared norm
// taken over the three channels. Weights lie in (0,1].
struct VisibilityMask {
    Grid<double> weights;
};

inline VisibilityMask visibility_mask(const Frame& frame_n, const Frame& warped_prev,
                                      double gamma = 50.0) {
    if (frame_n.h != warped_prev.h || frame_n.w != warped_prev.w)
        throw DataError("visibility_mask: shape mismatch");
    VisibilityMask out{Grid<double>(frame_n.h, frame_n.w, 1.0)};
    for (int y = 0; y < frame_n.h; ++y)
        for (int x = 0; x < frame_n.w; ++x) {
            double d2 = 0.0;
            for (int c = 0; c < 3; ++c) {
                double d = frame_n.at(y, x, c) - warped_prev.at(y, x, c);
                d2 += d * d;
            }
            out.weights.at(y, x) = std::exp(-gamma * d2);
        }
    return out;
}

}  // namespace vds
