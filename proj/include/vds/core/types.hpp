#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace vds {

// Error taxonomy mapped to CLI exit codes: ConfigError -> 2, DataError -> 3,
// NumericalError -> 4.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};
struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

// Dense H x W grid, row major.
template <typename T>
struct Grid {
    int h = 0;
    int w = 0;
    std::vector<T> data;

    Grid() = default;
    Grid(int h_, int w_, T fill = T{}) : h(h_), w(w_), data(static_cast<size_t>(h_) * w_, fill) {}

    T& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
    const T& at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
    size_t size() const { return data.size(); }
    bool same_shape(const Grid& o) const { return h == o.h && w == o.w; }
};

using Mask = Grid<uint8_t>;  // 1 = valid

inline Mask full_mask(int h, int w) { return Mask(h, w, 1); }

inline Mask mask_and(const Mask& a, const Mask& b) {
    if (!a.same_shape(b)) throw DataError("mask_and: shape mismatch");
    Mask out(a.h, a.w);
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] && b.data[i];
    return out;
}

inline size_t mask_count(const Mask& m) {
    size_t n = 0;
    for (uint8_t v : m.data) n += (v != 0);
    return n;
}

// RGB frame, channel values in [0,1], HWC layout. Frame numbers are 1-based.
struct Frame {
    int index = 0;
    int h = 0;
    int w = 0;
    std::vector<double> rgb;

    Frame() = default;
    Frame(int index_, int h_, int w_)
        : index(index_), h(h_), w(w_), rgb(static_cast<size_t>(h_) * w_ * 3, 0.0) {}

    double& at(int y, int x, int c) { return rgb[(static_cast<size_t>(y) * w + x) * 3 + c]; }
    const double& at(int y, int x, int c) const {
        return rgb[(static_cast<size_t>(y) * w + x) * 3 + c];
    }
};

enum class DispSpace { raw, window_normalized, aligned };

// Per-frame relative disparity (larger = closer) with validity mask.
struct DisparityMap {
    Grid<double> values;
    Mask valid;
    DispSpace space = DispSpace::raw;

    DisparityMap() = default;
    DisparityMap(int h, int w, double fill = 0.0, DispSpace s = DispSpace::raw)
        : values(h, w, fill), valid(full_mask(h, w)), space(s) {}

    int h() const { return values.h; }
    int w() const { return values.w; }
};

// Pixel displacement field from frame src_index to frame dst_index:
// content at pixel p in src appears at p + (u,v) in dst.
struct FlowField {
    Grid<double> u;
    Grid<double> v;
    int src_index = 0;
    int dst_index = 0;

    FlowField() = default;
    FlowField(int h, int w, int src = 0, int dst = 0)
        : u(h, w, 0.0), v(h, w, 0.0), src_index(src), dst_index(dst) {}

    int h() const { return u.h; }
    int w() const { return u.w; }
};

using LabelGrid = Grid<int>;

struct VideoSequence {
    std::string name;
    std::vector<Frame> frames;                // 1..N, frames[i].index == i+1
    std::vector<DisparityMap> gt_disparity;   // optional, per frame
    std::vector<FlowField> gt_flow_fwd;       // [n] : flow frame n+1 -> n+2 (0-based n, size N-1)
    std::vector<FlowField> gt_flow_bwd;       // [n] : flow frame n+2 -> n+1
    std::vector<LabelGrid> gt_labels;         // optional, per frame
    double fps = 24.0;

    int frame_count() const { return static_cast<int>(frames.size()); }
    int height() const { return frames.empty() ? 0 : frames.front().h; }
    int width() const { return frames.empty() ? 0 : frames.front().w; }
};

enum class WindowDirection { pre, post };

struct RgbdFrame {
    Frame frame;
    DisparityMap disparity;
};

// One target frame plus n_ref reference frames at interval l. Reference
// indices are target - k*l (pre) or target + k*l (post), clamped to [1, N].
struct SlidingWindow {
    RgbdFrame target;
    std::vector<RgbdFrame> references;
    int interval = 1;
    WindowDirection direction = WindowDirection::pre;
};

// Reference frame indices for a window, clamped to the sequence bounds.
inline std::vector<int> window_reference_indices(int target_index, int n_frames, int n_ref,
                                                 int interval, WindowDirection dir) {
    std::vector<int> idx;
    idx.reserve(n_ref);
    for (int k = 1; k <= n_ref; ++k) {
        int i = dir == WindowDirection::pre ? target_index - k * interval
                                            : target_index + k * interval;
        if (i < 1) i = 1;
        if (i > n_frames) i = n_frames;
        idx.push_back(i);
    }
    return idx;
}

}  // namespace vds
