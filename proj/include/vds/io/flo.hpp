#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "vds/core/types.hpp"

namespace vds {

constexpr float kFloMagic = 202021.25f;

// Middlebury .flo: magic float, int32 width/height, interleaved (u,v) float32
// pairs, row-major top-down.
inline void write_flo(const std::filesystem::path& path, const FlowField& flow) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("write_flo: cannot open " + path.string());
    int32_t w = flow.w(), h = flow.h();
    f.write(reinterpret_cast<const char*>(&kFloMagic), 4);
    f.write(reinterpret_cast<const char*>(&w), 4);
    f.write(reinterpret_cast<const char*>(&h), 4);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float u = static_cast<float>(flow.u.at(y, x));
            float v = static_cast<float>(flow.v.at(y, x));
            f.write(reinterpret_cast<const char*>(&u), 4);
            f.write(reinterpret_cast<const char*>(&v), 4);
        }
    if (!f) throw DataError("write_flo: write failed for " + path.string());
}

inline FlowField read_flo(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_flo: cannot open " + path.string());
    float magic = 0.0f;
    int32_t w = 0, h = 0;
    f.read(reinterpret_cast<char*>(&magic), 4);
    f.read(reinterpret_cast<char*>(&w), 4);
    f.read(reinterpret_cast<char*>(&h), 4);
    if (magic != kFloMagic) throw DataError("read_flo: bad magic in " + path.string());
    if (w <= 0 || h <= 0) throw DataError("read_flo: bad dimensions");
    FlowField flow(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float u, v;
            f.read(reinterpret_cast<char*>(&u), 4);
            f.read(reinterpret_cast<char*>(&v), 4);
            if (!f) throw DataError("read_flo: truncated file " + path.string());
            flow.u.at(y, x) = u;
            flow.v.at(y, x) = v;
        }
    return flow;
}

}  // namespace vds
