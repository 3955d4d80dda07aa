#pragma once

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include "vds/core/types.hpp"

namespace vds {

// Grayscale PFM, little-endian (negative scale header), bottom-up scanlines.
// Invalid pixels are stored as NaN.
inline void write_pfm(const std::filesystem::path& path, const DisparityMap& map) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("write_pfm: cannot open " + path.string());
    f << "Pf\n" << map.w() << " " << map.h() << "\n-1.0\n";
    const float nan = std::numeric_limits<float>::quiet_NaN();
    for (int y = map.h() - 1; y >= 0; --y)
        for (int x = 0; x < map.w(); ++x) {
            float v = map.valid.at(y, x) ? static_cast<float>(map.values.at(y, x)) : nan;
            f.write(reinterpret_cast<const char*>(&v), sizeof(float));
        }
    if (!f) throw DataError("write_pfm: write failed for " + path.string());
}

inline DisparityMap read_pfm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_pfm: cannot open " + path.string());
    std::string tag;
    f >> tag;
    if (tag != "Pf") throw DataError("read_pfm: not a grayscale PFM: " + path.string());
    int w = 0, h = 0;
    double scale = 0.0;
    f >> w >> h >> scale;
    if (w <= 0 || h <= 0 || scale == 0.0) throw DataError("read_pfm: bad header");
    f.get();  // single whitespace after the scale
    DisparityMap map(h, w);
    const bool little = scale < 0.0;
    for (int y = h - 1; y >= 0; --y)
        for (int x = 0; x < w; ++x) {
            unsigned char b[4];
            f.read(reinterpret_cast<char*>(b), 4);
            if (!f) throw DataError("read_pfm: truncated file " + path.string());
            if (!little) std::swap(b[0], b[3]), std::swap(b[1], b[2]);
            float v;
            std::memcpy(&v, b, 4);
            if (std::isnan(v)) {
                map.valid.at(y, x) = 0;
                map.values.at(y, x) = 0.0;
            } else {
                map.values.at(y, x) = v;
            }
        }
    return map;
}

}  // namespace vds
