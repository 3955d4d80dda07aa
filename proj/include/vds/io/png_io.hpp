#pragma once

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "vds/core/types.hpp"

namespace vds {

namespace detail {

struct PngFile {
    FILE* fp = nullptr;
    explicit PngFile(const std::filesystem::path& path, const char* mode) {
        fp = std::fopen(path.string().c_str(), mode);
        if (!fp) throw DataError("cannot open " + path.string());
    }
    ~PngFile() {
        if (fp) std::fclose(fp);
    }
    PngFile(const PngFile&) = delete;
    PngFile& operator=(const PngFile&) = delete;
};

inline uint8_t to_u8(double v) {
    double s = std::floor(v * 255.0 + 0.5);
    if (s < 0.0) s = 0.0;
    if (s > 255.0) s = 255.0;
    return static_cast<uint8_t>(s);
}

inline void write_png(const std::filesystem::path& path, int h, int w, int color_type,
                      int bit_depth, const std::vector<std::vector<uint8_t>>& rows,
                      const std::vector<png_color>* palette = nullptr) {
    PngFile file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw DataError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng write failed: " + path.string());
    }
    png_init_io(png, file.fp);
    png_set_IHDR(png, info, w, h, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (palette)
        png_set_PLTE(png, info, palette->data(), static_cast<int>(palette->size()));
    png_write_info(png, info);
    for (int y = 0; y < h; ++y)
        png_write_row(png, const_cast<png_bytep>(rows[static_cast<size_t>(y)].data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct DecodedPng {
    int h = 0, w = 0, channels = 0;
    std::vector<uint8_t> pixels;  // expanded to 8-bit, row-major
};

inline DecodedPng read_png(const std::filesystem::path& path, bool expand_palette) {
    PngFile file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw DataError("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("libpng read failed: " + path.string());
    }
    png_init_io(png, file.fp);
    png_read_info(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    if (expand_palette && color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (!expand_palette && depth < 8) png_set_packing(png);  // one byte per pixel
    if (expand_palette && color == PNG_COLOR_TYPE_GRAY && depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16) png_set_strip_16(png);
    png_read_update_info(png, info);
    DecodedPng out;
    out.h = static_cast<int>(png_get_image_height(png, info));
    out.w = static_cast<int>(png_get_image_width(png, info));
    out.channels = static_cast<int>(png_get_channels(png, info));
    size_t rowbytes = png_get_rowbytes(png, info);
    out.pixels.resize(static_cast<size_t>(out.h) * rowbytes);
    std::vector<png_bytep> rows(static_cast<size_t>(out.h));
    for (int y = 0; y < out.h; ++y) rows[static_cast<size_t>(y)] = out.pixels.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

}  // namespace detail

inline void write_png_rgb(const std::filesystem::path& path, const Frame& frame) {
    std::vector<std::vector<uint8_t>> rows(static_cast<size_t>(frame.h));
    for (int y = 0; y < frame.h; ++y) {
        rows[static_cast<size_t>(y)].resize(static_cast<size_t>(frame.w) * 3);
        for (int x = 0; x < frame.w; ++x)
            for (int c = 0; c < 3; ++c)
                rows[static_cast<size_t>(y)][static_cast<size_t>(x) * 3 + c] =
                    detail::to_u8(frame.at(y, x, c));
    }
    detail::write_png(path, frame.h, frame.w, PNG_COLOR_TYPE_RGB, 8, rows);
}

inline Frame read_png_rgb(const std::filesystem::path& path, int index = 0) {
    detail::DecodedPng png = detail::read_png(path, true);
    Frame f(index, png.h, png.w);
    for (int y = 0; y < png.h; ++y)
        for (int x = 0; x < png.w; ++x)
            for (int c = 0; c < 3; ++c) {
                int ch = png.channels >= 3 ? c : 0;
                f.at(y, x, c) =
                    png.pixels[(static_cast<size_t>(y) * png.w + x) * png.channels + ch] / 255.0;
            }
    return f;
}

// Binary masks as 1-bit grayscale PNG.
inline void write_png_mask(const std::filesystem::path& path, const Mask& mask) {
    std::vector<std::vector<uint8_t>> rows(static_cast<size_t>(mask.h));
    for (int y = 0; y < mask.h; ++y) {
        rows[static_cast<size_t>(y)].assign((static_cast<size_t>(mask.w) + 7) / 8, 0);
        for (int x = 0; x < mask.w; ++x)
            if (mask.at(y, x))
                rows[static_cast<size_t>(y)][static_cast<size_t>(x) / 8] |=
                    static_cast<uint8_t>(0x80u >> (x % 8));
    }
    detail::write_png(path, mask.h, mask.w, PNG_COLOR_TYPE_GRAY, 1, rows);
}

inline Mask read_png_mask(const std::filesystem::path& path) {
    detail::DecodedPng png = detail::read_png(path, false);
    Mask m(png.h, png.w, 0);
    for (int y = 0; y < png.h; ++y)
        for (int x = 0; x < png.w; ++x)
            m.at(y, x) = png.pixels[(static_cast<size_t>(y) * png.w + x) * png.channels] ? 1 : 0;
    return m;
}

// Label maps as paletted PNG; the palette index is the class id.
inline void write_png_labels(const std::filesystem::path& path, const LabelGrid& labels,
                             int n_classes) {
    static const png_color kPalette[] = {
        {40, 40, 48},    {214, 73, 51},   {64, 142, 198}, {99, 190, 123},
        {237, 187, 31},  {151, 98, 181},  {230, 140, 60}, {110, 110, 110},
        {180, 220, 240}, {120, 70, 20},   {0, 160, 150},  {240, 120, 170},
        {90, 120, 40},   {170, 170, 220}, {60, 60, 150},  {200, 200, 200}};
    if (n_classes < 1 || n_classes > 16) throw DataError("write_png_labels: up to 16 classes");
    std::vector<png_color> palette(kPalette, kPalette + n_classes);
    std::vector<std::vector<uint8_t>> rows(static_cast<size_t>(labels.h));
    for (int y = 0; y < labels.h; ++y) {
        rows[static_cast<size_t>(y)].resize(static_cast<size_t>(labels.w));
        for (int x = 0; x < labels.w; ++x) {
            int v = labels.at(y, x);
            if (v < 0 || v >= n_classes) throw DataError("write_png_labels: label out of range");
            rows[static_cast<size_t>(y)][static_cast<size_t>(x)] = static_cast<uint8_t>(v);
        }
    }
    detail::write_png(path, labels.h, labels.w, PNG_COLOR_TYPE_PALETTE, 8, rows, &palette);
}

inline LabelGrid read_png_labels(const std::filesystem::path& path) {
    detail::DecodedPng png = detail::read_png(path, false);
    LabelGrid labels(png.h, png.w, 0);
    for (int y = 0; y < png.h; ++y)
        for (int x = 0; x < png.w; ++x)
            labels.at(y, x) =
                png.pixels[(static_cast<size_t>(y) * png.w + x) * png.channels];
    return labels;
}

}  // namespace vds
