#pragma once

#include <string>
#include <vector>

#include "cclap/errors.hpp"

namespace cclap {

// H x W x C raster of unit-interval intensities, row-major, channel-last.
struct ImageBuffer {
    int h = 0, w = 0, c = 0;
    std::vector<float> px;

    ImageBuffer() = default;
    ImageBuffer(int h_, int w_, int c_, float fill = 0.f)
        : h(h_), w(w_), c(c_), px(static_cast<size_t>(h_) * w_ * c_, fill) {
        if (h_ <= 0 || w_ <= 0 || c_ <= 0) throw DataError("image: degenerate extents");
    }

    float& at(int y, int x, int ch = 0) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
    float at(int y, int x, int ch = 0) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }

    void clamp01() {
        for (float& v : px) v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
    }
};

// 8-bit PNG I/O (grayscale or RGB; RGBA reads drop alpha).
ImageBuffer read_png(const std::string& path);
void write_png(const std::string& path, const ImageBuffer& img);  // atomic: tmp + rename

// Bilinear resize to an explicit geometry.
ImageBuffer resize_bilinear(const ImageBuffer& img, int out_h, int out_w);

// Rec. 601 luma; grayscale inputs pass through unchanged.
ImageBuffer to_grayscale(const ImageBuffer& img);

}  // namespace cclap
