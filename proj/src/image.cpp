#include "cclap/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>

namespace cclap {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

ImageBuffer read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png: read struct alloc failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png: info struct alloc failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png: failed to decode " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w, h;
    int bit_depth, color_type;
    png_get_IHDR(png, info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("png: unsupported channel count in " + path);
    }

    std::vector<png_byte> rowbuf(static_cast<size_t>(w) * channels);
    ImageBuffer img(static_cast<int>(h), static_cast<int>(w), channels);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, rowbuf.data(), nullptr);
        for (size_t i = 0; i < rowbuf.size(); ++i)
            img.px[static_cast<size_t>(y) * w * channels + i] = rowbuf[i] / 255.f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, const ImageBuffer& img) {
    if (img.c != 1 && img.c != 3) throw DataError("png: only 1- or 3-channel images written");
    std::string tmp = path + ".tmp";
    {
        FilePtr fp(std::fopen(tmp.c_str(), "wb"));
        if (!fp) throw IoError("png: cannot open for write " + tmp);
        png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (!png) throw IoError("png: write struct alloc failed");
        png_infop info = png_create_info_struct(png);
        if (!info) {
            png_destroy_write_struct(&png, nullptr);
            throw IoError("png: info struct alloc failed");
        }
        if (setjmp(png_jmpbuf(png))) {
            png_destroy_write_struct(&png, &info);
            throw IoError("png: failed to encode " + path);
        }
        png_init_io(png, fp.get());
        png_set_IHDR(png, info, img.w, img.h, 8,
                     img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        std::vector<png_byte> rowbuf(static_cast<size_t>(img.w) * img.c);
        for (int y = 0; y < img.h; ++y) {
            for (size_t i = 0; i < rowbuf.size(); ++i) {
                float v = img.px[static_cast<size_t>(y) * img.w * img.c + i];
                v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
                rowbuf[i] = static_cast<png_byte>(std::lround(v * 255.f));
            }
            png_write_row(png, rowbuf.data());
        }
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("png: rename failed: " + ec.message());
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int out_h, int out_w) {
    if (img.h <= 0 || img.w <= 0) throw DataError("resize: degenerate image");
    if (out_h <= 0 || out_w <= 0) throw DataError("resize: degenerate target");
    ImageBuffer out(out_h, out_w, img.c);
    const float sy = static_cast<float>(img.h) / out_h;
    const float sx = static_cast<float>(img.w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        float fy = (y + 0.5f) * sy - 0.5f;
        int y0 = static_cast<int>(std::floor(fy));
        float wy = fy - y0;
        int y1 = std::min(std::max(y0 + 1, 0), img.h - 1);
        y0 = std::min(std::max(y0, 0), img.h - 1);
        for (int x = 0; x < out_w; ++x) {
            float fx = (x + 0.5f) * sx - 0.5f;
            int x0 = static_cast<int>(std::floor(fx));
            float wx = fx - x0;
            int x1 = std::min(std::max(x0 + 1, 0), img.w - 1);
            x0 = std::min(std::max(x0, 0), img.w - 1);
            for (int ch = 0; ch < img.c; ++ch) {
                float top = img.at(y0, x0, ch) * (1 - wx) + img.at(y0, x1, ch) * wx;
                float bot = img.at(y1, x0, ch) * (1 - wx) + img.at(y1, x1, ch) * wx;
                out.at(y, x, ch) = top * (1 - wy) + bot * wy;
            }
        }
    }
    return out;
}

ImageBuffer to_grayscale(const ImageBuffer& img) {
    if (img.c == 1) return img;
    if (img.c != 3) throw DataError("to_grayscale: 1- or 3-channel image expected");
    ImageBuffer out(img.h, img.w, 1);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            out.at(y, x) = 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) +
                           0.114f * img.at(y, x, 2);
    return out;
}

}  // namespace cclap
