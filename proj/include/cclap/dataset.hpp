#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cclap/image.hpp"

namespace cclap {

// One line of the dataset manifest.
struct PaintingRecord {
    std::string image_path;
    std::string caption;
    std::string source_id;
    int crop_x = 0, crop_y = 0;
    bool held_out = false;
    std::vector<std::string> elements;  // sidecar ground truth (synthetic corpus)
};

inline const std::vector<std::string>& element_names() {
    static const std::vector<std::string> names = {"mountain", "river", "tree",
                                                   "bridge",   "building", "man"};
    return names;
}

// Binary raster, 1 = pixel to fill.
struct InpaintMask {
    int h = 0, w = 0;
    std::vector<uint8_t> m;

    bool at(int y, int x) const { return m[static_cast<size_t>(y) * w + x] != 0; }
    uint8_t& at(int y, int x) { return m[static_cast<size_t>(y) * w + x]; }
};

InpaintMask mask_from_image(const ImageBuffer& img);  // 0/255 PNG convention
ImageBuffer mask_to_image(const InpaintMask& mask);

// Scale so the short side equals target; long side rounds half-up.
ImageBuffer resize_short_side(const ImageBuffer& img, int target);

// Window origins along the long axis: centered single window below the
// aspect-ratio threshold, strided windows plus a flush final window otherwise.
std::vector<std::pair<int, int>> crop_plan(int width, int height, int window = 512,
                                           int stride = 256, double ratio_threshold = 1.5);

ImageBuffer crop(const ImageBuffer& img, int x, int y, int w, int h);

// Telea-style fast marching inpainting.
ImageBuffer inpaint_fmm(const ImageBuffer& img, const InpaintMask& mask, int radius = 5);

// High-ink-density block heuristic for seal/colophon masks. Coarse by design;
// prefer supplied masks when available.
InpaintMask naive_text_mask(const ImageBuffer& img, double density_threshold = 0.55);

// Replace synonym phrases with "Chinese landscape painting"; idempotent.
std::string caption_normalize(const std::string& text);
std::string caption_normalize(const std::string& text, const std::vector<std::string>& synonyms);

// Procedural synthetic corpus. Writes PNGs plus per-image label sidecars and
// returns the records (also written as a manifest by the caller).
std::vector<PaintingRecord> synth_corpus(int n, uint64_t seed, const std::string& out_dir,
                                         double held_out_fraction = 0.1);

// JSON-lines manifest, one record per line, stable field order.
void write_manifest(const std::string& path, const std::vector<PaintingRecord>& records);
std::vector<PaintingRecord> read_manifest(const std::string& path);

}  // namespace cclap
