#include "cclap/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <queue>
#include <set>

#include <json.hpp>

#include "cclap/rng.hpp"
#include "cclap/text.hpp"

namespace cclap {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Masks
// ---------------------------------------------------------------------------

InpaintMask mask_from_image(const ImageBuffer& img) {
    InpaintMask m;
    m.h = img.h;
    m.w = img.w;
    m.m.resize(static_cast<size_t>(img.h) * img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) m.at(y, x) = img.at(y, x, 0) > 0.5f ? 1 : 0;
    return m;
}

ImageBuffer mask_to_image(const InpaintMask& mask) {
    ImageBuffer img(mask.h, mask.w, 1);
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x) img.at(y, x) = mask.at(y, x) ? 1.f : 0.f;
    return img;
}

// ---------------------------------------------------------------------------
// Resize and crop planning
// ---------------------------------------------------------------------------

ImageBuffer resize_short_side(const ImageBuffer& img, int target) {
    if (img.h <= 0 || img.w <= 0) throw DataError("resize_short_side: degenerate image");
    if (target < 1) throw DataError("resize_short_side: target must be >= 1");
    int short_side = std::min(img.h, img.w);
    int long_side = std::max(img.h, img.w);
    // round-half-up on the long side
    int new_long = static_cast<int>(std::floor(static_cast<double>(long_side) * target / short_side + 0.5));
    int nh = img.h <= img.w ? target : new_long;
    int nw = img.h <= img.w ? new_long : target;
    if (nh == img.h && nw == img.w) return img;
    return resize_bilinear(img, nh, nw);
}

std::vector<std::pair<int, int>> crop_plan(int width, int height, int window, int stride,
                                           double ratio_threshold) {
    if (std::min(width, height) != window)
        throw ContractError("crop_plan: short side must equal the window size");
    int long_side = std::max(width, height);
    double aspect = static_cast<double>(long_side) / window;
    bool horizontal = width >= height;

    std::vector<int> origins;
    if (aspect < ratio_threshold) {
        origins.push_back((long_side - window) / 2);  // centered, floor of half the slack
    } else {
        for (int o = 0; o + window <= long_side; o += stride) origins.push_back(o);
        int flush = long_side - window;
        if (origins.empty() || origins.back() != flush) origins.push_back(flush);
    }
    std::vector<std::pair<int, int>> out;
    for (int o : origins) out.emplace_back(horizontal ? o : 0, horizontal ? 0 : o);
    return out;
}

ImageBuffer crop(const ImageBuffer& img, int x, int y, int w, int h) {
    if (x < 0 || y < 0 || x + w > img.w || y + h > img.h) throw ContractError("crop: out of bounds");
    ImageBuffer out(h, w, img.c);
    for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx)
            for (int ch = 0; ch < img.c; ++ch) out.at(yy, xx, ch) = img.at(y + yy, x + xx, ch);
    return out;
}

// ---------------------------------------------------------------------------
// Fast marching inpainting (Telea)
// ---------------------------------------------------------------------------

namespace {

constexpr uint8_t kKnown = 0, kBand = 1, kInside = 2;
constexpr double kFar = 1e6;

struct HeapEntry {
    double t;
    int y, x;
    bool operator>(const HeapEntry& o) const { return t > o.t; }
};

using MinHeap = std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>>;

// Eikonal update from the two axis neighbors of one quadrant.
double solve_quadrant(double a, double b) {
    if (a >= kFar && b >= kFar) return kFar;
    if (a >= kFar) return b + 1.0;
    if (b >= kFar) return a + 1.0;
    if (std::abs(a - b) >= 1.0) return std::min(a, b) + 1.0;
    return (a + b + std::sqrt(2.0 - (a - b) * (a - b))) / 2.0;
}

double eikonal(const std::vector<double>& t, const std::vector<uint8_t>& flag, int h, int w,
               int y, int x) {
    auto tt = [&](int yy, int xx) -> double {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return kFar;
        return flag[static_cast<size_t>(yy) * w + xx] == kInside ? kFar
                                                                 : t[static_cast<size_t>(yy) * w + xx];
    };
    double best = kFar;
    best = std::min(best, solve_quadrant(tt(y - 1, x), tt(y, x - 1)));
    best = std::min(best, solve_quadrant(tt(y - 1, x), tt(y, x + 1)));
    best = std::min(best, solve_quadrant(tt(y + 1, x), tt(y, x - 1)));
    best = std::min(best, solve_quadrant(tt(y + 1, x), tt(y, x + 1)));
    return best;
}

// Distance field over the complement of `inside`, seeded at `seed_band`,
// limited to max_dist. Used for the level-set weights of known pixels.
std::vector<double> march_outward(const std::vector<uint8_t>& inside_flag, int h, int w,
                                  const std::vector<std::pair<int, int>>& seed_band,
                                  double max_dist) {
    std::vector<double> t(static_cast<size_t>(h) * w, kFar);
    std::vector<uint8_t> flag(static_cast<size_t>(h) * w, kInside);
    MinHeap heap;
    for (auto [y, x] : seed_band) {
        t[static_cast<size_t>(y) * w + x] = 0.0;
        flag[static_cast<size_t>(y) * w + x] = kBand;
        heap.push({0.0, y, x});
    }
    const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
    while (!heap.empty()) {
        auto [tv, y, x] = heap.top();
        heap.pop();
        size_t idx = static_cast<size_t>(y) * w + x;
        if (flag[idx] == kKnown) continue;
        flag[idx] = kKnown;
        if (tv > max_dist) continue;
        for (int k = 0; k < 4; ++k) {
            int ny = y + dy[k], nx = x + dx[k];
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            size_t nidx = static_cast<size_t>(ny) * w + nx;
            if (inside_flag[nidx] == kInside || flag[nidx] == kKnown) continue;
            double nt = eikonal(t, flag, h, w, ny, nx);
            if (nt < t[nidx]) {
                t[nidx] = nt;
                flag[nidx] = kBand;
                heap.push({nt, ny, nx});
            }
        }
    }
    return t;
}

}  // namespace

ImageBuffer inpaint_fmm(const ImageBuffer& img, const InpaintMask& mask, int radius) {
    if (mask.h != img.h || mask.w != img.w) throw DataError("inpaint: mask extents mismatch");
    if (radius < 1) throw ContractError("inpaint: radius must be >= 1");
    const int h = img.h, w = img.w, c = img.c;

    bool any_known = false, any_inside = false;
    for (uint8_t v : mask.m) (v ? any_inside : any_known) = true;
    if (!any_known) throw DataError("inpaint: mask covers the whole image");
    if (!any_inside) return img;

    ImageBuffer out = img;
    std::vector<uint8_t> flag(static_cast<size_t>(h) * w);
    std::vector<double> t(static_cast<size_t>(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            size_t i = static_cast<size_t>(y) * w + x;
            flag[i] = mask.at(y, x) ? kInside : kKnown;
            t[i] = mask.at(y, x) ? kFar : 0.0;
        }

    // boundary band: inside pixels with a known 4-neighbor
    const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
    std::vector<std::pair<int, int>> band;
    MinHeap heap;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!mask.at(y, x)) continue;
            for (int k = 0; k < 4; ++k) {
                int ny = y + dy[k], nx = x + dx[k];
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                if (!mask.at(ny, nx)) {
                    band.emplace_back(y, x);
                    break;
                }
            }
        }

    // Level-set values of known pixels near the boundary: negative distance
    // from the band, limited to the neighborhood radius.
    std::vector<double> t_out = march_outward(flag, h, w, band, radius + 1.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            size_t i = static_cast<size_t>(y) * w + x;
            if (flag[i] == kKnown && t_out[i] < kFar) t[i] = -t_out[i];
        }

    for (auto [y, x] : band) {
        size_t i = static_cast<size_t>(y) * w + x;
        flag[i] = kBand;
        t[i] = eikonal(t, flag, h, w, y, x);
        heap.push({t[i], y, x});
    }

    auto grad_t = [&](int y, int x) {
        auto tv = [&](int yy, int xx) -> double {
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) return kFar;
            size_t i = static_cast<size_t>(yy) * w + xx;
            return flag[i] == kInside ? kFar : t[i];
        };
        double c0 = t[static_cast<size_t>(y) * w + x];
        double gx, gy;
        double xm = tv(y, x - 1), xp = tv(y, x + 1);
        if (xm < kFar && xp < kFar)
            gx = (xp - xm) * 0.5;
        else if (xp < kFar)
            gx = xp - c0;
        else if (xm < kFar)
            gx = c0 - xm;
        else
            gx = 0.0;
        double ym = tv(y - 1, x), yp = tv(y + 1, x);
        if (ym < kFar && yp < kFar)
            gy = (yp - ym) * 0.5;
        else if (yp < kFar)
            gy = yp - c0;
        else if (ym < kFar)
            gy = c0 - ym;
        else
            gy = 0.0;
        return std::pair<double, double>(gy, gx);
    };

    std::vector<double> value(c);
    double last_popped = -kFar;
    while (!heap.empty()) {
        auto [tv, y, x] = heap.top();
        heap.pop();
        size_t idx = static_cast<size_t>(y) * w + x;
        if (flag[idx] == kKnown) continue;  // stale heap entry

        // fill order must be nondecreasing in the computed distance
        if (tv < last_popped - 1e-9) throw ContractError("inpaint: fill order regressed");
        last_popped = tv;

        auto [gty, gtx] = grad_t(y, x);
        std::fill(value.begin(), value.end(), 0.0);
        double wsum = 0.0;
        for (int ny = std::max(0, y - radius); ny <= std::min(h - 1, y + radius); ++ny)
            for (int nx = std::max(0, x - radius); nx <= std::min(w - 1, x + radius); ++nx) {
                size_t nidx = static_cast<size_t>(ny) * w + nx;
                if (flag[nidx] != kKnown) continue;
                double ry = y - ny, rx = x - nx;
                double len2 = ry * ry + rx * rx;
                if (len2 > static_cast<double>(radius) * radius || len2 == 0.0) continue;
                double len = std::sqrt(len2);
                double dir = std::abs(ry * gty + rx * gtx) / len;
                if (dir < 1e-6) dir = 1e-6;
                double dst = 1.0 / len2;
                double lev = 1.0 / (1.0 + std::abs(t[idx] - t[nidx]));
                double wgt = dir * dst * lev;

                for (int ch = 0; ch < c; ++ch) {
                    // first-order estimate: known value extrapolated along r
                    auto known_at = [&](int yy, int xx) -> std::optional<float> {
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return std::nullopt;
                        if (flag[static_cast<size_t>(yy) * w + xx] != kKnown) return std::nullopt;
                        return out.at(yy, xx, ch);
                    };
                    double gix = 0.0, giy = 0.0;
                    auto xm2 = known_at(ny, nx - 1), xp2 = known_at(ny, nx + 1);
                    if (xm2 && xp2) gix = (*xp2 - *xm2) * 0.5;
                    auto ym2 = known_at(ny - 1, nx), yp2 = known_at(ny + 1, nx);
                    if (ym2 && yp2) giy = (*yp2 - *ym2) * 0.5;
                    value[ch] += wgt * (out.at(ny, nx, ch) + gix * rx + giy * ry);
                }
                wsum += wgt;
            }
        for (int ch = 0; ch < c; ++ch) {
            float v = static_cast<float>(value[ch] / wsum);
            out.at(y, x, ch) = std::clamp(v, 0.f, 1.f);
        }
        flag[idx] = kKnown;

        for (int k = 0; k < 4; ++k) {
            int ny = y + dy[k], nx = x + dx[k];
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            size_t nidx = static_cast<size_t>(ny) * w + nx;
            if (flag[nidx] == kKnown) continue;
            double nt = eikonal(t, flag, h, w, ny, nx);
            if (nt < t[nidx]) {
                t[nidx] = nt;
                flag[nidx] = kBand;
                heap.push({nt, ny, nx});
            } else if (flag[nidx] == kInside) {
                t[nidx] = nt;
                flag[nidx] = kBand;
                heap.push({nt, ny, nx});
            }
        }
    }
    return out;
}

InpaintMask naive_text_mask(const ImageBuffer& img, double density_threshold) {
    // Coarse block heuristic: mark 16x16 blocks whose mean ink density is high.
    const int block = 16;
    InpaintMask m;
    m.h = img.h;
    m.w = img.w;
    m.m.assign(static_cast<size_t>(img.h) * img.w, 0);
    for (int by = 0; by < img.h; by += block)
        for (int bx = 0; bx < img.w; bx += block) {
            double ink = 0.0;
            int cnt = 0;
            for (int y = by; y < std::min(img.h, by + block); ++y)
                for (int x = bx; x < std::min(img.w, bx + block); ++x, ++cnt)
                    ink += 1.0 - img.at(y, x, 0);
            if (cnt > 0 && ink / cnt > density_threshold)
                for (int y = by; y < std::min(img.h, by + block); ++y)
                    for (int x = bx; x < std::min(img.w, bx + block); ++x) m.at(y, x) = 1;
        }
    return m;
}

// ---------------------------------------------------------------------------
// Caption normalization
// ---------------------------------------------------------------------------

namespace {

const std::string kTarget = "Chinese landscape painting";

std::vector<std::string> default_synonyms() {
    return {"oriental painting", "drawing", "painting of a landscape"};
}

struct Token {
    std::string word;   // lowercased
    std::string raw;    // original spelling
    std::string sep;    // separators following the word
};

std::vector<Token> lex(const std::string& text) {
    std::vector<Token> out;
    size_t i = 0;
    while (i < text.size()) {
        Token t;
        while (i < text.size() && std::isalnum(static_cast<unsigned char>(text[i]))) {
            t.raw.push_back(text[i]);
            t.word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
            ++i;
        }
        while (i < text.size() && !std::isalnum(static_cast<unsigned char>(text[i]))) {
            t.sep.push_back(text[i]);
            ++i;
        }
        if (t.raw.empty() && t.sep.empty()) break;
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

std::string caption_normalize(const std::string& text) {
    return caption_normalize(text, default_synonyms());
}

std::string caption_normalize(const std::string& text, const std::vector<std::string>& synonyms) {
    auto tokens = lex(text);
    auto target_words = split_words(kTarget);

    std::vector<std::vector<std::string>> phrases;
    for (const auto& p : synonyms) phrases.push_back(split_words(p));
    // longest first so "oriental painting" wins over any overlapping shorter phrase
    std::sort(phrases.begin(), phrases.end(),
              [](const auto& a, const auto& b) { return a.size() > b.size(); });

    auto match_at = [&](const std::vector<std::string>& phrase, size_t pos) {
        if (pos + phrase.size() > tokens.size()) return false;
        for (size_t k = 0; k < phrase.size(); ++k)
            if (tokens[pos + k].word != phrase[k]) return false;
        return true;
    };

    std::string out;
    size_t i = 0;
    bool replaced_any = false;
    while (i < tokens.size()) {
        // already-normalized text is copied verbatim (idempotence)
        if (match_at(target_words, i)) {
            for (size_t k = 0; k < target_words.size(); ++k) {
                out += tokens[i + k].raw;
                out += tokens[i + k].sep;
            }
            i += target_words.size();
            continue;
        }
        bool matched = false;
        for (const auto& phrase : phrases) {
            if (match_at(phrase, i)) {
                out += kTarget;
                out += tokens[i + phrase.size() - 1].sep;
                i += phrase.size();
                matched = true;
                replaced_any = true;
                break;
            }
        }
        if (!matched) {
            out += tokens[i].raw;
            out += tokens[i].sep;
            ++i;
        }
    }

    if (!replaced_any && out == text) return text;

    // article fix-up: "an Chinese" -> "a Chinese"
    auto fixed = lex(out);
    std::string result;
    for (size_t k = 0; k < fixed.size(); ++k) {
        if (fixed[k].word == "an" && k + 1 < fixed.size() && fixed[k + 1].word == "chinese")
            result += fixed[k].raw[0] == 'A' ? "A" : "a";
        else
            result += fixed[k].raw;
        result += fixed[k].sep;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace {

constexpr int kImg = 64;

void fill_rect(ImageBuffer& img, int x0, int y0, int x1, int y1, float tone) {
    for (int y = std::max(0, y0); y < std::min(img.h, y1); ++y)
        for (int x = std::max(0, x0); x < std::min(img.w, x1); ++x) img.at(y, x) = tone;
}

void draw_mountain(ImageBuffer& img, Rng& rng) {
    int ridges = 1 + rng.uniform_int(2);
    for (int r = 0; r < ridges; ++r) {
        int peak_x = 10 + rng.uniform_int(44);
        int peak_y = 6 + rng.uniform_int(12);
        int half_w = 14 + rng.uniform_int(14);
        int horizon = 38 + rng.uniform_int(6);
        float tone = 0.48f + 0.12f * static_cast<float>(rng.uniform());
        for (int x = std::max(0, peak_x - half_w); x < std::min(kImg, peak_x + half_w); ++x) {
            double frac = 1.0 - std::abs(x - peak_x) / static_cast<double>(half_w);
            int top = peak_y + static_cast<int>((horizon - peak_y) * (1.0 - frac));
            for (int y = top; y < horizon; ++y) img.at(y, x) = tone + 0.002f * (y - top);
        }
    }
}

void draw_river(ImageBuffer& img, Rng& rng) {
    int y0 = 46 + rng.uniform_int(10);
    int hw = 3 + rng.uniform_int(3);
    double amp = 1.0 + 2.0 * rng.uniform();
    double period = 18.0 + 14.0 * rng.uniform();
    for (int x = 0; x < kImg; ++x) {
        int cy = y0 + static_cast<int>(amp * std::sin(2 * 3.14159265 * x / period));
        for (int y = std::max(0, cy - hw); y <= std::min(kImg - 1, cy + hw); ++y)
            img.at(y, x) = 0.8f;
        if (cy - hw - 1 >= 0) img.at(cy - hw - 1, x) = 0.3f;
        if (cy + hw + 1 < kImg) img.at(cy + hw + 1, x) = 0.3f;
    }
}

void draw_bridge(ImageBuffer& img, Rng& rng) {
    int cx = 18 + rng.uniform_int(28);
    int span = 10 + rng.uniform_int(5);
    int base_y = 44 + rng.uniform_int(8);
    int rise = 6 + rng.uniform_int(3);
    for (int x = cx - span; x <= cx + span; ++x) {
        if (x < 0 || x >= kImg) continue;
        double frac = static_cast<double>(x - cx) / span;
        int arc_y = base_y - static_cast<int>(rise * std::sqrt(std::max(0.0, 1.0 - frac * frac)));
        for (int yy = arc_y; yy < std::min(kImg, arc_y + 3); ++yy) img.at(yy, x) = 0.15f;
    }
    fill_rect(img, cx - span, base_y - 1, cx - span + 2, base_y + 5, 0.15f);
    fill_rect(img, cx + span - 1, base_y - 1, cx + span + 1, base_y + 5, 0.15f);
}

void draw_building(ImageBuffer& img, Rng& rng) {
    int bw = 10 + rng.uniform_int(5);
    int bh = 8 + rng.uniform_int(5);
    int x0 = 6 + rng.uniform_int(kImg - bw - 12);
    int base = 44 + rng.uniform_int(10);
    fill_rect(img, x0, base - bh, x0 + bw, base, 0.3f);
    // gabled roof
    int roof_h = 4 + rng.uniform_int(2);
    int cx = x0 + bw / 2;
    for (int dyy = 0; dyy <= roof_h; ++dyy) {
        int half = (bw / 2 + 2) * (roof_h - dyy) / roof_h;
        for (int x = cx - half; x <= cx + half; ++x)
            if (x >= 0 && x < kImg && base - bh - dyy >= 0) img.at(base - bh - dyy, x) = 0.12f;
    }
}

void draw_stroke(ImageBuffer& img, double x0, double y0, double x1, double y1, float tone) {
    int steps = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
    for (int s = 0; s <= steps; ++s) {
        int x = static_cast<int>(std::lround(x0 + (x1 - x0) * s / steps));
        int y = static_cast<int>(std::lround(y0 + (y1 - y0) * s / steps));
        if (x >= 0 && x < kImg && y >= 0 && y < kImg) img.at(y, x) = tone;
    }
}

void draw_branch(ImageBuffer& img, Rng& rng, double x, double y, double angle, double len,
                 int depth) {
    if (depth <= 0 || len < 1.5) return;
    double x1 = x + len * std::sin(angle);
    double y1 = y - len * std::cos(angle);
    draw_stroke(img, x, y, x1, y1, 0.18f);
    double spread = 0.5 + 0.3 * rng.uniform();
    draw_branch(img, rng, x1, y1, angle - spread, len * 0.65, depth - 1);
    draw_branch(img, rng, x1, y1, angle + spread, len * 0.65, depth - 1);
}

void draw_tree(ImageBuffer& img, Rng& rng) {
    int trees = 2 + rng.uniform_int(2);
    for (int t = 0; t < trees; ++t) {
        int x = 8 + rng.uniform_int(kImg - 16);
        int base = 46 + rng.uniform_int(12);
        double lean = 0.3 * (rng.uniform() - 0.5);
        draw_branch(img, rng, x, base, lean, 7.0 + 3.0 * rng.uniform(), 4);
    }
}

void draw_man(ImageBuffer& img, Rng& rng) {
    int x = 8 + rng.uniform_int(kImg - 16);
    int base = 50 + rng.uniform_int(8);
    for (int y = base - 5; y < base; ++y)
        for (int xx = x; xx < x + 2; ++xx)
            if (y >= 0) img.at(y, xx) = 0.05f;
    if (base - 6 >= 0) {
        img.at(base - 6, x) = 0.05f;
        img.at(base - 6, x + 1) = 0.05f;
    }
}

const char* kPhrasePool[6][3] = {
    {"a mountain", "a tall mountain", "a misty mountain"},
    {"a river", "a calm river", "a winding river"},
    {"a tree", "an old tree", "a pine tree"},
    {"a bridge", "a small bridge", "a stone bridge"},
    {"a building", "an old building", "a small building"},
    {"a man", "a lone man", "a lone man"},
};

}  // namespace

std::vector<PaintingRecord> synth_corpus(int n, uint64_t seed, const std::string& out_dir,
                                         double held_out_fraction) {
    if (n < 1) throw DataError("synth_corpus: n must be >= 1");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw IoError("synth_corpus: cannot create " + out_dir);

    // element sampling weights; "man" is rare by construction
    const double weights[6] = {0.20, 0.20, 0.20, 0.18, 0.18, 0.04};
    const int hold_mod = held_out_fraction > 0 ? std::max(2, static_cast<int>(1.0 / held_out_fraction))
                                               : 0;

    std::vector<PaintingRecord> records;
    records.reserve(n);
    for (int i = 0; i < n; ++i) {
        Rng rng(Rng::mix(seed, static_cast<uint64_t>(i)));

        // 1 or 2 distinct elements per scene
        int count = rng.uniform() < 0.7 ? 1 : 2;
        std::set<int> chosen;
        while (static_cast<int>(chosen.size()) < count) {
            double u = rng.uniform();
            double acc = 0.0;
            for (int e = 0; e < 6; ++e) {
                acc += weights[e];
                if (u < acc) {
                    chosen.insert(e);
                    break;
                }
            }
        }

        ImageBuffer img(kImg, kImg, 1, 0.9f + 0.04f * (static_cast<float>(rng.uniform()) - 0.5f));
        if (chosen.count(0)) draw_mountain(img, rng);
        if (chosen.count(1)) draw_river(img, rng);
        if (chosen.count(3)) draw_bridge(img, rng);
        if (chosen.count(4)) draw_building(img, rng);
        if (chosen.count(2)) draw_tree(img, rng);
        if (chosen.count(5)) draw_man(img, rng);

        std::string caption = "a Chinese landscape painting of ";
        bool first = true;
        PaintingRecord rec;
        for (int e : chosen) {
            if (!first) caption += " and ";
            caption += kPhrasePool[e][rng.uniform_int(3)];
            first = false;
            rec.elements.push_back(element_names()[e]);
        }

        char name[32];
        std::snprintf(name, sizeof(name), "img_%05d.png", i);
        std::string img_path = (fs::path(out_dir) / name).string();
        write_png(img_path, img);

        rec.image_path = img_path;
        rec.caption = caption;
        rec.source_id = name;
        rec.held_out = hold_mod > 0 && (i % hold_mod) == hold_mod - 1;

        ordered_json side;
        side["elements"] = rec.elements;
        {
            std::string sp = img_path + ".json";
            std::ofstream os(sp + ".tmp");
            os << side.dump() << "\n";
            os.close();
            fs::rename(sp + ".tmp", sp, ec);
            if (ec) throw IoError("synth_corpus: sidecar rename failed");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

void write_manifest(const std::string& path, const std::vector<PaintingRecord>& records) {
    std::set<std::string> seen;
    for (const auto& r : records) {
        if (r.caption.empty()) throw DataError("manifest: empty caption for " + r.image_path);
        if (!seen.insert(r.image_path).second)
            throw DataError("manifest: duplicate image_path " + r.image_path);
    }
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw IoError("manifest: cannot open for write " + tmp);
        for (const auto& r : records) {
            ordered_json j;
            j["image_path"] = r.image_path;
            j["caption"] = r.caption;
            j["source_id"] = r.source_id;
            j["crop_origin"] = {r.crop_x, r.crop_y};
            j["split"] = r.held_out ? "held_out" : "train";
            if (!r.elements.empty()) j["elements"] = r.elements;
            os << j.dump() << "\n";
        }
        if (!os) throw IoError("manifest: write failed " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("manifest: rename failed: " + ec.message());
}

std::vector<PaintingRecord> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("manifest: cannot open " + path);
    std::vector<PaintingRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ordered_json j = ordered_json::parse(line, nullptr, false);
        if (j.is_discarded()) throw DataError("manifest: bad JSON line in " + path);
        PaintingRecord r;
        r.image_path = j.at("image_path").get<std::string>();
        r.caption = j.at("caption").get<std::string>();
        r.source_id = j.value("source_id", "");
        if (j.contains("crop_origin")) {
            r.crop_x = j["crop_origin"][0].get<int>();
            r.crop_y = j["crop_origin"][1].get<int>();
        }
        r.held_out = j.value("split", "train") == "held_out";
        if (j.contains("elements")) r.elements = j["elements"].get<std::vector<std::string>>();
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace cclap
