#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "cclap/dataset.hpp"
#include "cclap/image.hpp"
#include "cclap/text.hpp"

using namespace cclap;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / ("cclap_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("resize_short_side fixtures") {
    SUBCASE("1024x2048 -> 512x1024") {
        ImageBuffer img(1024, 2048, 1);
        auto out = resize_short_side(img, 512);
        CHECK(out.h == 512);
        CHECK(out.w == 1024);
    }
    SUBCASE("900x400 -> 1152x512 (long side rounds half-up)") {
        ImageBuffer img(900, 400, 1);
        auto out = resize_short_side(img, 512);
        CHECK(out.h == 1152);
        CHECK(out.w == 512);
    }
    SUBCASE("already at target is returned unchanged") {
        ImageBuffer img(512, 700, 1, 0.25f);
        auto out = resize_short_side(img, 512);
        CHECK(out.h == 512);
        CHECK(out.w == 700);
        for (size_t i = 0; i < img.px.size(); ++i) CHECK(out.px[i] == img.px[i]);
    }
    SUBCASE("degenerate target rejected") {
        ImageBuffer img(10, 10, 1);
        CHECK_THROWS_AS(resize_short_side(img, 0), DataError);
    }
}

TEST_CASE("crop_plan fixtures") {
    SUBCASE("square image: single window at the origin") {
        auto plan = crop_plan(512, 512);
        REQUIRE(plan.size() == 1);
        CHECK(plan[0] == std::pair<int, int>{0, 0});
    }
    SUBCASE("700x512: below threshold, centered at floor(188/2) = 94") {
        auto plan = crop_plan(700, 512);
        REQUIRE(plan.size() == 1);
        CHECK(plan[0] == std::pair<int, int>{94, 0});
    }
    SUBCASE("1200x512: strided plus flush final window") {
        auto plan = crop_plan(1200, 512);
        std::vector<int> xs;
        for (auto [x, y] : plan) {
            xs.push_back(x);
            CHECK(y == 0);
        }
        CHECK(xs == std::vector<int>{0, 256, 512, 688});
    }
    SUBCASE("tall image offsets along y") {
        auto plan = crop_plan(512, 900);  // aspect 1.76: strided windows plus flush
        REQUIRE(plan.size() == 3);
        CHECK(plan[0] == std::pair<int, int>{0, 0});
        CHECK(plan[1] == std::pair<int, int>{0, 256});
        CHECK(plan[2] == std::pair<int, int>{0, 388});
    }
    SUBCASE("short side must equal the window") {
        CHECK_THROWS_AS(crop_plan(500, 700), ContractError);
    }
    SUBCASE("coverage: every long-axis pixel falls inside some window") {
        for (int len : {512, 760, 770, 1024, 1500, 2311}) {
            auto plan = crop_plan(len, 512);
            std::vector<bool> covered(len, false);
            for (auto [x, y] : plan)
                for (int i = x; i < x + 512; ++i) covered[i] = true;
            int n_cov = 0;
            for (bool b : covered) n_cov += b;
            if (static_cast<double>(len) / 512 >= 1.5) {
                CHECK(n_cov == len);
            } else {
                CHECK(n_cov == 512);  // single centered window
            }
        }
    }
}

TEST_CASE("crop extracts the exact window") {
    ImageBuffer img(4, 6, 1);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x) img.at(y, x) = y * 10.f + x;
    auto out = crop(img, 2, 1, 3, 2);
    CHECK(out.h == 2);
    CHECK(out.w == 3);
    CHECK(out.at(0, 0) == 12.f);
    CHECK(out.at(1, 2) == 24.f);
    CHECK_THROWS_AS(crop(img, 4, 0, 3, 2), ContractError);
}

TEST_CASE("inpaint_fmm behavior") {
    SUBCASE("empty mask returns a copy") {
        ImageBuffer img(8, 8, 1);
        for (size_t i = 0; i < img.px.size(); ++i) img.px[i] = i / 63.f;
        InpaintMask mask{8, 8, std::vector<uint8_t>(64, 0)};
        auto out = inpaint_fmm(img, mask);
        for (size_t i = 0; i < img.px.size(); ++i) CHECK(out.px[i] == img.px[i]);
    }

    SUBCASE("constant image: hole refilled with the constant") {
        ImageBuffer img(16, 16, 1, 0.6f);
        InpaintMask mask{16, 16, std::vector<uint8_t>(256, 0)};
        for (int y = 6; y < 10; ++y)
            for (int x = 6; x < 10; ++x) mask.at(y, x) = 1;
        auto out = inpaint_fmm(img, mask);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) CHECK(out.at(y, x) == doctest::Approx(0.6f).epsilon(1e-4));
    }

    SUBCASE("linear gradient: hole recovered within 0.05") {
        ImageBuffer img(32, 32, 1);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) img.at(y, x) = x / 31.f;
        ImageBuffer truth = img;
        InpaintMask mask{32, 32, std::vector<uint8_t>(32 * 32, 0)};
        for (int y = 13; y < 19; ++y)
            for (int x = 13; x < 19; ++x) {
                mask.at(y, x) = 1;
                img.at(y, x) = 0.f;  // destroy the hole
            }
        auto out = inpaint_fmm(img, mask);
        for (int y = 13; y < 19; ++y)
            for (int x = 13; x < 19; ++x)
                CHECK(std::abs(out.at(y, x) - truth.at(y, x)) <= 0.05);
    }

    SUBCASE("unmasked pixels bit-identical") {
        Rng rng(41);
        ImageBuffer img(16, 16, 1);
        for (auto& v : img.px) v = static_cast<float>(rng.uniform());
        InpaintMask mask{16, 16, std::vector<uint8_t>(256, 0)};
        for (int y = 4; y < 8; ++y)
            for (int x = 9; x < 13; ++x) mask.at(y, x) = 1;
        auto out = inpaint_fmm(img, mask);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                if (!mask.at(y, x)) CHECK(out.at(y, x) == img.at(y, x));
    }

    SUBCASE("all-ones mask rejected") {
        ImageBuffer img(8, 8, 1, 0.5f);
        InpaintMask mask{8, 8, std::vector<uint8_t>(64, 1)};
        CHECK_THROWS_AS(inpaint_fmm(img, mask), DataError);
    }

    SUBCASE("mask/image size mismatch rejected") {
        ImageBuffer img(8, 8, 1);
        InpaintMask mask{4, 4, std::vector<uint8_t>(16, 0)};
        CHECK_THROWS_AS(inpaint_fmm(img, mask), DataError);
    }
}

TEST_CASE("mask image round trip") {
    InpaintMask mask{2, 3, {0, 1, 0, 1, 1, 0}};
    auto img = mask_to_image(mask);
    CHECK(img.h == 2);
    CHECK(img.w == 3);
    auto back = mask_from_image(img);
    CHECK(back.m == mask.m);
}

TEST_CASE("caption_normalize fixtures") {
    CHECK(caption_normalize("an oriental painting of hills") ==
          "a Chinese landscape painting of hills");
    CHECK(caption_normalize("a drawing of two rivers") ==
          "a Chinese landscape painting of two rivers");
    CHECK(caption_normalize("a painting of a landscape with mist") ==
          "a Chinese landscape painting with mist");
    CHECK(caption_normalize("a Chinese landscape painting of a tree") ==
          "a Chinese landscape painting of a tree");
    CHECK(caption_normalize("mountains at dawn") == "mountains at dawn");
    CHECK(caption_normalize("") == "");
}

TEST_CASE("caption_normalize is idempotent on 1000 grammar strings") {
    const std::vector<std::string> heads = {"a drawing", "an oriental painting",
                                            "a painting of a landscape",
                                            "a Chinese landscape painting", "a sketch"};
    const std::vector<std::string> tails = {"of a mountain", "of a calm river and a bridge",
                                            "with mist",     "of an old tree",
                                            "near a village", ""};
    Rng rng(42);
    for (int k = 0; k < 1000; ++k) {
        std::string s = heads[rng.uniform_int(static_cast<int>(heads.size()))];
        std::string tail = tails[rng.uniform_int(static_cast<int>(tails.size()))];
        if (!tail.empty()) s += " " + tail;
        std::string once = caption_normalize(s);
        CHECK(caption_normalize(once) == once);
    }
}

TEST_CASE("synthetic corpus determinism and labels") {
    auto d1 = scratch_dir("synth_a");
    auto d2 = scratch_dir("synth_b");
    auto r1 = synth_corpus(40, 99, d1.string());
    auto r2 = synth_corpus(40, 99, d2.string());
    REQUIRE(r1.size() == 40);
    REQUIRE(r2.size() == 40);

    SUBCASE("same seed gives byte-identical images and captions") {
        for (int i = 0; i < 40; ++i) {
            CHECK(r1[i].caption == r2[i].caption);
            CHECK(r1[i].elements == r2[i].elements);
            std::ifstream a(r1[i].image_path, std::ios::binary);
            std::ifstream b(r2[i].image_path, std::ios::binary);
            std::string sa((std::istreambuf_iterator<char>(a)), {});
            std::string sb((std::istreambuf_iterator<char>(b)), {});
            CHECK(sa == sb);
            CHECK(!sa.empty());
        }
    }

    SUBCASE("caption mentions exactly the sidecar elements") {
        for (const auto& r : r1) {
            auto words = split_words(r.caption);
            std::set<std::string> present(words.begin(), words.end());
            for (const auto& e : element_names()) {
                bool labelled =
                    std::find(r.elements.begin(), r.elements.end(), e) != r.elements.end();
                CHECK(present.count(e) == static_cast<size_t>(labelled));
            }
            CHECK(!r.elements.empty());
            CHECK(r.elements.size() <= 2);
        }
    }

    SUBCASE("held-out fraction is honored") {
        int held = 0;
        for (const auto& r : r1) held += r.held_out;
        CHECK(held == 4);
    }

    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("man appears in well under 10% of a larger corpus") {
    auto d = scratch_dir("synth_man");
    auto recs = synth_corpus(400, 7, d.string());
    int man = 0;
    for (const auto& r : recs)
        man += std::find(r.elements.begin(), r.elements.end(), "man") != r.elements.end();
    CHECK(static_cast<double>(man) / recs.size() < 0.10);
    fs::remove_all(d);
}

TEST_CASE("manifest round trip") {
    auto d = scratch_dir("manifest");
    PaintingRecord a{"a.png", "a Chinese landscape painting of a tree", "src1", 10, 20, false,
                     {"tree"}};
    PaintingRecord b{"b.png", "a Chinese landscape painting of a river", "src2", 0, 0, true,
                     {"river"}};
    std::string path = (d / "m.jsonl").string();

    write_manifest(path, {a, b});
    auto back = read_manifest(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].image_path == "a.png");
    CHECK(back[0].caption == a.caption);
    CHECK(back[0].source_id == "src1");
    CHECK(back[0].crop_x == 10);
    CHECK(back[0].crop_y == 20);
    CHECK(back[0].held_out == false);
    CHECK(back[0].elements == std::vector<std::string>{"tree"});
    CHECK(back[1].held_out == true);

    SUBCASE("duplicate image_path rejected") {
        CHECK_THROWS_AS(write_manifest(path, {a, a}), DataError);
    }
    SUBCASE("empty caption rejected") {
        PaintingRecord bad = a;
        bad.caption = "";
        CHECK_THROWS_AS(write_manifest(path, {bad}), DataError);
    }
    SUBCASE("empty record list writes an empty file") {
        std::string p2 = (d / "empty.jsonl").string();
        write_manifest(p2, {});
        CHECK(read_manifest(p2).empty());
    }
    SUBCASE("missing file raises IoError") {
        CHECK_THROWS_AS(read_manifest((d / "nope.jsonl").string()), IoError);
    }
    fs::remove_all(d);
}

TEST_CASE("naive text mask flags only dense dark blocks") {
    ImageBuffer img(64, 64, 1, 0.9f);  // light paper
    for (int y = 0; y < 16; ++y)
        for (int x = 48; x < 64; ++x) img.at(y, x) = 0.05f;  // dark corner block
    auto mask = naive_text_mask(img);
    CHECK(mask.h == 64);
    CHECK(mask.w == 64);
    CHECK(mask.at(4, 56));    // inside the dark block
    CHECK(!mask.at(40, 10));  // plain paper
}
