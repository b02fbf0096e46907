#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cclap/checkpoint.hpp"
#include "cclap/config.hpp"
#include "cclap/dataset.hpp"
#include "cclap/evaluation.hpp"
#include "cclap/train.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace cclap;

namespace {

void write_text_atomic(const std::string& path, const std::string& body) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw IoError("cannot open " + tmp);
        os << body;
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed for " + path + ": " + ec.message());
}

void merge_sections(const std::string& path, const TensorMap& prefixed) {
    TensorMap all;
    if (fs::exists(path)) all = load_checkpoint(path);
    for (const auto& [k, v] : prefixed) all[k] = v;
    save_checkpoint(path, all);
}

RunConfig config_from(const std::string& config_path, const std::vector<std::string>& overrides) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& kv : overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
        apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

std::vector<PaintingRecord> records_from(const RunConfig& cfg) {
    if (cfg.manifest.empty()) throw ConfigError("config: manifest path required for training");
    return read_manifest(cfg.manifest);
}

std::ofstream open_log(const std::string& path) {
    std::ofstream os;
    if (!path.empty()) {
        os.open(path);
        if (!os) throw IoError("cannot open log " + path);
    }
    return os;
}

// dataset build: resize -> crop windows -> inpaint -> normalized caption
std::vector<PaintingRecord> build_records(const std::string& in_dir, const std::string& mask_dir,
                                          const std::string& out_dir, int window, int stride,
                                          bool naive_masks) {
    std::vector<fs::path> sources;
    for (const auto& e : fs::directory_iterator(in_dir))
        if (e.path().extension() == ".png") sources.push_back(e.path());
    std::sort(sources.begin(), sources.end());
    if (sources.empty()) throw DataError("dataset build: no .png inputs in " + in_dir);
    fs::create_directories(out_dir);

    std::vector<PaintingRecord> records;
    for (const auto& src : sources) {
        ImageBuffer img = to_grayscale(read_png(src.string()));
        img = resize_short_side(img, window);

        std::string caption = "a Chinese landscape painting";
        fs::path cap_path = src;
        cap_path.replace_extension(".txt");
        if (fs::exists(cap_path)) {
            std::ifstream is(cap_path);
            std::getline(is, caption);
            if (caption.empty()) throw DataError("dataset build: empty caption in " + cap_path.string());
        }
        caption = caption_normalize(caption);

        ImageBuffer mask_img;
        bool has_mask = false;
        if (!mask_dir.empty()) {
            fs::path mp = fs::path(mask_dir) / src.filename();
            if (fs::exists(mp)) {
                mask_img = resize_bilinear(to_grayscale(read_png(mp.string())), img.h, img.w);
                has_mask = true;
            }
        }
        if (!has_mask && naive_masks) {
            mask_img = mask_to_image(naive_text_mask(img));
            has_mask = true;
        }

        for (auto [x, y] : crop_plan(img.w, img.h, window, stride)) {
            ImageBuffer tile = crop(img, x, y, window, window);
            if (has_mask) {
                InpaintMask m = mask_from_image(crop(mask_img, x, y, window, window));
                bool any = false;
                for (uint8_t v : m.m) any |= v != 0;
                if (any) tile = inpaint_fmm(tile, m);
            }
            PaintingRecord r;
            r.source_id = src.filename().string();
            r.crop_x = x;
            r.crop_y = y;
            r.caption = caption;
            std::string stem = src.stem().string();
            r.image_path = (fs::path(out_dir) /
                            (stem + "_" + std::to_string(x) + "_" + std::to_string(y) + ".png"))
                               .string();
            write_png(r.image_path, tile);
            records.push_back(std::move(r));
        }
    }
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
        return std::tie(a.source_id, a.crop_x, a.crop_y) < std::tie(b.source_id, b.crop_x, b.crop_y);
    });
    return records;
}

void warn_oov(const std::string& prompt, const Vocab& vocab) {
    for (const auto& w : split_words(prompt))
        if (vocab.lookup(w) == 1)
            std::cerr << "warning: '" << w << "' is out of vocabulary, using <unk>\n";
}

void write_metadata(const std::string& png_path, const std::string& prompt, uint64_t seed,
                    int steps, const std::string& style_ref = "") {
    ordered_json meta;
    meta["prompt"] = prompt;
    meta["seed"] = seed;
    meta["steps"] = steps;
    if (!style_ref.empty()) meta["style_ref"] = style_ref;
    write_text_atomic(png_path + ".json", meta.dump(2) + "\n");
}

int run(int argc, char** argv) {
    CLI::App app{"Controllable Chinese landscape painting pipeline"};
    app.require_subcommand(1);

    std::string config_path, ckpt_path, log_path, out_path;
    std::vector<std::string> overrides;

    // ---- dataset ----
    auto* dataset = app.add_subcommand("dataset", "Corpus construction");
    dataset->require_subcommand(1);

    auto* synth = dataset->add_subcommand("synth", "Render a synthetic corpus");
    int synth_n = 2000;
    uint64_t synth_seed = 1234;
    std::string synth_out;
    double held_frac = 0.1;
    synth->add_option("--n", synth_n, "Number of images");
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--held-out-fraction", held_frac, "Validation split fraction");
    synth->callback([&] {
        auto records = synth_corpus(synth_n, synth_seed, synth_out, held_frac);
        write_manifest((fs::path(synth_out) / "manifest.jsonl").string(), records);
        std::cout << records.size() << " records -> " << synth_out << "/manifest.jsonl\n";
    });

    auto* build = dataset->add_subcommand("build", "Resize, crop, inpaint, normalize captions");
    std::string build_in, build_masks, build_out;
    int window = 512, stride = 256;
    bool naive_masks = false;
    build->add_option("--in", build_in, "Source image directory")->required();
    build->add_option("--masks", build_masks, "Mask directory (PNG, 0/255, by filename)");
    build->add_option("--out", build_out, "Output directory")->required();
    build->add_option("--window", window, "Crop window");
    build->add_option("--stride", stride, "Crop stride");
    build->add_flag("--naive-masks", naive_masks, "Fall back to the ink-density mask heuristic");
    build->callback([&] {
        auto records = build_records(build_in, build_masks, build_out, window, stride, naive_masks);
        write_manifest((fs::path(build_out) / "manifest.jsonl").string(), records);
        std::cout << records.size() << " records -> " << build_out << "/manifest.jsonl\n";
    });

    // ---- train ----
    auto* train = app.add_subcommand("train", "Training stages");
    train->require_subcommand(1);
    for (auto* sc : {train->add_subcommand("ae", "Latent autoencoder"),
                     train->add_subcommand("ldm", "Latent diffusion + text conditioning"),
                     train->add_subcommand("style", "Style aggregator"),
                     train->add_subcommand("probe", "Element probe")}) {
        sc->add_option("--config", config_path, "JSON config");
        sc->add_option("--ckpt", ckpt_path, "Checkpoint to create or extend")->required();
        sc->add_option("--log", log_path, "JSON-lines training log");
        sc->add_option("--set", overrides, "key=value config override");
    }

    train->get_subcommand("ae")->callback([&] {
        RunConfig cfg = config_from(config_path, overrides);
        auto log = open_log(log_path);
        TensorMap out;
        auto stats = train_autoencoder(records_from(cfg), cfg, out, log ? &log : nullptr);
        merge_sections(ckpt_path, out);
        std::cout << "held_out_mae " << stats.held_out_mae << "\n";
    });
    train->get_subcommand("ldm")->callback([&] {
        RunConfig cfg = config_from(config_path, overrides);
        auto log = open_log(log_path);
        TensorMap out = load_checkpoint(ckpt_path);  // needs the ae section
        Vocab vocab;
        auto stats = train_ldm(records_from(cfg), cfg, out, vocab, log ? &log : nullptr, ckpt_path);
        merge_sections(ckpt_path, out);
        save_vocab(ckpt_path + ".vocab.json", vocab);
        std::cout << "first100 " << stats.first100_avg << " last100 " << stats.last100_avg << "\n";
    });
    train->get_subcommand("style")->callback([&] {
        RunConfig cfg = config_from(config_path, overrides);
        auto log = open_log(log_path);
        TensorMap out;
        auto stats = train_style(records_from(cfg), cfg, out, log ? &log : nullptr);
        merge_sections(ckpt_path, out);
        std::cout << "first100 " << stats.first100_avg << " last100 " << stats.last100_avg << "\n";
    });
    train->get_subcommand("probe")->callback([&] {
        RunConfig cfg = config_from(config_path, overrides);
        ProbeNet<float> net;
        auto metrics = train_probe(net, records_from(cfg), cfg.seed, cfg.probe_epochs);
        TensorMap out;
        save_probe(net, out);
        merge_sections(ckpt_path, out);
        ordered_json j;
        for (size_t e = 0; e < element_names().size(); ++e)
            j[element_names()[e]] = metrics.accuracy[e];
        j["min_accuracy"] = metrics.min_accuracy;
        std::cout << j.dump(2) << "\n";
    });

    // ---- generate / stylize / pipeline ----
    auto* gen = app.add_subcommand("generate", "Text to painting");
    std::string prompt;
    uint64_t gen_seed = 0;
    int steps = 0;
    gen->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
    gen->add_option("--prompt", prompt, "Text prompt")->required();
    gen->add_option("--seed", gen_seed, "Sampling seed");
    gen->add_option("--steps", steps, "Sampling steps (must match the trained schedule)");
    gen->add_option("--out", out_path, "Output PNG")->required();
    gen->callback([&] {
        Pipeline p = Pipeline::load(ckpt_path);
        if (steps != 0 && steps != p.sched.T)
            throw ConfigError("generate: checkpoint was trained with " + std::to_string(p.sched.T) +
                              " steps");
        warn_oov(prompt, p.vocab);
        write_png(out_path, p.generate(prompt, gen_seed));
        write_metadata(out_path, prompt, gen_seed, p.sched.T);
        std::cout << out_path << "\n";
    });

    auto* sty = app.add_subcommand("stylize", "Style transfer");
    std::string content_path, style_path;
    sty->add_option("--content", content_path, "Content PNG")->required();
    sty->add_option("--style", style_path, "Style reference PNG")->required();
    sty->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
    sty->add_option("--out", out_path, "Output PNG")->required();
    sty->callback([&] {
        Pipeline p = Pipeline::load(ckpt_path);
        ImageBuffer content = fit_to_geometry(read_png(content_path));
        ImageBuffer style_ref = fit_to_geometry(read_png(style_path));
        write_png(out_path, p.stylize(content, style_ref));
        std::cout << out_path << "\n";
    });

    auto* pipe = app.add_subcommand("pipeline", "Generate then stylize");
    pipe->add_option("--ckpt", ckpt_path, "Checkpoint")->required();
    pipe->add_option("--prompt", prompt, "Text prompt")->required();
    pipe->add_option("--style-ref", style_path, "Style reference PNG")->required();
    pipe->add_option("--seed", gen_seed, "Sampling seed");
    pipe->add_option("--out", out_path, "Output PNG")->required();
    pipe->callback([&] {
        Pipeline p = Pipeline::load(ckpt_path);
        warn_oov(prompt, p.vocab);
        ImageBuffer content = p.generate(prompt, gen_seed);
        ImageBuffer style_ref = fit_to_geometry(read_png(style_path));
        write_png(out_path, p.stylize(content, style_ref));
        write_metadata(out_path, prompt, gen_seed, p.sched.T, style_path);
        std::cout << out_path << "\n";
    });

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "Evaluation arithmetic");
    ev->require_subcommand(1);

    auto* turing = ev->add_subcommand("turing", "Judged-real proportion");
    EvalTally tally;
    turing->add_option("--nr", tally.n_real, "Count judged real")->required();
    turing->add_option("--nv", tally.n_vol, "Volunteers")->required();
    turing->add_option("--ni", tally.n_images, "Images per method")->required();
    turing->callback([&] { std::cout << format_proportion(turing_proportion(tally)) << "\n"; });

    auto* prefs = ev->add_subcommand("prefs", "Preference tally");
    std::string ballots_path, methods_csv = "cclap,baseline,human";
    prefs->add_option("--ballots", ballots_path, "CSV group_id,metric,method")->required();
    prefs->add_option("--methods", methods_csv, "Comma-separated method names");
    prefs->callback([&] {
        std::vector<std::string> methods;
        std::stringstream ss(methods_csv);
        std::string m;
        while (std::getline(ss, m, ',')) methods.push_back(m);
        auto table = preference_tally(read_ballots_csv(ballots_path), methods);
        ordered_json j;
        for (const auto& [metric, row] : table)
            for (const auto& [method, frac] : row) j[metric][method] = frac;
        std::cout << j.dump(2) << "\n";
    });

    auto* probe = ev->add_subcommand("probe", "Element precision/recall on generated images");
    std::string probe_dir, labels_path;
    probe->add_option("--ckpt", ckpt_path, "Checkpoint with a probe section")->required();
    probe->add_option("--dir", probe_dir, "Directory of PNGs")->required();
    probe->add_option("--labels", labels_path, "JSON lines: {\"image\":..., \"elements\":[...]}")
        ->required();
    probe->callback([&] {
        ProbeNet<float> net;
        load_probe(net, load_checkpoint(ckpt_path));
        std::vector<ImageBuffer> images;
        std::vector<std::vector<std::string>> requested;
        std::ifstream is(labels_path);
        if (!is) throw IoError("cannot open " + labels_path);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            ordered_json j = ordered_json::parse(line, nullptr, false);
            if (j.is_discarded()) throw DataError("labels: bad JSON line");
            ImageBuffer img = read_png((fs::path(probe_dir) / j.at("image").get<std::string>()).string());
            images.push_back(img.c == 1 ? img : to_grayscale(img));
            requested.push_back(j.at("elements").get<std::vector<std::string>>());
        }
        auto m = content_probe(net, images, requested);
        ordered_json j;
        for (size_t e = 0; e < element_names().size(); ++e)
            j[element_names()[e]] = {{"precision", m.precision[e]}, {"recall", m.recall[e]}};
        std::cout << j.dump(2) << "\n";
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
