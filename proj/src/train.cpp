#include "cclap/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cclap/evaluation.hpp"
#include "cclap/optimizer.hpp"

namespace cclap {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Checkpoint plumbing
// ---------------------------------------------------------------------------

void store_params(const NamedParams& params, const std::string& prefix, TensorMap& out) {
    for (const auto& [name, p] : params) {
        Tensor<float> copy(p->shape);
        *copy.data = *p->data;
        out[prefix + "/" + name] = std::move(copy);
    }
}

void load_params(const NamedParams& params, const std::string& prefix, const TensorMap& ckpt) {
    for (const auto& [name, p] : params) {
        auto it = ckpt.find(prefix + "/" + name);
        if (it == ckpt.end()) throw DataError("checkpoint: missing tensor " + prefix + "/" + name);
        if (it->second.shape != p->shape)
            throw DataError("checkpoint: shape mismatch for " + prefix + "/" + name);
        *p->data = *it->second.data;
    }
}

void store_scalar(TensorMap& out, const std::string& name, float v) {
    out[name] = Tensor<float>::full({1}, v);
}

float load_scalar(const TensorMap& ckpt, const std::string& name) {
    auto it = ckpt.find(name);
    if (it == ckpt.end()) throw DataError("checkpoint: missing scalar " + name);
    if (it->second.numel() != 1) throw DataError("checkpoint: " + name + " is not a scalar");
    return (*it->second.data)[0];
}

void save_vocab(const std::string& path, const Vocab& vocab) {
    ordered_json j;
    j["words"] = vocab.words;
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw IoError("vocab: cannot open " + tmp);
        os << j.dump() << "\n";
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("vocab: rename failed: " + ec.message());
}

Vocab load_vocab(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("vocab: cannot open " + path);
    ordered_json j = ordered_json::parse(is, nullptr, false);
    if (j.is_discarded() || !j.contains("words")) throw DataError("vocab: malformed " + path);
    return Vocab::from_words(j["words"].get<std::vector<std::string>>());
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

namespace {

struct SplitImages {
    std::vector<Tensor<float>> train, held_out;
};

SplitImages load_split(const std::vector<PaintingRecord>& records) {
    if (records.empty()) throw DataError("training: empty corpus");
    SplitImages s;
    for (const auto& r : records) {
        ImageBuffer img = read_png(r.image_path);
        if (img.c != 1) img = to_grayscale(img);
        (r.held_out ? s.held_out : s.train).push_back(image_to_tensor<float>(img));
    }
    if (s.train.empty()) throw DataError("training: no training-split records");
    return s;
}

void log_line(std::ostream* log, const ordered_json& j) {
    if (log) *log << j.dump() << std::endl;
}

double window_mean(const std::vector<double>& xs, size_t begin, size_t count) {
    double s = 0.0;
    for (size_t i = begin; i < begin + count; ++i) s += xs[i];
    return s / static_cast<double>(count);
}

}  // namespace

// ---------------------------------------------------------------------------
// Autoencoder
// ---------------------------------------------------------------------------

AeTrainStats train_autoencoder(const std::vector<PaintingRecord>& records, const RunConfig& cfg,
                               TensorMap& ckpt, std::ostream* log) {
    SplitImages data = load_split(records);
    Rng rng(cfg.seed);
    Autoencoder<float> ae;
    ae.init(rng);
    auto params = ae.named_params();
    AdaptiveOptimizer opt(static_cast<float>(cfg.lr));

    AeTrainStats stats;
    std::vector<size_t> order(data.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int ep = 0; ep < cfg.ae_epochs; ++ep) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(static_cast<int>(i))]);
        double ep_loss = 0.0;
        size_t pos = 0, batches = 0;
        while (pos < order.size()) {
            size_t bsz = std::min<size_t>(cfg.batch, order.size() - pos);
            AdaptiveOptimizer::zero_grads(params);
            for (size_t b = 0; b < bsz; ++b, ++pos) {
                const Tensor<float>& x = data.train[order[pos]];
                GradientTape<float> tape;
                auto post = ae.encode_posterior(x);
                auto recon = ae.decode_raw(post.mean);
                auto diff = sub(recon, x);
                auto loss = add(mean_all(mul(diff, diff)),
                                scale(Autoencoder<float>::kl_penalty(post),
                                      static_cast<float>(cfg.kl_weight)));
                loss = scale(loss, 1.f / static_cast<float>(bsz));
                ep_loss += loss.item() * bsz;
                tape.backward(loss);
            }
            opt.step(params);
            ++batches;
        }
        ep_loss /= static_cast<double>(order.size());
        stats.epoch_loss.push_back(ep_loss);
        log_line(log, {{"stage", "ae"}, {"epoch", ep}, {"loss", ep_loss}, {"lr", cfg.lr},
                       {"seed", cfg.seed}});
    }

    // latent rescale constant: unit global std of posterior means
    double sum = 0.0, sum2 = 0.0;
    size_t n = 0;
    size_t sample = std::min<size_t>(data.train.size(), 256);
    for (size_t i = 0; i < sample; ++i) {
        auto m = ae.encode_posterior(data.train[i]).mean;
        for (float v : *m.data) {
            sum += v;
            sum2 += static_cast<double>(v) * v;
            ++n;
        }
    }
    double var = sum2 / n - (sum / n) * (sum / n);
    ae.latent_scale = var > 1e-12 ? static_cast<float>(1.0 / std::sqrt(var)) : 1.f;

    // held-out reconstruction error on clamped decodes
    const auto& val = data.held_out.empty() ? data.train : data.held_out;
    double mae = 0.0;
    size_t px = 0;
    for (const auto& x : val) {
        ImageBuffer rec = tensor_to_image(ae.decode_raw(ae.encode_posterior(x).mean));
        for (size_t i = 0; i < rec.px.size(); ++i, ++px)
            mae += std::abs(rec.px[i] - (*x.data)[i]);
    }
    stats.held_out_mae = mae / static_cast<double>(px);
    stats.latent_scale = ae.latent_scale;
    log_line(log, {{"stage", "ae"}, {"held_out_mae", stats.held_out_mae},
                   {"latent_scale", ae.latent_scale}});

    store_params(params, "ae", ckpt);
    store_scalar(ckpt, "ae/latent_scale", ae.latent_scale);
    return stats;
}

// ---------------------------------------------------------------------------
// Latent diffusion
// ---------------------------------------------------------------------------

LdmTrainStats train_ldm(const std::vector<PaintingRecord>& records, const RunConfig& cfg,
                        TensorMap& ckpt, Vocab& vocab, std::ostream* log,
                        const std::string& snapshot_path, int snapshot_every) {
    if (records.empty()) throw DataError("training: empty corpus");

    Autoencoder<float> ae;
    {
        Rng tmp(0);
        ae.init(tmp);
    }
    load_params(ae.named_params(), "ae", ckpt);
    ae.latent_scale = load_scalar(ckpt, "ae/latent_scale");

    // vocabulary over every caption so held-out prompts tokenize cleanly
    std::vector<std::string> words;
    for (const auto& r : records)
        for (const auto& w : split_words(r.caption)) words.push_back(w);
    vocab = Vocab::from_words(words);

    // frozen latents and token sequences for the training split
    std::vector<Latent> latents;
    std::vector<TokenSequence> seqs;
    for (const auto& r : records) {
        if (r.held_out) continue;
        ImageBuffer img = read_png(r.image_path);
        if (img.c != 1) img = to_grayscale(img);
        latents.push_back(scale(ae.encode_posterior(image_to_tensor<float>(img)).mean,
                                ae.latent_scale));
        seqs.push_back(tokenize(r.caption, vocab));
    }
    if (latents.empty()) throw DataError("training: no training-split records");

    NoiseSchedule sched = build_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
    Rng rng(cfg.seed);
    Denoiser<float> den;
    den.init(rng, cfg.latent_channels, cfg.latent_spatial);
    TextEncoder<float> txt;
    txt.init(vocab.size(), rng, den.d_txt);

    NamedParams params = den.named_params();
    for (auto& [name, p] : txt.named_params()) params.emplace_back("txt." + name, p);
    AdaptiveOptimizer opt(static_cast<float>(cfg.lr));

    LdmTrainStats stats;
    for (int step = 0; step < cfg.ldm_steps; ++step) {
        AdaptiveOptimizer::zero_grads(params);
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            size_t idx = static_cast<size_t>(rng.uniform_int(static_cast<int>(latents.size())));
            int t = rng.uniform_int(sched.T);
            Latent eps = Latent::randn(latents[idx].shape, rng);
            Latent z_t = forward_diffuse(latents[idx], t, eps, sched);

            GradientTape<float> tape;
            Tensor<float> cond = txt.forward(seqs[idx]);
            Tensor<float> eps_pred = den.predict(z_t, t, cond, seqs[idx].mask);
            Tensor<float> loss = scale(epsilon_loss_t(eps, eps_pred), 1.f / cfg.batch);
            batch_loss += loss.item() * cfg.batch;
            tape.backward(loss);
        }
        opt.step(params);
        batch_loss /= cfg.batch;
        stats.step_loss.push_back(batch_loss);
        log_line(log, {{"stage", "ldm"}, {"step", step}, {"loss", batch_loss}, {"lr", cfg.lr},
                       {"seed", cfg.seed}});
        if (!snapshot_path.empty() && snapshot_every > 0 && (step + 1) % snapshot_every == 0) {
            store_params(den.named_params(), "ldm", ckpt);
            store_params(txt.named_params(), "text", ckpt);
            store_scalar(ckpt, "ldm/T", static_cast<float>(cfg.timesteps));
            store_scalar(ckpt, "ldm/beta_start", static_cast<float>(cfg.beta_start));
            store_scalar(ckpt, "ldm/beta_end", static_cast<float>(cfg.beta_end));
            store_scalar(ckpt, "text/vocab_size", static_cast<float>(vocab.size()));
            save_checkpoint(snapshot_path, ckpt);
        }
    }

    size_t n = stats.step_loss.size();
    size_t w = std::min<size_t>(100, n);
    stats.first100_avg = window_mean(stats.step_loss, 0, w);
    stats.last100_avg = window_mean(stats.step_loss, n - w, w);

    store_params(den.named_params(), "ldm", ckpt);
    store_params(txt.named_params(), "text", ckpt);
    store_scalar(ckpt, "ldm/T", static_cast<float>(cfg.timesteps));
    store_scalar(ckpt, "ldm/beta_start", static_cast<float>(cfg.beta_start));
    store_scalar(ckpt, "ldm/beta_end", static_cast<float>(cfg.beta_end));
    store_scalar(ckpt, "text/vocab_size", static_cast<float>(vocab.size()));
    return stats;
}

// ---------------------------------------------------------------------------
// Style aggregator
// ---------------------------------------------------------------------------

StyleTrainStats train_style(const std::vector<PaintingRecord>& records, const RunConfig& cfg,
                            TensorMap& ckpt, std::ostream* log) {
    SplitImages data = load_split(records);
    Rng rng(cfg.seed);
    StyleNet<float> net;
    net.init(rng);
    StyleLossWeights weights;

    NamedParams all = net.named_params();
    NamedParams stepped;
    for (auto& [name, p] : all)
        if (!cfg.freeze_encoder || name.rfind("enc", 0) != 0) stepped.emplace_back(name, p);
    AdaptiveOptimizer opt(static_cast<float>(cfg.lr));

    StyleTrainStats stats;
    for (int iter = 0; iter < cfg.style_iters; ++iter) {
        AdaptiveOptimizer::zero_grads(all);
        StyleLossBreakdown mean_bd{};
        for (int b = 0; b < cfg.batch; ++b) {
            const Tensor<float>& content =
                data.train[rng.uniform_int(static_cast<int>(data.train.size()))];
            const Tensor<float>& style_img =
                data.train[rng.uniform_int(static_cast<int>(data.train.size()))];

            GradientTape<float> tape;
            auto fc = net.extract_features(content);
            auto fs = net.extract_features(style_img);
            auto out = net.stylize_raw(fc, fs);
            auto fo = net.extract_features(out);
            // identity branch: content = style = target
            auto recon = net.stylize_raw(fs, fs);
            StyleLossBreakdown bd;
            auto loss = scale(style_total_loss(fc, fs, fo, recon, style_img, weights, &bd),
                              1.f / cfg.batch);
            tape.backward(loss);
            mean_bd.ss += bd.ss / cfg.batch;
            mean_bd.r += bd.r / cfg.batch;
            mean_bd.m += bd.m / cfg.batch;
            mean_bd.h += bd.h / cfg.batch;
            mean_bd.rec += bd.rec / cfg.batch;
            mean_bd.total += bd.total / cfg.batch;
        }
        opt.step(stepped);
        stats.iter_loss.push_back(mean_bd.total);
        log_line(log, {{"stage", "style"}, {"iter", iter}, {"ss", mean_bd.ss}, {"r", mean_bd.r},
                       {"m", mean_bd.m}, {"h", mean_bd.h}, {"rec", mean_bd.rec},
                       {"total", mean_bd.total}, {"lr", cfg.lr}, {"seed", cfg.seed}});
    }

    size_t n = stats.iter_loss.size();
    size_t w = std::min<size_t>(100, n);
    stats.first100_avg = window_mean(stats.iter_loss, 0, w);
    stats.last100_avg = window_mean(stats.iter_loss, n - w, w);

    store_params(all, "style", ckpt);
    return stats;
}

// ---------------------------------------------------------------------------
// Inference bundle
// ---------------------------------------------------------------------------

Pipeline Pipeline::load(const std::string& ckpt_path) {
    TensorMap ckpt = load_checkpoint(ckpt_path);
    Pipeline p;
    Rng tmp(0);

    if (!ckpt.count("ae/enc1.w")) throw DataError("checkpoint: no autoencoder section");
    p.ae.init(tmp);
    load_params(p.ae.named_params(), "ae", ckpt);
    p.ae.latent_scale = load_scalar(ckpt, "ae/latent_scale");

    if (ckpt.count("ldm/conv_in.w")) {
        p.has_ldm = true;
        p.den.init(tmp);
        load_params(p.den.named_params(), "ldm", ckpt);
        p.sched = build_schedule(static_cast<int>(load_scalar(ckpt, "ldm/T")),
                                 load_scalar(ckpt, "ldm/beta_start"),
                                 load_scalar(ckpt, "ldm/beta_end"));
        p.vocab = load_vocab(ckpt_path + ".vocab.json");
        int vocab_size = static_cast<int>(load_scalar(ckpt, "text/vocab_size"));
        if (vocab_size != p.vocab.size())
            throw DataError("checkpoint: vocabulary sidecar does not match text encoder");
        p.text.init(p.vocab.size(), tmp, p.den.d_txt);
        load_params(p.text.named_params(), "text", ckpt);
    }
    if (ckpt.count("style/enc1.w")) {
        p.has_style = true;
        p.style.init(tmp);
        load_params(p.style.named_params(), "style", ckpt);
    }
    return p;
}

ImageBuffer Pipeline::generate(const std::string& prompt, uint64_t seed) const {
    if (!has_ldm) throw StateError("generate: checkpoint has no diffusion section");
    TokenSequence seq = tokenize(prompt, vocab);
    if (seq.real_count() == 0) throw DataError("generate: prompt has no tokens");
    Tensor<float> cond = text.forward(seq);
    DenoiserFn fn = [&](const Latent& z, int t) { return den.predict(z, t, cond, seq.mask); };
    Latent z = sample(fn, {den.latent_channels, den.latent_spatial, den.latent_spatial}, sched,
                      seed);
    return ae.decode(z);
}

ImageBuffer Pipeline::stylize(const ImageBuffer& content, const ImageBuffer& style_ref) const {
    if (!has_style) throw StateError("stylize: checkpoint has no style section");
    return style.stylize(content, style_ref);
}

ImageBuffer fit_to_geometry(const ImageBuffer& img, int size) {
    ImageBuffer g = to_grayscale(img);
    if (g.h == size && g.w == size) return g;
    g = resize_short_side(g, size);
    return crop(g, (g.w - size) / 2, (g.h - size) / 2, size, size);
}

}  // namespace cclap
