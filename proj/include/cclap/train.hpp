#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "cclap/autoencoder.hpp"
#include "cclap/checkpoint.hpp"
#include "cclap/config.hpp"
#include "cclap/dataset.hpp"
#include "cclap/denoiser.hpp"
#include "cclap/diffusion.hpp"
#include "cclap/style.hpp"
#include "cclap/text.hpp"

namespace cclap {

// Copy live parameters into / out of a flat checkpoint map under "prefix/".
void store_params(const NamedParams& params, const std::string& prefix, TensorMap& out);
void load_params(const NamedParams& params, const std::string& prefix, const TensorMap& ckpt);

// Scalar passthrough for checkpointed hyperparameters.
void store_scalar(TensorMap& out, const std::string& name, float v);
float load_scalar(const TensorMap& ckpt, const std::string& name);

void save_vocab(const std::string& path, const Vocab& vocab);
Vocab load_vocab(const std::string& path);

struct AeTrainStats {
    double held_out_mae = 0.0;
    float latent_scale = 1.f;
    std::vector<double> epoch_loss;
};

// KL-regularized reconstruction training; writes "ae/..." (+ "ae/latent_scale").
AeTrainStats train_autoencoder(const std::vector<PaintingRecord>& records, const RunConfig& cfg,
                               TensorMap& ckpt, std::ostream* log = nullptr);

struct LdmTrainStats {
    double first100_avg = 0.0;
    double last100_avg = 0.0;
    std::vector<double> step_loss;
};

// Epsilon-prediction training in latent space with jointly trained text
// conditioning; requires "ae/..." in ckpt, writes "ldm/..." and "text/...".
// A nonempty snapshot_path gets the full map written every snapshot_every steps.
LdmTrainStats train_ldm(const std::vector<PaintingRecord>& records, const RunConfig& cfg,
                        TensorMap& ckpt, Vocab& vocab, std::ostream* log = nullptr,
                        const std::string& snapshot_path = "", int snapshot_every = 500);

struct StyleTrainStats {
    double first100_avg = 0.0;
    double last100_avg = 0.0;
    std::vector<double> iter_loss;
};

// Content/style pair training of the aggregator; writes "style/...".
StyleTrainStats train_style(const std::vector<PaintingRecord>& records, const RunConfig& cfg,
                            TensorMap& ckpt, std::ostream* log = nullptr);

// Frozen-weight inference bundle reconstructed from one checkpoint file.
struct Pipeline {
    NoiseSchedule sched;
    Autoencoder<float> ae;
    TextEncoder<float> text;
    Denoiser<float> den;
    StyleNet<float> style;
    Vocab vocab;
    bool has_ldm = false;
    bool has_style = false;

    static Pipeline load(const std::string& ckpt_path);

    // Text to image: encode prompt, ancestral-sample a latent, decode.
    ImageBuffer generate(const std::string& prompt, uint64_t seed) const;

    // Style transfer on 64x64 grayscale inputs.
    ImageBuffer stylize(const ImageBuffer& content, const ImageBuffer& style_ref) const;
};

// Resize/center-crop/grayscale an arbitrary PNG to pipeline geometry.
ImageBuffer fit_to_geometry(const ImageBuffer& img, int size = 64);

}  // namespace cclap
