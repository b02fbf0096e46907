#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "cclap/autoencoder.hpp"
#include "cclap/checkpoint.hpp"
#include "cclap/dataset.hpp"
#include "cclap/errors.hpp"
#include "cclap/nn.hpp"

namespace cclap {

// ---------------------------------------------------------------------------
// Study arithmetic
// ---------------------------------------------------------------------------

struct EvalTally {
    long long n_real = 0;    // judgments of "real painting"
    long long n_vol = 0;     // volunteers
    long long n_images = 0;  // images per method
};

double turing_proportion(const EvalTally& t);

// Fixed-point rendering with >= 4 decimal places (round half away from zero).
std::string format_proportion(double p, int decimals = 4);

struct Ballot {
    std::string group;
    std::string metric;
    std::string method;
};

// metric -> method -> fraction of that metric's ballots
using PreferenceTable = std::map<std::string, std::map<std::string, double>>;

PreferenceTable preference_tally(const std::vector<Ballot>& ballots,
                                 const std::vector<std::string>& methods);

// CSV rows "group_id,metric,method"; a leading header row is skipped.
std::vector<Ballot> read_ballots_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Element probe
// ---------------------------------------------------------------------------

// Small multi-label detector: three stride-2 convolutions, global average
// pooling, one linear layer to per-element scores.
template <typename T>
struct ProbeNet {
    Conv<T> c1, c2, c3;
    Dense<T> fc;
    bool trained = false;

    void init(Rng& rng) {
        c1.init(16, 1, 3, rng, 2, Pad::SameZero);
        c2.init(32, 16, 3, rng, 2, Pad::SameZero);
        c3.init(32, 32, 3, rng, 2, Pad::SameZero);
        fc.init(32, static_cast<int>(element_names().size()), rng);
    }

    // x: [1,64,64] in [0,1] -> per-element probabilities [1,6]
    Tensor<T> forward(const Tensor<T>& x) const {
        auto h = relu(c1(x));
        h = relu(c2(h));
        h = relu(c3(h));
        auto pooled = mean_rows(reshape(h, {h.shape[0], h.shape[1] * h.shape[2]}));
        auto logits = fc(reshape(pooled, {1, h.shape[0]}));
        // sigmoid
        return recip(add_scalar(exp_(scale(logits, T(-1))), T(1)));
    }

    std::array<float, 6> predict(const ImageBuffer& img) const {
        if (!trained) throw StateError("probe: not trained");
        auto p = forward(image_to_tensor<T>(img));
        std::array<float, 6> out{};
        for (int e = 0; e < 6; ++e) out[e] = static_cast<float>((*p.data)[e]);
        return out;
    }

    std::vector<std::pair<std::string, Tensor<T>*>> named_params() {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        c1.collect("c1", out);
        c2.collect("c2", out);
        c3.collect("c3", out);
        fc.collect("fc", out);
        return out;
    }
};

struct ProbeMetrics {
    std::array<double, 6> accuracy{};   // held-out validation
    std::array<double, 6> precision{};  // vs requested elements
    std::array<double, 6> recall{};
    double min_accuracy = 0.0;
};

// Train on sidecar labels of non-held-out records; report held-out per-element
// accuracy. shuffle_labels is the negative-control switch.
ProbeMetrics train_probe(ProbeNet<float>& net, const std::vector<PaintingRecord>& records,
                         uint64_t seed, int epochs = 3, bool shuffle_labels = false);

// Per-element precision/recall of probe detections against the elements each
// image was requested to contain. Detection threshold 0.5.
ProbeMetrics content_probe(const ProbeNet<float>& net, const std::vector<ImageBuffer>& images,
                           const std::vector<std::vector<std::string>>& requested);

void save_probe(ProbeNet<float>& net, TensorMap& out);
void load_probe(ProbeNet<float>& net, const TensorMap& ckpt);

}  // namespace cclap
