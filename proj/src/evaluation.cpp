#include "cclap/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cclap/optimizer.hpp"
#include "cclap/rng.hpp"

namespace cclap {

// ---------------------------------------------------------------------------
// Study arithmetic
// ---------------------------------------------------------------------------

double turing_proportion(const EvalTally& t) {
    if (t.n_real < 0 || t.n_vol < 0 || t.n_images < 0)
        throw ContractError("turing_proportion: counts must be nonnegative");
    long long denom = t.n_vol * t.n_images;
    if (denom <= 0) throw ContractError("turing_proportion: volunteer-image product must be positive");
    if (t.n_real > denom)
        throw ContractError("turing_proportion: judged-real count exceeds total judgments");
    return static_cast<double>(t.n_real) / static_cast<double>(denom);
}

std::string format_proportion(double p, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, p);
    return buf;
}

PreferenceTable preference_tally(const std::vector<Ballot>& ballots,
                                 const std::vector<std::string>& methods) {
    if (ballots.empty()) throw DataError("preference_tally: no ballots");
    std::map<std::string, long long> per_metric_total;
    std::map<std::string, std::map<std::string, long long>> counts;
    for (const auto& b : ballots) {
        if (std::find(methods.begin(), methods.end(), b.method) == methods.end())
            throw DataError("preference_tally: unknown method '" + b.method + "'");
        ++per_metric_total[b.metric];
        ++counts[b.metric][b.method];
    }
    PreferenceTable out;
    for (const auto& [metric, total] : per_metric_total)
        for (const auto& m : methods)
            out[metric][m] = static_cast<double>(counts[metric][m]) / static_cast<double>(total);
    return out;
}

std::vector<Ballot> read_ballots_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("ballots: cannot open " + path);
    std::vector<Ballot> out;
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        Ballot b;
        if (!std::getline(ss, b.group, ',') || !std::getline(ss, b.metric, ',') ||
            !std::getline(ss, b.method))
            throw DataError("ballots: malformed row '" + line + "'");
        if (first && b.group == "group_id") {
            first = false;
            continue;  // header
        }
        first = false;
        out.push_back(std::move(b));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Element probe
// ---------------------------------------------------------------------------

namespace {

std::array<float, 6> label_vector(const std::vector<std::string>& elements) {
    std::array<float, 6> y{};
    const auto& names = element_names();
    for (const auto& e : elements) {
        auto it = std::find(names.begin(), names.end(), e);
        if (it == names.end()) throw DataError("probe: unknown element '" + e + "'");
        y[static_cast<size_t>(it - names.begin())] = 1.f;
    }
    return y;
}

}  // namespace

ProbeMetrics train_probe(ProbeNet<float>& net, const std::vector<PaintingRecord>& records,
                         uint64_t seed, int epochs, bool shuffle_labels) {
    std::vector<size_t> train_idx, val_idx;
    for (size_t i = 0; i < records.size(); ++i)
        (records[i].held_out ? val_idx : train_idx).push_back(i);
    if (train_idx.empty() || val_idx.empty())
        throw DataError("probe: need both train and held-out records");

    std::vector<Tensor<float>> images(records.size());
    std::vector<std::array<float, 6>> labels(records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        images[i] = image_to_tensor<float>(read_png(records[i].image_path));
        labels[i] = label_vector(records[i].elements);
    }

    Rng rng(seed);
    if (shuffle_labels) {
        // negative control: break the image/label pairing on the training split
        for (size_t i = train_idx.size(); i > 1; --i)
            std::swap(labels[train_idx[i - 1]], labels[train_idx[rng.uniform_int(static_cast<int>(i))]]);
    }

    net.init(rng);
    auto params = net.named_params();
    AdaptiveOptimizer opt(1e-3f);

    std::vector<size_t> order = train_idx;
    for (int ep = 0; ep < epochs; ++ep) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(static_cast<int>(i))]);
        for (size_t idx : order) {
            GradientTape<float> tape;
            auto p = net.forward(images[idx]);
            Tensor<float> y({1, 6});
            for (int e = 0; e < 6; ++e) (*y.data)[e] = labels[idx][e];
            auto diff = sub(p, y);
            auto loss = mean_all(mul(diff, diff));
            AdaptiveOptimizer::zero_grads(params);
            tape.backward(loss);
            opt.step(params);
        }
    }
    net.trained = true;

    ProbeMetrics m;
    std::array<long long, 6> correct{};
    for (size_t idx : val_idx) {
        auto p = net.forward(images[idx]);
        for (int e = 0; e < 6; ++e) {
            bool det = (*p.data)[e] > 0.5f;
            if (det == (labels[idx][e] > 0.5f)) ++correct[e];
        }
    }
    m.min_accuracy = 1.0;
    for (int e = 0; e < 6; ++e) {
        m.accuracy[e] = static_cast<double>(correct[e]) / static_cast<double>(val_idx.size());
        m.min_accuracy = std::min(m.min_accuracy, m.accuracy[e]);
    }
    return m;
}

ProbeMetrics content_probe(const ProbeNet<float>& net, const std::vector<ImageBuffer>& images,
                           const std::vector<std::vector<std::string>>& requested) {
    if (!net.trained) throw StateError("probe: not trained");
    if (images.size() != requested.size())
        throw ContractError("content_probe: images/requests length mismatch");
    std::array<long long, 6> tp{}, fp{}, fn{};
    for (size_t i = 0; i < images.size(); ++i) {
        auto probs = net.predict(images[i]);
        auto want = label_vector(requested[i]);
        for (int e = 0; e < 6; ++e) {
            bool det = probs[e] > 0.5f, req = want[e] > 0.5f;
            if (det && req) ++tp[e];
            if (det && !req) ++fp[e];
            if (!det && req) ++fn[e];
        }
    }
    ProbeMetrics m;
    for (int e = 0; e < 6; ++e) {
        m.precision[e] = tp[e] + fp[e] ? static_cast<double>(tp[e]) / (tp[e] + fp[e]) : 1.0;
        m.recall[e] = tp[e] + fn[e] ? static_cast<double>(tp[e]) / (tp[e] + fn[e]) : 1.0;
    }
    return m;
}

void save_probe(ProbeNet<float>& net, TensorMap& out) {
    for (auto& [name, p] : net.named_params()) out["probe/" + name] = *p;
}

void load_probe(ProbeNet<float>& net, const TensorMap& ckpt) {
    Rng rng(0);
    net.init(rng);  // establish shapes
    for (auto& [name, p] : net.named_params()) {
        auto it = ckpt.find("probe/" + name);
        if (it == ckpt.end()) throw DataError("probe: checkpoint missing probe/" + name);
        if (it->second.shape != p->shape) throw DataError("probe: shape mismatch for " + name);
        *p = it->second;
    }
    net.trained = true;
}

}  // namespace cclap
