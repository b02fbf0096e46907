#pragma once

#include <array>

#include "cclap/autoencoder.hpp"
#include "cclap/image.hpp"
#include "cclap/nn.hpp"
#include "cclap/tensor.hpp"

namespace cclap {

// Per-AMA-stage loss weights, stage index 1..3 stored as [0..2].
struct StyleLossWeights {
    std::array<float, 3> ss{12.f, 9.f, 7.f};
    std::array<float, 3> r{2.f, 2.f, 2.f};
    std::array<float, 3> m{2.f, 2.f, 2.f};
    std::array<float, 3> h{0.25f, 0.5f, 1.f};
};

template <typename T>
struct FeaturePyramid {
    std::array<Tensor<T>, 3> stage;  // stage[i+1] spatial extent = stage[i] / 2
};

struct StyleLossBreakdown {
    float ss = 0, r = 0, m = 0, h = 0, rec = 0, total = 0;
};

namespace style_detail {

// Spatial locations as rows: [C,H,W] -> [HW, C], subsampled with a fixed
// stride so no stage contributes more than max_rows rows.
template <typename T>
Tensor<T> location_rows(const Tensor<T>& f, int max_rows = 256) {
    const int c = f.shape[0], n = f.shape[1] * f.shape[2];
    Tensor<T> rows = transpose(reshape(f, {c, n}));
    if (n <= max_rows) return rows;
    int stride = (n + max_rows - 1) / max_rows;
    std::vector<int> ids;
    for (int i = 0; i < n; i += stride) ids.push_back(i);
    return gather_rows(rows, ids);
}

template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps = T(1e-8)) {
    const int n = x.shape[1];
    Tensor<T> sq_mean = mean_rows(mul(x, x));
    Tensor<T> inv_norm = recip(sqrt_(add_scalar(scale(sq_mean, static_cast<T>(n)), eps)));
    return scale_rows(x, inv_norm);
}

// Channel mean and stddev of a [C,H,W] map, each a [C] vector.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> channel_stats(const Tensor<T>& f, T eps = T(1e-8)) {
    const int c = f.shape[0], n = f.shape[1] * f.shape[2];
    Tensor<T> rows = reshape(f, {c, n});
    Tensor<T> mu = mean_rows(rows);
    Tensor<T> var = sub(mean_rows(mul(rows, rows)), mul(mu, mu));
    return {mu, sqrt_(add_scalar(var, eps))};
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> d = sub(a, b);
    return mean_all(mul(d, d));
}

}  // namespace style_detail

// L1 distance between row-normalized cosine self-similarity matrices
// (content structure preservation).
template <typename T>
Tensor<T> loss_self_similarity(const Tensor<T>& f_out, const Tensor<T>& f_content) {
    using namespace style_detail;
    auto sim = [](const Tensor<T>& f) {
        Tensor<T> x = l2_normalize_rows(location_rows(f));
        Tensor<T> s = matmul(x, transpose(x));
        Tensor<T> rowsum = scale(mean_rows(s), static_cast<T>(s.shape[1]));
        return scale_rows(s, recip(add_scalar(rowsum, T(1e-8))));
    };
    return mean_all(abs_(sub(sim(f_out), sim(f_content))));
}

// Squared L2 between channel means plus channel stddevs (moment matching).
template <typename T>
Tensor<T> loss_moment(const Tensor<T>& f_out, const Tensor<T>& f_style) {
    using namespace style_detail;
    auto [mu_o, sd_o] = channel_stats(f_out);
    auto [mu_s, sd_s] = channel_stats(f_style);
    return add(mse(mu_o, mu_s), mse(sd_o, sd_s));
}

// Relaxed earth-mover distance over l2-normalized feature sets: mean over
// rows of min cosine cost, symmetrized.
template <typename T>
Tensor<T> loss_relaxed_emd(const Tensor<T>& f_out, const Tensor<T>& f_style) {
    using namespace style_detail;
    Tensor<T> xo = l2_normalize_rows(location_rows(f_out));
    Tensor<T> xs = l2_normalize_rows(location_rows(f_style));
    Tensor<T> cost = add_scalar(scale(matmul(xo, transpose(xs)), T(-1)), T(1));
    Tensor<T> fwd = mean_all(min_rows(cost));
    Tensor<T> bwd = mean_all(min_rows(transpose(cost)));
    return scale(add(fwd, bwd), T(0.5));
}

// Squared L2 between channel statistics of discrete-Laplacian responses
// (high-frequency texture matching).
template <typename T>
Tensor<T> loss_highfreq(const Tensor<T>& f_out, const Tensor<T>& f_style) {
    using namespace style_detail;
    auto [mu_o, sd_o] = channel_stats(laplacian2d(f_out));
    auto [mu_s, sd_s] = channel_stats(laplacian2d(f_style));
    return add(mse(mu_o, mu_s), mse(sd_o, sd_s));
}

// Attentional manifold alignment block: queries from channel-normalized
// content, keys from channel-normalized style, values from raw style;
// residual fusion through a 3x3 conv.
template <typename T>
struct AmaBlock {
    Tensor<T> wq, wk, wv;  // [C,C]
    Conv<T> fuse;

    void init(int c, Rng& rng) {
        T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(c)));
        wq = Tensor<T>::randn({c, c}, rng, s);
        wk = Tensor<T>::randn({c, c}, rng, s);
        wv = Tensor<T>::randn({c, c}, rng, s);
        fuse.init(c, c, 3, rng, 1, Pad::SameReplicate);
    }

    void collect(const std::string& name, std::vector<std::pair<std::string, Tensor<T>*>>& out) {
        out.emplace_back(name + ".wq", &wq);
        out.emplace_back(name + ".wk", &wk);
        out.emplace_back(name + ".wv", &wv);
        fuse.collect(name + ".fuse", out);
    }

    // Attention weights over style locations for each content location.
    Tensor<T> attention_weights(const Tensor<T>& fc, const Tensor<T>& fs) const {
        check_channels(fc, fs);
        const int c = fc.shape[0];
        Tensor<T> q = matmul(normalized_rows(fc), wq);
        Tensor<T> k = matmul(normalized_rows(fs), wk);
        return softmax_rows(scale(matmul(q, transpose(k)), T(1) / std::sqrt(static_cast<T>(c))));
    }

    // Attended style values, one row per content location.
    Tensor<T> attended(const Tensor<T>& fc, const Tensor<T>& fs) const {
        const int c = fs.shape[0], ns = fs.shape[1] * fs.shape[2];
        Tensor<T> v = matmul(transpose(reshape(fs, {c, ns})), wv);
        return matmul(attention_weights(fc, fs), v);
    }

    Tensor<T> operator()(const Tensor<T>& fc, const Tensor<T>& fs) const {
        const int c = fc.shape[0], h = fc.shape[1], w = fc.shape[2];
        Tensor<T> att = reshape(transpose(attended(fc, fs)), {c, h, w});
        return add(fc, fuse(att));
    }

private:
    static void check_channels(const Tensor<T>& fc, const Tensor<T>& fs) {
        if (fc.rank() != 3 || fs.rank() != 3 || fc.shape[0] != fs.shape[0])
            throw ContractError("ama_align: channel mismatch");
    }

    // Channel-normalize, then lay out locations as rows.
    static Tensor<T> normalized_rows(const Tensor<T>& f) {
        const int c = f.shape[0], n = f.shape[1] * f.shape[2];
        return transpose(layernorm_rows(reshape(f, {c, n})));
    }
};

// Style aggregator S: encoder M (three stages), three AMA blocks, decoder N
// symmetric to the encoder. Replicate padding keeps constant inputs constant
// through every stage.
template <typename T>
struct StyleNet {
    int image_size = 64;
    static constexpr std::array<int, 3> kStageChannels{16, 32, 64};

    Conv<T> enc1, enc2, enc3;
    AmaBlock<T> ama3, ama2, ama1;
    Conv<T> dec3, dec2, dec1;

    void init(Rng& rng, int img = 64) {
        image_size = img;
        enc1.init(kStageChannels[0], 1, 3, rng, 2, Pad::SameReplicate);
        enc2.init(kStageChannels[1], kStageChannels[0], 3, rng, 2, Pad::SameReplicate);
        enc3.init(kStageChannels[2], kStageChannels[1], 3, rng, 2, Pad::SameReplicate);
        ama3.init(kStageChannels[2], rng);
        ama2.init(kStageChannels[1], rng);
        ama1.init(kStageChannels[0], rng);
        dec3.init(kStageChannels[1], kStageChannels[2], 3, rng, 1, Pad::SameReplicate);
        dec2.init(kStageChannels[0], kStageChannels[1], 3, rng, 1, Pad::SameReplicate);
        dec1.init(1, kStageChannels[0], 3, rng, 1, Pad::SameReplicate);
    }

    NamedParams named_params()
        requires std::is_same_v<T, float>
    {
        NamedParams p;
        enc1.collect("enc1", p);
        enc2.collect("enc2", p);
        enc3.collect("enc3", p);
        ama3.collect("ama3", p);
        ama2.collect("ama2", p);
        ama1.collect("ama1", p);
        dec3.collect("dec3", p);
        dec2.collect("dec2", p);
        dec1.collect("dec1", p);
        return p;
    }

    NamedParams encoder_params()
        requires std::is_same_v<T, float>
    {
        NamedParams p;
        enc1.collect("enc1", p);
        enc2.collect("enc2", p);
        enc3.collect("enc3", p);
        return p;
    }

    FeaturePyramid<T> extract_features(const Tensor<T>& img) const {
        if (img.rank() != 3 || img.shape[1] != image_size || img.shape[2] != image_size)
            throw ContractError("extract_features: image geometry mismatch");
        FeaturePyramid<T> p;
        p.stage[0] = relu(enc1(img));
        p.stage[1] = relu(enc2(p.stage[0]));
        p.stage[2] = relu(enc3(p.stage[1]));
        return p;
    }

    FeaturePyramid<T> extract_features(const ImageBuffer& img) const {
        return extract_features(image_to_tensor<T>(img));
    }

    // Gradual alignment: AMA at stage 3, decode, AMA at stage 2, decode,
    // AMA at stage 1, decode to image. Unclamped for training losses.
    Tensor<T> stylize_raw(const FeaturePyramid<T>& fc, const FeaturePyramid<T>& fs) const {
        Tensor<T> x = ama3(fc.stage[2], fs.stage[2]);
        x = upsample_nearest2(relu(dec3(x)));
        x = ama2(x, fs.stage[1]);
        x = upsample_nearest2(relu(dec2(x)));
        x = ama1(x, fs.stage[0]);
        return dec1(upsample_nearest2(x));
    }

    ImageBuffer stylize(const ImageBuffer& content, const ImageBuffer& style) const {
        if (content.h != image_size || content.w != image_size || style.h != image_size ||
            style.w != image_size)
            throw ContractError("stylize: image geometry mismatch");
        return tensor_to_image(stylize_raw(extract_features(content), extract_features(style)));
    }
};

// Eq.-style weighted total: sum over stages of the four feature losses plus
// the image reconstruction term.
template <typename T>
Tensor<T> style_total_loss(const FeaturePyramid<T>& f_content, const FeaturePyramid<T>& f_style,
                           const FeaturePyramid<T>& f_out, const Tensor<T>& recon,
                           const Tensor<T>& target, const StyleLossWeights& w,
                           StyleLossBreakdown* breakdown = nullptr) {
    using style_detail::mse;
    Tensor<T> total = mse(recon, target);
    StyleLossBreakdown bd;
    bd.rec = static_cast<float>(total.item());
    for (int i = 0; i < 3; ++i) {
        Tensor<T> lss = loss_self_similarity(f_out.stage[i], f_content.stage[i]);
        Tensor<T> lr = loss_relaxed_emd(f_out.stage[i], f_style.stage[i]);
        Tensor<T> lm = loss_moment(f_out.stage[i], f_style.stage[i]);
        Tensor<T> lh = loss_highfreq(f_out.stage[i], f_style.stage[i]);
        bd.ss += w.ss[i] * static_cast<float>(lss.item());
        bd.r += w.r[i] * static_cast<float>(lr.item());
        bd.m += w.m[i] * static_cast<float>(lm.item());
        bd.h += w.h[i] * static_cast<float>(lh.item());
        Tensor<T> staged = add(add(scale(lss, static_cast<T>(w.ss[i])), scale(lr, static_cast<T>(w.r[i]))),
                               add(scale(lm, static_cast<T>(w.m[i])), scale(lh, static_cast<T>(w.h[i]))));
        total = add(total, staged);
    }
    bd.total = static_cast<float>(total.item());
    if (breakdown) *breakdown = bd;
    return total;
}

}  // namespace cclap
