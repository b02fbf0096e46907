#pragma once

#include <cmath>

#include "cclap/nn.hpp"
#include "cclap/tensor.hpp"
#include "cclap/text.hpp"

namespace cclap {

// Interleaved sin/cos of t at geometrically spaced frequencies, base 10000:
// freq_i = 10000^(-i / (dim/2)), features [sin(t f_0), cos(t f_0), ...].
template <typename T>
Tensor<T> sincos_features(int t, int dim) {
    if (dim <= 0 || dim % 2 != 0) throw ConfigError("timestep features: dim must be positive and even");
    const int half = dim / 2;
    Tensor<T> out({1, dim});
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / half);
        (*out.data)[2 * i] = static_cast<T>(std::sin(t * freq));
        (*out.data)[2 * i + 1] = static_cast<T>(std::cos(t * freq));
    }
    return out;
}

// Timestep-conditioned UNet over latents with one cross-attention site at the
// bottleneck. Output conv is bias-free and zero-initialized, so a fresh (or
// all-zero) network predicts exactly zero epsilon.
template <typename T>
struct Denoiser {
    int latent_channels = 4;
    int latent_spatial = 16;
    int base = 32;       // stage channels: base, base, 2*base
    int d_model = 64;    // bottleneck width = 2*base
    int d_txt = 32;
    int t_dim = 32;

    Conv<T> conv_in, down1, down2, mid, up1, up2, conv_out;
    Dense<T> t_fc1, t_fc2;                       // timestep MLP
    Dense<T> t_proj0, t_proj1, t_proj2, t_proj3, t_proj4;  // per-stage channel bias
    Tensor<T> attn_wq, attn_wk, attn_wv, attn_wo;

    void init(Rng& rng, int latent_ch = 4, int spatial = 16, int base_ch = 32, int txt_width = 32) {
        latent_channels = latent_ch;
        latent_spatial = spatial;
        base = base_ch;
        d_model = 2 * base_ch;
        d_txt = txt_width;
        conv_in.init(base, latent_ch, 3, rng);
        down1.init(base, base, 3, rng, 2);
        down2.init(d_model, base, 3, rng, 2);
        mid.init(d_model, d_model, 3, rng);
        up1.init(base, d_model, 3, rng);
        up2.init(base, base, 3, rng);
        conv_out.init_zero(latent_ch, base, 3);
        t_fc1.init(t_dim, d_model, rng);
        t_fc2.init(d_model, d_model, rng);
        t_proj0.init(d_model, base, rng);
        t_proj1.init(d_model, base, rng);
        t_proj2.init(d_model, d_model, rng);
        t_proj3.init(d_model, base, rng);
        t_proj4.init(d_model, base, rng);
        T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d_model)));
        attn_wq = Tensor<T>::randn({d_model, d_model}, rng, s);
        attn_wk = Tensor<T>::randn({d_txt, d_model}, rng, static_cast<T>(1.0 / std::sqrt(double(d_txt))));
        attn_wv = Tensor<T>::randn({d_txt, d_model}, rng, static_cast<T>(1.0 / std::sqrt(double(d_txt))));
        attn_wo = Tensor<T>::zeros({d_model, d_model});  // attention starts as identity residual
    }

    NamedParams named_params()
        requires std::is_same_v<T, float>
    {
        NamedParams p;
        conv_in.collect("conv_in", p);
        down1.collect("down1", p);
        down2.collect("down2", p);
        mid.collect("mid", p);
        up1.collect("up1", p);
        up2.collect("up2", p);
        conv_out.collect("conv_out", p);
        t_fc1.collect("t_fc1", p);
        t_fc2.collect("t_fc2", p);
        t_proj0.collect("t_proj0", p);
        t_proj1.collect("t_proj1", p);
        t_proj2.collect("t_proj2", p);
        t_proj3.collect("t_proj3", p);
        t_proj4.collect("t_proj4", p);
        p.emplace_back("attn_wq", &attn_wq);
        p.emplace_back("attn_wk", &attn_wk);
        p.emplace_back("attn_wv", &attn_wv);
        p.emplace_back("attn_wo", &attn_wo);
        return p;
    }

    Tensor<T> timestep_embedding(int t) const {
        Tensor<T> f = sincos_features<T>(t, t_dim);
        return t_fc2(relu(t_fc1(f)));  // [1, d_model]
    }

    // Adds a stage-specific projection of the timestep embedding as a
    // per-channel bias.
    Tensor<T> add_temb(const Tensor<T>& x, const Dense<T>& proj, const Tensor<T>& temb) const {
        Tensor<T> bias = reshape(proj(temb), {x.shape[0]});
        return add_channel_bias(x, bias);
    }

    Tensor<T> predict(const Tensor<T>& z_t, int t, const Tensor<T>& cond,
                      const std::vector<int>& cond_mask) const {
        if (z_t.rank() != 3 || z_t.shape[0] != latent_channels ||
            z_t.shape[1] != latent_spatial || z_t.shape[2] != latent_spatial)
            throw ContractError("denoiser: latent geometry mismatch");
        Tensor<T> temb = timestep_embedding(t);

        Tensor<T> h0 = relu(add_temb(conv_in(z_t), t_proj0, temb));          // base @ s
        Tensor<T> d1 = relu(add_temb(down1(h0), t_proj1, temb));             // base @ s/2
        Tensor<T> d2 = relu(add_temb(down2(d1), t_proj2, temb));             // 2base @ s/4
        Tensor<T> m = relu(mid(d2));

        // cross-attention at the bottleneck: rows of phi are spatial positions
        const int n = m.shape[1] * m.shape[2];
        Tensor<T> phi = transpose(reshape(m, {d_model, n}));
        Tensor<T> att = cross_attention(phi, cond, attn_wq, attn_wk, attn_wv, cond_mask);
        Tensor<T> fused = reshape(transpose(matmul(att, attn_wo)), {d_model, m.shape[1], m.shape[2]});
        m = add(m, fused);

        Tensor<T> u1 = relu(add_temb(up1(upsample_nearest2(m)), t_proj3, temb));
        u1 = add(u1, d1);
        Tensor<T> u2 = relu(add_temb(up2(upsample_nearest2(u1)), t_proj4, temb));
        u2 = add(u2, h0);
        return conv_out(u2);
    }
};

}  // namespace cclap
