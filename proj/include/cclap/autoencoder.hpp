#pragma once

#include "cclap/image.hpp"
#include "cclap/nn.hpp"
#include "cclap/tensor.hpp"

namespace cclap {

// Geometry of the latent space the diffusion runs in.
struct LatentGeometry {
    int image_size = 64;
    int channels = 4;
    int spatial = 16;  // image_size / 4 (two stride-2 stages)
};

template <typename T>
Tensor<T> image_to_tensor(const ImageBuffer& img) {
    if (img.c != 1) throw ContractError("image_to_tensor: grayscale expected");
    Tensor<T> out({1, img.h, img.w});
    for (size_t i = 0; i < img.px.size(); ++i) (*out.data)[i] = static_cast<T>(img.px[i]);
    return out;
}

template <typename T>
ImageBuffer tensor_to_image(const Tensor<T>& t) {
    if (t.rank() != 3 || t.shape[0] != 1) throw ContractError("tensor_to_image: [1,H,W] expected");
    ImageBuffer img(t.shape[1], t.shape[2], 1);
    for (size_t i = 0; i < t.numel(); ++i) img.px[i] = static_cast<float>((*t.data)[i]);
    img.clamp01();
    return img;
}

// KL-regularized convolutional autoencoder: two stride-2 stages 16->32 with
// 1x1 mean/log-variance heads, mirrored nearest-upsample decoder.
template <typename T>
struct Autoencoder {
    LatentGeometry geom;
    Conv<T> enc1, enc2, head_mean, head_logvar;
    Conv<T> dec1, dec2, dec3;
    T latent_scale = T(1);  // stored in the checkpoint as "latent_scale"

    void init(Rng& rng, LatentGeometry g = {}) {
        geom = g;
        enc1.init(16, 1, 3, rng, 2);
        enc2.init(32, 16, 3, rng, 2);
        head_mean.init(g.channels, 32, 1, rng, 1);
        head_logvar.init(g.channels, 32, 1, rng, 1);
        dec1.init(32, g.channels, 3, rng, 1);
        dec2.init(16, 32, 3, rng, 1);
        dec3.init(1, 16, 3, rng, 1);
    }

    NamedParams named_params()
        requires std::is_same_v<T, float>
    {
        NamedParams p;
        enc1.collect("enc1", p);
        enc2.collect("enc2", p);
        head_mean.collect("head_mean", p);
        head_logvar.collect("head_logvar", p);
        dec1.collect("dec1", p);
        dec2.collect("dec2", p);
        dec3.collect("dec3", p);
        return p;
    }

    struct Posterior {
        Tensor<T> mean, logvar;
    };

    Posterior encode_posterior(const Tensor<T>& img) const {
        if (img.rank() != 3 || img.shape[1] != geom.image_size || img.shape[2] != geom.image_size)
            throw ContractError("autoencoder: image geometry mismatch");
        Tensor<T> h = relu(enc1(img));
        h = relu(enc2(h));
        return {head_mean(h), head_logvar(h)};
    }

    // Deterministic latent: posterior mean, rescaled to roughly unit variance.
    Tensor<T> encode(const ImageBuffer& img) const {
        return scale(encode_posterior(image_to_tensor<T>(img)).mean, latent_scale);
    }

    // Decoder forward on an (unscaled) latent; unclamped for training losses.
    Tensor<T> decode_raw(const Tensor<T>& z) const {
        if (z.rank() != 3 || z.shape[0] != geom.channels || z.shape[1] != geom.spatial ||
            z.shape[2] != geom.spatial)
            throw ContractError("autoencoder: latent geometry mismatch");
        Tensor<T> h = relu(dec1(z));
        h = upsample_nearest2(h);
        h = relu(dec2(h));
        h = upsample_nearest2(h);
        return dec3(h);
    }

    ImageBuffer decode(const Tensor<T>& z) const {
        return tensor_to_image(decode_raw(scale(z, T(1) / latent_scale)));
    }

    // mean over elements of -0.5 (1 + logvar - mean^2 - exp(logvar)); zero
    // exactly at the standard-normal posterior.
    static Tensor<T> kl_penalty(const Posterior& p) {
        Tensor<T> mean_sq = mul(p.mean, p.mean);
        Tensor<T> inner = sub(add_scalar(sub(p.logvar, mean_sq), T(1)), exp_(p.logvar));
        return scale(mean_all(inner), T(-0.5));
    }
};

}  // namespace cclap
