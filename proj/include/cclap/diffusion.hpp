#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "cclap/errors.hpp"
#include "cclap/rng.hpp"
#include "cclap/tensor.hpp"

namespace cclap {

using Latent = Tensor<float>;

// beta/alpha/alpha_bar tables, t in {0..T-1}. Kept in double; the per-element
// diffusion arithmetic below also runs in double before rounding to f32.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta, alpha, alpha_bar;

    double sigma(int t) const { return t > 0 ? std::sqrt(beta[t]) : 0.0; }
};

inline NoiseSchedule build_schedule(int T, double beta_start, double beta_end) {
    if (T < 2) throw ConfigError("build_schedule: T must be >= 2");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw ConfigError("build_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        s.beta[t] = beta_start + (beta_end - beta_start) * t / (T - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

namespace detail {
inline void check_t(const NoiseSchedule& s, int t) {
    if (t < 0 || t >= s.T) throw ContractError("diffusion: timestep out of range");
}
}  // namespace detail

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
inline Latent forward_diffuse(const Latent& z0, int t, const Latent& eps, const NoiseSchedule& s) {
    detail::check_t(s, t);
    if (z0.shape != eps.shape) throw ContractError("forward_diffuse: shape mismatch");
    const double a = std::sqrt(s.alpha_bar[t]);
    const double b = std::sqrt(1.0 - s.alpha_bar[t]);
    Latent out(z0.shape);
    for (size_t i = 0; i < z0.numel(); ++i)
        (*out.data)[i] = static_cast<float>(a * (*z0.data)[i] + b * (*eps.data)[i]);
    return out;
}

// Exact inversion of forward_diffuse given the true eps: z0 = (z_t - sqrt(1-abar) eps) / sqrt(abar).
inline Latent invert_forward(const Latent& z_t, int t, const Latent& eps, const NoiseSchedule& s) {
    detail::check_t(s, t);
    if (z_t.shape != eps.shape) throw ContractError("invert_forward: shape mismatch");
    const double a = std::sqrt(s.alpha_bar[t]);
    const double b = std::sqrt(1.0 - s.alpha_bar[t]);
    Latent out(z_t.shape);
    for (size_t i = 0; i < z_t.numel(); ++i)
        (*out.data)[i] = static_cast<float>(((*z_t.data)[i] - b * (*eps.data)[i]) / a);
    return out;
}

// Mean over elements of squared difference (mean-reduction MSE).
template <typename T>
Tensor<T> epsilon_loss_t(const Tensor<T>& eps, const Tensor<T>& eps_pred) {
    if (eps.shape != eps_pred.shape) throw ContractError("epsilon_loss: shape mismatch");
    Tensor<T> d = sub(eps_pred, eps);
    return mean_all(mul(d, d));
}

inline float epsilon_loss(const Latent& eps, const Latent& eps_pred) {
    return epsilon_loss_t(eps, eps_pred).item();
}

// Ancestral step: z_{t-1} = (z_t - beta_t/sqrt(1-abar_t) eps_pred)/sqrt(alpha_t) + sigma_t * noise.
// noise is required for t > 0 and forbidden at t = 0.
inline Latent denoise_step(const Latent& z_t, int t, const Latent& eps_pred,
                           const NoiseSchedule& s, const Latent* noise) {
    detail::check_t(s, t);
    if (z_t.shape != eps_pred.shape) throw ContractError("denoise_step: shape mismatch");
    if (t == 0 && noise) throw ContractError("denoise_step: noise forbidden at t=0");
    if (t > 0 && !noise) throw ContractError("denoise_step: noise required at t>0");
    if (noise && noise->shape != z_t.shape) throw ContractError("denoise_step: noise shape mismatch");
    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha[t]);
    const double coef = s.beta[t] / std::sqrt(1.0 - s.alpha_bar[t]);
    const double sig = s.sigma(t);
    Latent out(z_t.shape);
    for (size_t i = 0; i < z_t.numel(); ++i) {
        double v = inv_sqrt_alpha * ((*z_t.data)[i] - coef * (*eps_pred.data)[i]);
        if (noise) v += sig * (*noise->data)[i];
        (*out.data)[i] = static_cast<float>(v);
    }
    return out;
}

// Denoiser handle used by the sampler; implementations close over weights
// and the text conditioning.
using DenoiserFn = std::function<Latent(const Latent& z_t, int t)>;

struct SampleOptions {
    bool deterministic = false;  // sigma = 0 variant (noise-free ancestral walk)
};

// Ancestral sampling from seeded standard-normal z_T down to t = 0.
inline Latent sample(const DenoiserFn& net, const std::vector<int>& latent_shape,
                     const NoiseSchedule& s, uint64_t seed, SampleOptions opt = {}) {
    Rng rng(seed);
    Latent z(latent_shape);
    for (auto& v : *z.data) v = static_cast<float>(rng.normal());
    for (int t = s.T - 1; t >= 0; --t) {
        Latent eps_pred = net(z, t);
        if (t > 0 && !opt.deterministic) {
            Latent noise(latent_shape);
            for (auto& v : *noise.data) v = static_cast<float>(rng.normal());
            z = denoise_step(z, t, eps_pred, s, &noise);
        } else if (t > 0) {
            Latent zero = Latent::zeros(latent_shape);
            z = denoise_step(z, t, eps_pred, s, &zero);
        } else {
            z = denoise_step(z, t, eps_pred, s, nullptr);
        }
    }
    return z;
}

}  // namespace cclap
