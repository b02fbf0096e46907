#pragma once

#include <cmath>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "cclap/tensor.hpp"

namespace cclap {

template <typename T>
struct Conv {
    Tensor<T> w, b;
    int stride = 1;
    Pad pad = Pad::SameZero;
    bool has_bias = true;

    void init(int cout, int cin, int k, Rng& rng, int stride_ = 1, Pad pad_ = Pad::SameZero,
              bool bias = true) {
        // He-style fan-in scaling
        T s = static_cast<T>(std::sqrt(2.0 / (cin * k * k)));
        w = Tensor<T>::randn({cout, cin, k, k}, rng, s);
        has_bias = bias;
        if (bias) b = Tensor<T>::zeros({cout});
        stride = stride_;
        pad = pad_;
    }

    void init_zero(int cout, int cin, int k, int stride_ = 1, Pad pad_ = Pad::SameZero,
                   bool bias = false) {
        w = Tensor<T>::zeros({cout, cin, k, k});
        has_bias = bias;
        if (bias) b = Tensor<T>::zeros({cout});
        stride = stride_;
        pad = pad_;
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        return conv2d(x, w, has_bias ? &b : nullptr, stride, pad);
    }

    void collect(const std::string& name, std::vector<std::pair<std::string, Tensor<T>*>>& out) {
        out.emplace_back(name + ".w", &w);
        if (has_bias) out.emplace_back(name + ".b", &b);
    }
};

template <typename T>
struct Dense {
    Tensor<T> w, b;

    void init(int in, int out, Rng& rng) {
        T s = static_cast<T>(std::sqrt(2.0 / in));
        w = Tensor<T>::randn({in, out}, rng, s);
        b = Tensor<T>::zeros({out});
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return add_rowvec(matmul(x, w), b); }

    void collect(const std::string& name, std::vector<std::pair<std::string, Tensor<T>*>>& out) {
        out.emplace_back(name + ".w", &w);
        out.emplace_back(name + ".b", &b);
    }
};

using NamedParams = std::vector<std::pair<std::string, Tensor<float>*>>;

}  // namespace cclap
