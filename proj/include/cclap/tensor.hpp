#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "cclap/errors.hpp"
#include "cclap/rng.hpp"

namespace cclap {

inline size_t numel_of(const std::vector<int>& shape) {
    size_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw ShapeError("tensor extent must be positive");
        n *= static_cast<size_t>(e);
    }
    return n;
}

// Dense row-major tensor. Value semantics over shared storage: copies alias
// the same buffer, and no primitive writes to an existing buffer.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<T>> data;
    std::shared_ptr<std::vector<T>> grad;  // always allocated: backward closures
                                           // capture it at op-record time

    Tensor() = default;
    explicit Tensor(std::vector<int> s)
        : shape(std::move(s)),
          data(std::make_shared<std::vector<T>>(numel_of(shape), T(0))),
          grad(std::make_shared<std::vector<T>>(data->size(), T(0))) {}
    Tensor(std::vector<int> s, std::vector<T> values) : shape(std::move(s)) {
        if (numel_of(shape) != values.size()) throw ShapeError("tensor data does not match shape");
        data = std::make_shared<std::vector<T>>(std::move(values));
        grad = std::make_shared<std::vector<T>>(data->size(), T(0));
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int> s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data->begin(), t.data->end(), v);
        return t;
    }

    static Tensor randn(std::vector<int> s, Rng& rng, T stddev = T(1)) {
        Tensor t(std::move(s));
        for (auto& v : *t.data) v = static_cast<T>(rng.normal()) * stddev;
        return t;
    }

    size_t numel() const { return data ? data->size() : 0; }
    int rank() const { return static_cast<int>(shape.size()); }
    bool defined() const { return static_cast<bool>(data); }

    T& operator[](size_t i) { return (*data)[i]; }
    const T& operator[](size_t i) const { return (*data)[i]; }

    T item() const {
        if (numel() != 1) throw ContractError("item(): tensor is not scalar");
        return (*data)[0];
    }

    void ensure_grad() {
        if (!grad) grad = std::make_shared<std::vector<T>>(data->size(), T(0));
    }
    void zero_grad() {
        if (grad) std::fill(grad->begin(), grad->end(), T(0));
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (size_t i = 0; i < numel(); ++i) (*out.data)[i] = static_cast<U>((*data)[i]);
        return out;
    }
};

// Reverse-mode tape. Primitives applied while a tape is active push a
// backward closure; backward() replays them in reverse execution order,
// which is a reverse topological order of the recorded graph.
template <typename T>
class GradientTape {
public:
    GradientTape() : prev_(slot()) { slot() = this; }
    ~GradientTape() { slot() = prev_; }
    GradientTape(const GradientTape&) = delete;
    GradientTape& operator=(const GradientTape&) = delete;

    static GradientTape* active() { return slot(); }

    void record(std::function<void()> f) { ops_.push_back(std::move(f)); }

    void backward(Tensor<T>& loss) {
        if (loss.numel() != 1) throw ContractError("backward: loss must be scalar");
        loss.ensure_grad();
        (*loss.grad)[0] += T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

    size_t size() const { return ops_.size(); }

private:
    static GradientTape*& slot() {
        thread_local GradientTape* cur = nullptr;
        return cur;
    }
    std::vector<std::function<void()>> ops_;
    GradientTape* prev_;
};

namespace detail {

template <typename T>
inline void check_finite(const Tensor<T>& t, const char* op) {
    for (const T& v : *t.data) {
        if (!std::isfinite(static_cast<double>(v)))
            throw ContractError(std::string(op) + ": non-finite value produced");
    }
}

template <typename T, typename F>
inline void maybe_record(F&& backward, std::initializer_list<const Tensor<T>*> inputs, Tensor<T>& out) {
    auto* tape = GradientTape<T>::active();
    if (!tape) return;
    for (const Tensor<T>* in : inputs) const_cast<Tensor<T>*>(in)->ensure_grad();
    out.ensure_grad();
    tape->record(std::forward<F>(backward));
}

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape != b.shape) throw ShapeError(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise primitives
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
    detail::check_finite(out, "add");
    detail::maybe_record<T>(
        [ga = a.grad, gb = b.grad, go = out.grad]() {
            for (size_t i = 0; i < go->size(); ++i) {
                (*ga)[i] += (*go)[i];
                (*gb)[i] += (*go)[i];
            }
        },
        {&a, &b}, out);
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] - (*b.data)[i];
    detail::check_finite(out, "sub");
    detail::maybe_record<T>(
        [ga = a.grad, gb = b.grad, go = out.grad]() {
            for (size_t i = 0; i < go->size(); ++i) {
                (*ga)[i] += (*go)[i];
                (*gb)[i] -= (*go)[i];
            }
        },
        {&a, &b}, out);
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
    detail::check_finite(out, "mul");
    detail::maybe_record<T>(
        [da = a.data, db = b.data, ga = a.grad, gb = b.grad, go = out.grad]() {
            for (size_t i = 0; i < go->size(); ++i) {
                (*ga)[i] += (*go)[i] * (*db)[i];
                (*gb)[i] += (*go)[i] * (*da)[i];
            }
        },
        {&a, &b}, out);
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] * c;
    detail::check_finite(out, "scale");
    detail::maybe_record<T>(
        [c, ga = a.grad, go = out.grad]() {
            for (size_t i = 0; i < go->size(); ++i) (*ga)[i] += (*go)[i] * c;
        },
        {&a}, out);
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] + c;
    detail::check_finite(out, "add_scalar");
    detail::maybe_record<T>(
        [ga = a.grad, go = out.grad]() {
            for (size_t i = 0; i < go->size(); ++i) (*ga)[i] += (*go)[i];
        },
        {&a}, out);
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = (*a.data)[i] > T(0) ? (*a.data)[i] : T(0);
    detail::maybe_record<T>(
        [da = a.data, ga = a.grad, go = out.grad]() {
            for (size_t i = 0; i < go->size(); ++i)
                if ((*da)[i] > T(0)) (*ga)[i] += (*go)[i];
        },
        {&a}, out);
    return out;
}

template <typename T>
Tensor<T> exp_(const Tensor<T>& a) {
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = std::exp((*a.data)[i]);
    detail::check_finite(out, "exp");
    detail::maybe_record<T>(
        [do_ = out.data, ga = a.grad, go = out.grad]() {
            for (size_t i = 0; i < go->size(); ++i) (*ga)[i] += (*go)[i] * (*do_)[i];
        },
        {&a}, out);
    return out;
}

template <typename T>
Tensor<T> sqrt_(const Tensor<T>& a) {
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) {
        if ((*a.data)[i] < T(0)) throw ContractError("sqrt: negative input");
        (*out.data)[i] = std::sqrt((*a.data)[i]);
    }
    detail::maybe_record<T>(
        [do_ = out.data, ga = a.grad, go = out.grad]() {
            for (size_t i = 0; i < go->size(); ++i) (*ga)[i] += (*go)[i] / (T(2) * (*do_)[i]);
        },
        {&a}, out);
    return out;
}

template <typename T>
Tensor<T> abs_(const Tensor<T>& a) {
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = std::abs((*a.data)[i]);
    detail::maybe_record<T>(
        [da = a.data, ga = a.grad, go = out.grad]() {
            for (size_t i = 0; i < go->size(); ++i) {
                T s = (*da)[i] > T(0) ? T(1) : ((*da)[i] < T(0) ? T(-1) : T(0));
                (*ga)[i] += (*go)[i] * s;
            }
        },
        {&a}, out);
    return out;
}

template <typename T>
Tensor<T> recip(const Tensor<T>& a) {
    Tensor<T> out(a.shape);
    for (size_t i = 0; i < a.numel(); ++i) (*out.data)[i] = T(1) / (*a.data)[i];
    detail::check_finite(out, "recip");
    detail::maybe_record<T>(
        [do_ = out.data, ga = a.grad, go = out.grad]() {
            for (size_t i = 0; i < go->size(); ++i) (*ga)[i] -= (*go)[i] * (*do_)[i] * (*do_)[i];
        },
        {&a}, out);
    return out;
}

// ---------------------------------------------------------------------------
// Matrix primitives
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: 2-D tensors required");
    int m = a.shape[0], k = a.shape[1], k2 = b.shape[0], n = b.shape[1];
    if (k != k2) throw ShapeError("matmul: inner dimensions disagree");
    Tensor<T> out({m, n});
    const T* A = a.data->data();
    const T* B = b.data->data();
    T* O = out.data->data();
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            T av = A[i * k + p];
            if (av == T(0)) continue;
            const T* brow = B + p * n;
            T* orow = O + i * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    detail::check_finite(out, "matmul");
    detail::maybe_record<T>(
        [m, k, n, da = a.data, db = b.data, ga = a.grad, gb = b.grad, go = out.grad]() {
            const T* A = da->data();
            const T* B = db->data();
            const T* G = go->data();
            T* GA = ga->data();
            T* GB = gb->data();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    T g = G[i * n + j];
                    if (g == T(0)) continue;
                    for (int p = 0; p < k; ++p) {
                        GA[i * k + p] += g * B[p * n + j];
                        GB[p * n + j] += g * A[i * k + p];
                    }
                }
        },
        {&a, &b}, out);
    return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    if (a.rank() != 2) throw ShapeError("transpose: 2-D tensor required");
    int m = a.shape[0], n = a.shape[1];
    Tensor<T> out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) (*out.data)[j * m + i] = (*a.data)[i * n + j];
    detail::maybe_record<T>(
        [m, n, ga = a.grad, go = out.grad]() {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) (*ga)[i * n + j] += (*go)[j * m + i];
        },
        {&a}, out);
    return out;
}

// View with a new shape; shares data (and grad when a tape is active).
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<int> shape) {
    if (numel_of(shape) != a.numel()) throw ShapeError("reshape: element count mismatch");
    Tensor<T> out;
    out.shape = std::move(shape);
    out.data = a.data;
    if (GradientTape<T>::active()) {
        const_cast<Tensor<T>&>(a).ensure_grad();
    }
    out.grad = a.grad;
    return out;
}

// Broadcast-add a row vector to every row of a matrix.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& v) {
    if (a.rank() != 2 || v.rank() != 1 || v.shape[0] != a.shape[1])
        throw ShapeError("add_rowvec: need [m,n] and [n]");
    int m = a.shape[0], n = a.shape[1];
    Tensor<T> out(a.shape);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) (*out.data)[i * n + j] = (*a.data)[i * n + j] + (*v.data)[j];
    detail::check_finite(out, "add_rowvec");
    detail::maybe_record<T>(
        [m, n, ga = a.grad, gv = v.grad, go = out.grad]() {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    (*ga)[i * n + j] += (*go)[i * n + j];
                    (*gv)[j] += (*go)[i * n + j];
                }
        },
        {&a, &v}, out);
    return out;
}

// Multiply each row i of a matrix by s[i].
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& a, const Tensor<T>& s) {
    if (a.rank() != 2 || s.rank() != 1 || s.shape[0] != a.shape[0])
        throw ShapeError("scale_rows: need [m,n] and [m]");
    int m = a.shape[0], n = a.shape[1];
    Tensor<T> out(a.shape);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) (*out.data)[i * n + j] = (*a.data)[i * n + j] * (*s.data)[i];
    detail::check_finite(out, "scale_rows");
    detail::maybe_record<T>(
        [m, n, da = a.data, ds = s.data, ga = a.grad, gs = s.grad, go = out.grad]() {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    (*ga)[i * n + j] += (*go)[i * n + j] * (*ds)[i];
                    (*gs)[i] += (*go)[i * n + j] * (*da)[i * n + j];
                }
        },
        {&a, &s}, out);
    return out;
}

// Per-channel bias over a [C,H,W] feature map.
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& b) {
    if (x.rank() != 3 || b.rank() != 1 || b.shape[0] != x.shape[0])
        throw ShapeError("add_channel_bias: need [C,H,W] and [C]");
    int c = x.shape[0];
    int hw = x.shape[1] * x.shape[2];
    Tensor<T> out(x.shape);
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < hw; ++i) (*out.data)[ch * hw + i] = (*x.data)[ch * hw + i] + (*b.data)[ch];
    detail::check_finite(out, "add_channel_bias");
    detail::maybe_record<T>(
        [c, hw, gx = x.grad, gb = b.grad, go = out.grad]() {
            for (int ch = 0; ch < c; ++ch)
                for (int i = 0; i < hw; ++i) {
                    (*gx)[ch * hw + i] += (*go)[ch * hw + i];
                    (*gb)[ch] += (*go)[ch * hw + i];
                }
        },
        {&x, &b}, out);
    return out;
}

// Gather rows of a [V,d] table; backward scatter-adds. Doubles as both the
// embedding lookup and a row-subsampling primitive.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw ShapeError("gather_rows: 2-D table required");
    int v = table.shape[0], d = table.shape[1];
    for (int id : ids)
        if (id < 0 || id >= v) throw ContractError("gather_rows: index out of range");
    Tensor<T> out({static_cast<int>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.data->data() + static_cast<size_t>(ids[i]) * d, d,
                    out.data->data() + i * d);
    detail::maybe_record<T>(
        [ids, d, gt = table.grad, go = out.grad]() {
            for (size_t i = 0; i < ids.size(); ++i)
                for (int j = 0; j < d; ++j)
                    (*gt)[static_cast<size_t>(ids[i]) * d + j] += (*go)[i * d + j];
        },
        {&table}, out);
    return out;
}

// ---------------------------------------------------------------------------
// Reductions and normalizations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
    Tensor<T> out({1});
    T s = T(0);
    for (size_t i = 0; i < a.numel(); ++i) s += (*a.data)[i];
    (*out.data)[0] = s / static_cast<T>(a.numel());
    detail::check_finite(out, "mean_all");
    detail::maybe_record<T>(
        [n = a.numel(), ga = a.grad, go = out.grad]() {
            T g = (*go)[0] / static_cast<T>(n);
            for (size_t i = 0; i < n; ++i) (*ga)[i] += g;
        },
        {&a}, out);
    return out;
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
    if (a.rank() != 2) throw ShapeError("mean_rows: 2-D tensor required");
    int m = a.shape[0], n = a.shape[1];
    Tensor<T> out({m});
    for (int i = 0; i < m; ++i) {
        T s = T(0);
        for (int j = 0; j < n; ++j) s += (*a.data)[i * n + j];
        (*out.data)[i] = s / static_cast<T>(n);
    }
    detail::check_finite(out, "mean_rows");
    detail::maybe_record<T>(
        [m, n, ga = a.grad, go = out.grad]() {
            for (int i = 0; i < m; ++i) {
                T g = (*go)[i] / static_cast<T>(n);
                for (int j = 0; j < n; ++j) (*ga)[i * n + j] += g;
            }
        },
        {&a}, out);
    return out;
}

// Row-wise minimum; gradient flows to the first argmin of each row.
template <typename T>
Tensor<T> min_rows(const Tensor<T>& a) {
    if (a.rank() != 2) throw ShapeError("min_rows: 2-D tensor required");
    int m = a.shape[0], n = a.shape[1];
    Tensor<T> out({m});
    std::vector<int> arg(m);
    for (int i = 0; i < m; ++i) {
        int best = 0;
        for (int j = 1; j < n; ++j)
            if ((*a.data)[i * n + j] < (*a.data)[i * n + best]) best = j;
        arg[i] = best;
        (*out.data)[i] = (*a.data)[i * n + best];
    }
    detail::maybe_record<T>(
        [m, n, arg, ga = a.grad, go = out.grad]() {
            for (int i = 0; i < m; ++i) (*ga)[i * n + arg[i]] += (*go)[i];
        },
        {&a}, out);
    return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax_rows: 2-D tensor required");
    int m = logits.shape[0], n = logits.shape[1];
    Tensor<T> out(logits.shape);
    for (int i = 0; i < m; ++i) {
        const T* row = logits.data->data() + static_cast<size_t>(i) * n;
        T mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        T denom = T(0);
        T* orow = out.data->data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            denom += orow[j];
        }
        for (int j = 0; j < n; ++j) orow[j] /= denom;
    }
    detail::check_finite(out, "softmax_rows");
    detail::maybe_record<T>(
        [m, n, do_ = out.data, ga = logits.grad, go = out.grad]() {
            for (int i = 0; i < m; ++i) {
                const T* y = do_->data() + static_cast<size_t>(i) * n;
                const T* g = go->data() + static_cast<size_t>(i) * n;
                T dot = T(0);
                for (int j = 0; j < n; ++j) dot += y[j] * g[j];
                for (int j = 0; j < n; ++j) (*ga)[static_cast<size_t>(i) * n + j] += y[j] * (g[j] - dot);
            }
        },
        {&logits}, out);
    return out;
}

// Normalize each row to zero mean and unit variance (layer-norm style,
// no learned affine; compose with scale_rows/add_rowvec where needed).
template <typename T>
Tensor<T> layernorm_rows(const Tensor<T>& a, T eps = T(1e-5)) {
    if (a.rank() != 2) throw ShapeError("layernorm_rows: 2-D tensor required");
    int m = a.shape[0], n = a.shape[1];
    Tensor<T> out(a.shape);
    auto inv_sigma = std::make_shared<std::vector<T>>(m);
    for (int i = 0; i < m; ++i) {
        const T* row = a.data->data() + static_cast<size_t>(i) * n;
        T mu = T(0);
        for (int j = 0; j < n; ++j) mu += row[j];
        mu /= static_cast<T>(n);
        T var = T(0);
        for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<T>(n);
        T is = T(1) / std::sqrt(var + eps);
        (*inv_sigma)[i] = is;
        T* orow = out.data->data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] = (row[j] - mu) * is;
    }
    detail::check_finite(out, "layernorm_rows");
    detail::maybe_record<T>(
        [m, n, inv_sigma, do_ = out.data, ga = a.grad, go = out.grad]() {
            for (int i = 0; i < m; ++i) {
                const T* y = do_->data() + static_cast<size_t>(i) * n;
                const T* g = go->data() + static_cast<size_t>(i) * n;
                T gmean = T(0), gymean = T(0);
                for (int j = 0; j < n; ++j) {
                    gmean += g[j];
                    gymean += g[j] * y[j];
                }
                gmean /= static_cast<T>(n);
                gymean /= static_cast<T>(n);
                T is = (*inv_sigma)[i];
                for (int j = 0; j < n; ++j)
                    (*ga)[static_cast<size_t>(i) * n + j] += (g[j] - gmean - y[j] * gymean) * is;
            }
        },
        {&a}, out);
    return out;
}

// ---------------------------------------------------------------------------
// Spatial primitives over [C,H,W] maps
// ---------------------------------------------------------------------------

enum class Pad { Valid, SameZero, SameReplicate };

namespace detail {

struct ConvGeom {
    int out_h, out_w, pad_top, pad_left;
};

inline ConvGeom conv_geom(int h, int w, int kh, int kw, int stride, Pad pad) {
    if (stride != 1 && stride != 2) throw ConfigError("conv2d: stride must be 1 or 2");
    ConvGeom g{};
    if (pad == Pad::Valid) {
        if (h < kh || w < kw) throw ShapeError("conv2d: input smaller than kernel");
        g.out_h = (h - kh) / stride + 1;
        g.out_w = (w - kw) / stride + 1;
        g.pad_top = g.pad_left = 0;
    } else {
        g.out_h = (h + stride - 1) / stride;
        g.out_w = (w + stride - 1) / stride;
        int pt = std::max((g.out_h - 1) * stride + kh - h, 0);
        int pl = std::max((g.out_w - 1) * stride + kw - w, 0);
        g.pad_top = pt / 2;
        g.pad_left = pl / 2;
    }
    return g;
}

}  // namespace detail

// 2-D convolution: x [Cin,H,W], w [Cout,Cin,kh,kw], optional bias [Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                 int stride, Pad pad) {
    if (x.rank() != 3 || w.rank() != 4) throw ShapeError("conv2d: need [Cin,H,W] and [Cout,Cin,kh,kw]");
    int cin = x.shape[0], h = x.shape[1], wd = x.shape[2];
    int cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    if (w.shape[1] != cin) throw ShapeError("conv2d: channel mismatch");
    if (bias && (bias->rank() != 1 || bias->shape[0] != cout)) throw ShapeError("conv2d: bad bias");
    auto g = detail::conv_geom(h, wd, kh, kw, stride, pad);
    const bool rep = (pad == Pad::SameReplicate);

    Tensor<T> out({cout, g.out_h, g.out_w});
    const T* X = x.data->data();
    const T* W = w.data->data();
    T* O = out.data->data();
    for (int oc = 0; oc < cout; ++oc) {
        T b = bias ? (*bias->data)[oc] : T(0);
        for (int oy = 0; oy < g.out_h; ++oy)
            for (int ox = 0; ox < g.out_w; ++ox) {
                T acc = b;
                for (int ic = 0; ic < cin; ++ic)
                    for (int ky = 0; ky < kh; ++ky) {
                        int iy = oy * stride + ky - g.pad_top;
                        int cy = rep ? std::clamp(iy, 0, h - 1) : iy;
                        if (!rep && (iy < 0 || iy >= h)) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            int ix = ox * stride + kx - g.pad_left;
                            int cx = rep ? std::clamp(ix, 0, wd - 1) : ix;
                            if (!rep && (ix < 0 || ix >= wd)) continue;
                            acc += X[(ic * h + cy) * wd + cx] *
                                   W[((oc * cin + ic) * kh + ky) * kw + kx];
                        }
                    }
                O[(oc * g.out_h + oy) * g.out_w + ox] = acc;
            }
    }
    detail::check_finite(out, "conv2d");

    auto* tape = GradientTape<T>::active();
    if (tape) {
        const_cast<Tensor<T>&>(x).ensure_grad();
        const_cast<Tensor<T>&>(w).ensure_grad();
        std::shared_ptr<std::vector<T>> gb;
        if (bias) {
            const_cast<Tensor<T>*>(bias)->ensure_grad();
            gb = bias->grad;
        }
        out.ensure_grad();
        tape->record([cin, h, wd, cout, kh, kw, stride, g, rep, dx = x.data, dw = w.data,
                      gx = x.grad, gw = w.grad, gb, go = out.grad]() {
            const T* X = dx->data();
            const T* W = dw->data();
            const T* G = go->data();
            for (int oc = 0; oc < cout; ++oc)
                for (int oy = 0; oy < g.out_h; ++oy)
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        T gv = G[(oc * g.out_h + oy) * g.out_w + ox];
                        if (gv == T(0)) continue;
                        if (gb) (*gb)[oc] += gv;
                        for (int ic = 0; ic < cin; ++ic)
                            for (int ky = 0; ky < kh; ++ky) {
                                int iy = oy * stride + ky - g.pad_top;
                                int cy = rep ? std::clamp(iy, 0, h - 1) : iy;
                                if (!rep && (iy < 0 || iy >= h)) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    int ix = ox * stride + kx - g.pad_left;
                                    int cx = rep ? std::clamp(ix, 0, wd - 1) : ix;
                                    if (!rep && (ix < 0 || ix >= wd)) continue;
                                    size_t wi = ((static_cast<size_t>(oc) * cin + ic) * kh + ky) * kw + kx;
                                    size_t xi = (static_cast<size_t>(ic) * h + cy) * wd + cx;
                                    (*gx)[xi] += gv * W[wi];
                                    (*gw)[wi] += gv * X[xi];
                                }
                            }
                    }
        });
    }
    return out;
}

template <typename T>
Tensor<T> upsample_nearest2(const Tensor<T>& x) {
    if (x.rank() != 3) throw ShapeError("upsample_nearest2: [C,H,W] required");
    int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    Tensor<T> out({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                (*out.data)[(ch * 2 * h + y) * 2 * w + xx] = (*x.data)[(ch * h + y / 2) * w + xx / 2];
    detail::maybe_record<T>(
        [c, h, w, gx = x.grad, go = out.grad]() {
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < 2 * h; ++y)
                    for (int xx = 0; xx < 2 * w; ++xx)
                        (*gx)[(ch * h + y / 2) * w + xx / 2] += (*go)[(ch * 2 * h + y) * 2 * w + xx];
        },
        {&x}, out);
    return out;
}

// Fixed 4-neighbor discrete Laplacian per channel, replicate padding
// (constant maps respond with exact zero).
template <typename T>
Tensor<T> laplacian2d(const Tensor<T>& x) {
    if (x.rank() != 3) throw ShapeError("laplacian2d: [C,H,W] required");
    int c = x.shape[0], h = x.shape[1], w = x.shape[2];
    Tensor<T> out(x.shape);
    auto at = [&](int ch, int y, int xx) {
        y = std::clamp(y, 0, h - 1);
        xx = std::clamp(xx, 0, w - 1);
        return (*x.data)[(ch * h + y) * w + xx];
    };
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                (*out.data)[(ch * h + y) * w + xx] =
                    at(ch, y - 1, xx) + at(ch, y + 1, xx) + at(ch, y, xx - 1) + at(ch, y, xx + 1) -
                    T(4) * at(ch, y, xx);
    detail::maybe_record<T>(
        [c, h, w, gx = x.grad, go = out.grad]() {
            auto acc = [&](int ch, int y, int xx, T v) {
                y = std::clamp(y, 0, h - 1);
                xx = std::clamp(xx, 0, w - 1);
                (*gx)[(ch * h + y) * w + xx] += v;
            };
            for (int ch = 0; ch < c; ++ch)
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx) {
                        T g = (*go)[(ch * h + y) * w + xx];
                        if (g == T(0)) continue;
                        acc(ch, y - 1, xx, g);
                        acc(ch, y + 1, xx, g);
                        acc(ch, y, xx - 1, g);
                        acc(ch, y, xx + 1, g);
                        acc(ch, y, xx, T(-4) * g);
                    }
        },
        {&x}, out);
    return out;
}

// ---------------------------------------------------------------------------
// Gradient audit
// ---------------------------------------------------------------------------

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// f must map the tensor to a scalar tensor; evaluated in double precision.
template <typename F>
double grad_check(F f, Tensor<double>& x, double h) {
    if (h <= 0) throw ContractError("grad_check: h must be positive");
    x.zero_grad();
    std::vector<double> analytic;
    {
        GradientTape<double> tape;
        Tensor<double> loss = f(x);
        if (loss.numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
        tape.backward(loss);
        analytic = *x.grad;
    }
    x.zero_grad();
    double worst = 0.0;
    for (size_t i = 0; i < x.numel(); ++i) {
        double keep = (*x.data)[i];
        (*x.data)[i] = keep + h;
        double fp = f(x).item();
        (*x.data)[i] = keep - h;
        double fm = f(x).item();
        (*x.data)[i] = keep;
        double fd = (fp - fm) / (2.0 * h);
        double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(analytic[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace cclap
