#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cclap/errors.hpp"
#include "cclap/tensor.hpp"

namespace cclap {

constexpr int kMaxTokens = 16;

// Closed-world vocabulary: <pad> = 0, <unk> = 1, then corpus words in first-seen order.
struct Vocab {
    std::vector<std::string> words;  // id order
    std::map<std::string, int> index;

    Vocab() { add("<pad>"), add("<unk>"); }

    int add(const std::string& w) {
        auto it = index.find(w);
        if (it != index.end()) return it->second;
        int id = static_cast<int>(words.size());
        words.push_back(w);
        index.emplace(w, id);
        return id;
    }
    int lookup(const std::string& w) const {
        auto it = index.find(w);
        return it == index.end() ? 1 : it->second;
    }
    int size() const { return static_cast<int>(words.size()); }

    static Vocab from_words(const std::vector<std::string>& ws) {
        Vocab v;
        for (const auto& w : ws)
            if (w != "<pad>" && w != "<unk>") v.add(w);
        return v;
    }
};

inline std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct TokenSequence {
    std::vector<int> ids;   // length kMaxTokens, trailing <pad>
    std::vector<int> mask;  // 1 at real tokens

    int real_count() const {
        int n = 0;
        for (int m : mask) n += m;
        return n;
    }
};

// Lowercase, split on non-alphanumerics, map to ids, truncate/pad to kMaxTokens.
inline TokenSequence tokenize(const std::string& text, const Vocab& vocab) {
    TokenSequence seq;
    seq.ids.assign(kMaxTokens, 0);
    seq.mask.assign(kMaxTokens, 0);
    auto words = split_words(text);
    for (size_t i = 0; i < words.size() && i < kMaxTokens; ++i) {
        seq.ids[i] = vocab.lookup(words[i]);
        seq.mask[i] = 1;
    }
    return seq;
}

// softmax(Q K^T / sqrt(d)) V with Q = phi Wq, K = cond Wk, V = cond Wv.
// Padded key positions get -1e9 logits before the softmax.
template <typename T>
Tensor<T> cross_attention(const Tensor<T>& phi, const Tensor<T>& cond,
                          const Tensor<T>& wq, const Tensor<T>& wk, const Tensor<T>& wv,
                          const std::vector<int>& key_mask) {
    if (phi.rank() != 2 || cond.rank() != 2) throw ShapeError("cross_attention: 2-D inputs required");
    if (static_cast<int>(key_mask.size()) != cond.shape[0])
        throw ShapeError("cross_attention: mask length mismatch");
    Tensor<T> q = matmul(phi, wq);
    Tensor<T> k = matmul(cond, wk);
    Tensor<T> v = matmul(cond, wv);
    const int d = k.shape[1];
    Tensor<T> logits = scale(matmul(q, transpose(k)), T(1) / std::sqrt(static_cast<T>(d)));
    Tensor<T> bias({cond.shape[0]});
    for (int j = 0; j < cond.shape[0]; ++j) (*bias.data)[j] = key_mask[j] ? T(0) : T(-1e9);
    Tensor<T> weights = softmax_rows(add_rowvec(logits, bias));
    return matmul(weights, v);
}

// Attention weights alone (test and inspection hook).
template <typename T>
Tensor<T> cross_attention_weights(const Tensor<T>& phi, const Tensor<T>& cond,
                                  const Tensor<T>& wq, const Tensor<T>& wk,
                                  const std::vector<int>& key_mask) {
    Tensor<T> q = matmul(phi, wq);
    Tensor<T> k = matmul(cond, wk);
    const int d = k.shape[1];
    Tensor<T> logits = scale(matmul(q, transpose(k)), T(1) / std::sqrt(static_cast<T>(d)));
    Tensor<T> bias({cond.shape[0]});
    for (int j = 0; j < cond.shape[0]; ++j) (*bias.data)[j] = key_mask[j] ? T(0) : T(-1e9);
    return softmax_rows(add_rowvec(logits, bias));
}

// Domain text encoder tau_theta: embedding + learned positions, one masked
// self-attention block, feed-forward, padded rows zeroed.
template <typename T>
struct TextEncoder {
    int vocab_size = 0;
    int d_txt = 32;
    Tensor<T> tok_emb, pos_emb;              // [V,d], [L,d]
    Tensor<T> wq, wk, wv, wo;                // [d,d]
    Tensor<T> ff1_w, ff1_b, ff2_w, ff2_b;    // [d,2d],[2d],[2d,d],[d]

    void init(int vocab_sz, Rng& rng, int width = 32) {
        vocab_size = vocab_sz;
        d_txt = width;
        const T s = T(0.08);
        tok_emb = Tensor<T>::randn({vocab_sz, d_txt}, rng, s);
        pos_emb = Tensor<T>::randn({kMaxTokens, d_txt}, rng, s);
        wq = Tensor<T>::randn({d_txt, d_txt}, rng, s);
        wk = Tensor<T>::randn({d_txt, d_txt}, rng, s);
        wv = Tensor<T>::randn({d_txt, d_txt}, rng, s);
        wo = Tensor<T>::randn({d_txt, d_txt}, rng, s);
        ff1_w = Tensor<T>::randn({d_txt, 2 * d_txt}, rng, s);
        ff1_b = Tensor<T>::zeros({2 * d_txt});
        ff2_w = Tensor<T>::randn({2 * d_txt, d_txt}, rng, s);
        ff2_b = Tensor<T>::zeros({d_txt});
    }

    std::vector<std::pair<std::string, Tensor<T>*>> named_params() {
        return {{"tok_emb", &tok_emb}, {"pos_emb", &pos_emb}, {"wq", &wq}, {"wk", &wk},
                {"wv", &wv},           {"wo", &wo},           {"ff1_w", &ff1_w},
                {"ff1_b", &ff1_b},     {"ff2_w", &ff2_w},     {"ff2_b", &ff2_b}};
    }

    // Returns the conditioning matrix [kMaxTokens, d_txt]; padded rows are exactly zero.
    Tensor<T> forward(const TokenSequence& seq) const {
        Tensor<T> x = add(gather_rows(tok_emb, seq.ids), pos_emb);
        // self-attention with padded keys masked out
        Tensor<T> q = matmul(x, wq);
        Tensor<T> k = matmul(x, wk);
        Tensor<T> v = matmul(x, wv);
        Tensor<T> logits = scale(matmul(q, transpose(k)), T(1) / std::sqrt(static_cast<T>(d_txt)));
        Tensor<T> bias({kMaxTokens});
        for (int j = 0; j < kMaxTokens; ++j) (*bias.data)[j] = seq.mask[j] ? T(0) : T(-1e9);
        Tensor<T> att = matmul(softmax_rows(add_rowvec(logits, bias)), v);
        x = layernorm_rows(add(x, matmul(att, wo)));
        Tensor<T> h = relu(add_rowvec(matmul(x, ff1_w), ff1_b));
        x = layernorm_rows(add(x, add_rowvec(matmul(h, ff2_w), ff2_b)));
        // zero padded rows
        Tensor<T> rowmask({kMaxTokens});
        for (int j = 0; j < kMaxTokens; ++j) (*rowmask.data)[j] = static_cast<T>(seq.mask[j]);
        return scale_rows(x, rowmask);
    }
};

}  // namespace cclap
