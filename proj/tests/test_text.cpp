#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cclap/text.hpp"

using namespace cclap;

namespace {

Vocab tiny_vocab() {
    return Vocab::from_words({"a", "mountain", "river", "painting", "of"});
}

}  // namespace

TEST_CASE("tokenize contract") {
    Vocab v = tiny_vocab();

    auto t = tokenize("A Mountain", v);
    CHECK(t.ids.size() == kMaxTokens);
    CHECK(t.ids[0] == v.lookup("a"));
    CHECK(t.ids[1] == v.lookup("mountain"));
    CHECK(t.ids[2] == 0);  // <pad>
    CHECK(t.mask[0] == 1);
    CHECK(t.mask[1] == 1);
    CHECK(t.mask[2] == 0);
    CHECK(t.real_count() == 2);

    auto empty = tokenize("", v);
    CHECK(empty.real_count() == 0);
    for (int id : empty.ids) CHECK(id == 0);

    auto unk = tokenize("a zeppelin", v);
    CHECK(unk.ids[1] == 1);  // <unk>

    // truncation to the fixed window
    std::string longtext;
    for (int i = 0; i < 30; ++i) longtext += "mountain ";
    CHECK(tokenize(longtext, v).real_count() == kMaxTokens);
}

TEST_CASE("cross_attention closed forms") {
    // identity projections expose the raw formula
    Tensor<float> eye({2, 2}, {1.f, 0.f, 0.f, 1.f});

    SUBCASE("single real token: every query returns its V row") {
        Tensor<float> phi({3, 2}, {0.3f, -1.f, 2.f, 0.5f, 0.f, 0.f});
        Tensor<float> cond({2, 2}, {0.7f, -0.2f, 9.f, 9.f});  // row 1 is padding
        auto out = cross_attention(phi, cond, eye, eye, eye, {1, 0});
        for (int r = 0; r < 3; ++r) {
            CHECK((*out.data)[r * 2 + 0] == doctest::Approx(0.7f).epsilon(1e-6));
            CHECK((*out.data)[r * 2 + 1] == doctest::Approx(-0.2f).epsilon(1e-6));
        }
    }

    SUBCASE("duplicate real tokens average to the shared row") {
        Tensor<float> phi({1, 2}, {1.f, 2.f});
        Tensor<float> cond({2, 2}, {0.4f, 0.6f, 0.4f, 0.6f});
        auto out = cross_attention(phi, cond, eye, eye, eye, {1, 1});
        CHECK((*out.data)[0] == doctest::Approx(0.4f).epsilon(1e-6));
        CHECK((*out.data)[1] == doctest::Approx(0.6f).epsilon(1e-6));
    }

    SUBCASE("d=2 worked example") {
        Tensor<float> phi({1, 2}, {1.f, 0.f});
        Tensor<float> cond({2, 2}, {1.f, 0.f, 0.f, 1.f});
        auto w = cross_attention_weights(phi, cond, eye, eye, {1, 1});
        CHECK((*w.data)[0] == doctest::Approx(0.66971).epsilon(1e-4));
        CHECK((*w.data)[1] == doctest::Approx(0.33029).epsilon(1e-4));
        auto out = cross_attention(phi, cond, eye, eye, eye, {1, 1});
        CHECK((*out.data)[0] == doctest::Approx(0.66971).epsilon(1e-4));
        CHECK((*out.data)[1] == doctest::Approx(0.33029).epsilon(1e-4));
    }

    SUBCASE("shape errors") {
        Tensor<float> phi({1, 2}, {1.f, 0.f});
        Tensor<float> cond({2, 2}, {1.f, 0.f, 0.f, 1.f});
        CHECK_THROWS_AS(cross_attention(phi, cond, eye, eye, eye, {1}), ShapeError);
        CHECK_THROWS_AS(cross_attention(Tensor<float>({2}), cond, eye, eye, eye, {1, 1}),
                        ShapeError);
    }
}

TEST_CASE("1000 random cross_attention instances are row-stochastic") {
    Rng rng(77);
    for (int k = 0; k < 1000; ++k) {
        int n = 1 + rng.uniform_int(4);
        int L = 1 + rng.uniform_int(5);
        int d = 2 + rng.uniform_int(6);
        auto phi = Tensor<float>::randn({n, d}, rng);
        auto cond = Tensor<float>::randn({L, d}, rng);
        auto wq = Tensor<float>::randn({d, d}, rng);
        auto wk = Tensor<float>::randn({d, d}, rng);
        std::vector<int> mask(L, 0);
        mask[rng.uniform_int(L)] = 1;  // at least one real key
        for (int j = 0; j < L; ++j)
            if (rng.uniform() < 0.5) mask[j] = 1;

        auto w = cross_attention_weights(phi, cond, wq, wk, mask);
        for (int r = 0; r < n; ++r) {
            float sum = 0.f, masked = 0.f;
            for (int j = 0; j < L; ++j) {
                sum += (*w.data)[r * L + j];
                if (!mask[j]) masked += (*w.data)[r * L + j];
            }
            CHECK(sum == doctest::Approx(1.f).epsilon(1e-6));
            CHECK(masked < 1e-6);  // padded keys get no mass
        }
    }
}

TEST_CASE("joint K/V permutation invariance") {
    Rng rng(78);
    auto phi = Tensor<float>::randn({3, 4}, rng);
    auto cond = Tensor<float>::randn({5, 4}, rng);
    auto wq = Tensor<float>::randn({4, 4}, rng);
    auto wk = Tensor<float>::randn({4, 4}, rng);
    auto wv = Tensor<float>::randn({4, 4}, rng);
    std::vector<int> mask{1, 1, 1, 1, 1};

    auto base = cross_attention(phi, cond, wq, wk, wv, mask);
    auto perm = gather_rows(cond, {3, 0, 4, 1, 2});
    auto permuted = cross_attention(phi, perm, wq, wk, wv, mask);
    for (size_t i = 0; i < base.numel(); ++i)
        CHECK((*base.data)[i] == doctest::Approx((*permuted.data)[i]).epsilon(1e-6));
}

TEST_CASE("sqrt(d) tempering matches an unscaled reference") {
    Rng rng(79);
    for (int k = 0; k < 20; ++k) {
        auto phi = Tensor<float>::randn({3, 3}, rng);
        auto cond = Tensor<float>::randn({3, 3}, rng);
        auto wq = Tensor<float>::randn({3, 3}, rng);
        auto wk = Tensor<float>::randn({3, 3}, rng);
        auto w = cross_attention_weights(phi, cond, wq, wk, {1, 1, 1});

        // reference: explicit softmax of (QK^T)/sqrt(3)
        auto q = matmul(phi, wq);
        auto kk = matmul(cond, wk);
        auto logits = matmul(q, transpose(kk));
        for (int r = 0; r < 3; ++r) {
            double mx = -1e30;
            for (int j = 0; j < 3; ++j)
                mx = std::max(mx, (*logits.data)[r * 3 + j] / std::sqrt(3.0));
            double z = 0.0;
            for (int j = 0; j < 3; ++j)
                z += std::exp((*logits.data)[r * 3 + j] / std::sqrt(3.0) - mx);
            for (int j = 0; j < 3; ++j) {
                double ref = std::exp((*logits.data)[r * 3 + j] / std::sqrt(3.0) - mx) / z;
                CHECK((*w.data)[r * 3 + j] == doctest::Approx(ref).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("cross_attention gradients pass grad_check") {
    Rng rng(80);
    Tensor<double> phi = Tensor<double>::randn({2, 3}, rng);
    Tensor<double> cond = Tensor<double>::randn({4, 3}, rng);
    Tensor<double> wq = Tensor<double>::randn({3, 3}, rng);
    Tensor<double> wk = Tensor<double>::randn({3, 3}, rng);
    Tensor<double> wv = Tensor<double>::randn({3, 3}, rng);
    std::vector<int> mask{1, 1, 1, 0};

    auto loss_phi = [&](Tensor<double>& x) {
        return mean_all(cross_attention(x, cond, wq, wk, wv, mask));
    };
    auto loss_wq = [&](Tensor<double>& x) {
        return mean_all(cross_attention(phi, cond, x, wk, wv, mask));
    };
    auto loss_wk = [&](Tensor<double>& x) {
        return mean_all(cross_attention(phi, cond, wq, x, wv, mask));
    };
    auto loss_wv = [&](Tensor<double>& x) {
        return mean_all(cross_attention(phi, cond, wq, wk, x, mask));
    };
    CHECK(grad_check(loss_phi, phi, 1e-5) < 1e-4);
    CHECK(grad_check(loss_wq, wq, 1e-5) < 1e-4);
    CHECK(grad_check(loss_wk, wk, 1e-5) < 1e-4);
    CHECK(grad_check(loss_wv, wv, 1e-5) < 1e-4);
}

TEST_CASE("text encoder determinism, masking, positional sensitivity") {
    Rng rng(81);
    Vocab v = tiny_vocab();
    TextEncoder<float> enc;
    enc.init(v.size(), rng);

    auto seq = tokenize("a mountain river", v);
    auto m1 = enc.forward(seq);
    auto m2 = enc.forward(seq);
    CHECK(m1.shape == std::vector<int>{kMaxTokens, enc.d_txt});
    for (size_t i = 0; i < m1.numel(); ++i) CHECK((*m1.data)[i] == (*m2.data)[i]);

    // padded rows exactly zero
    for (int r = seq.real_count(); r < kMaxTokens; ++r)
        for (int c = 0; c < enc.d_txt; ++c) CHECK((*m1.data)[r * enc.d_txt + c] == 0.f);

    // swapping two real tokens changes the matrix
    auto swapped = tokenize("mountain a river", v);
    auto m3 = enc.forward(swapped);
    bool differ = false;
    for (size_t i = 0; i < m1.numel(); ++i) differ |= (*m1.data)[i] != (*m3.data)[i];
    CHECK(differ);
}

TEST_CASE("vocab reserves pad and unk") {
    Vocab v = Vocab::from_words({"x", "x", "y"});
    CHECK(v.lookup("<pad>") == 0);
    CHECK(v.lookup("<unk>") == 1);
    CHECK(v.lookup("x") == 2);
    CHECK(v.lookup("y") == 3);
    CHECK(v.lookup("zzz") == 1);
    CHECK(v.size() == 4);
}
