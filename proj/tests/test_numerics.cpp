#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "cclap/checkpoint.hpp"
#include "cclap/tensor.hpp"

using namespace cclap;

namespace {

Tensor<double> randn_d(std::vector<int> shape, Rng& rng, double sd = 1.0) {
    return Tensor<double>::randn(std::move(shape), rng, sd);
}

// Keep values away from the kinks of relu/abs/min and the zero of sqrt.
Tensor<double> smooth_randn(std::vector<int> shape, Rng& rng) {
    Tensor<double> t = randn_d(std::move(shape), rng);
    for (auto& v : *t.data) {
        if (std::abs(v) < 0.2) v = v < 0 ? v - 0.3 : v + 0.3;
    }
    return t;
}

}  // namespace

TEST_CASE("tensor shape and data invariants") {
    Tensor<float> t({2, 3});
    CHECK(t.numel() == 6);
    CHECK_THROWS_AS(Tensor<float>({0, 3}), ShapeError);
    CHECK_THROWS_AS((Tensor<float>({2, 2}, {1.f, 2.f, 3.f})), ShapeError);
    CHECK_THROWS_AS(Tensor<float>({2}).item(), ContractError);
}

TEST_CASE("softmax_rows oracles") {
    // symmetry
    Tensor<float> z({1, 2}, {0.f, 0.f});
    auto s = softmax_rows(z);
    CHECK((*s.data)[0] == doctest::Approx(0.5).epsilon(1e-7));

    // shift invariance
    Tensor<float> a({1, 2}, {5.f, 5.5f});
    Tensor<float> b({1, 2}, {0.f, 0.5f});
    auto sa = softmax_rows(a), sb = softmax_rows(b);
    for (int i = 0; i < 2; ++i) CHECK((*sa.data)[i] == doctest::Approx((*sb.data)[i]).epsilon(1e-6));

    // frozen elementwise values for [1,2,3]
    Tensor<float> c({1, 3}, {1.f, 2.f, 3.f});
    auto sc = softmax_rows(c);
    CHECK((*sc.data)[0] == doctest::Approx(0.09003057).epsilon(2e-5));
    CHECK((*sc.data)[1] == doctest::Approx(0.24472847).epsilon(2e-5));
    CHECK((*sc.data)[2] == doctest::Approx(0.66524096).epsilon(2e-5));

    CHECK_THROWS_AS(softmax_rows(Tensor<float>({3})), ShapeError);
}

TEST_CASE("softmax rows sum to one on random matrices") {
    Rng rng(7);
    for (int k = 0; k < 100; ++k) {
        auto m = Tensor<float>::randn({4, 5}, rng, 3.f);
        auto s = softmax_rows(m);
        for (int r = 0; r < 4; ++r) {
            float sum = 0.f;
            for (int c = 0; c < 5; ++c) sum += (*s.data)[r * 5 + c];
            CHECK(sum == doctest::Approx(1.f).epsilon(1e-6));
        }
    }
}

TEST_CASE("matmul associativity on small integer matrices") {
    Rng rng(11);
    for (int k = 0; k < 20; ++k) {
        auto ints = [&](std::vector<int> s) {
            Tensor<float> t(std::move(s));
            for (auto& v : *t.data) v = static_cast<float>(rng.uniform_int(5) - 2);
            return t;
        };
        auto A = ints({3, 4}), B = ints({4, 2}), C = ints({2, 3});
        auto left = matmul(matmul(A, B), C);
        auto right = matmul(A, matmul(B, C));
        for (size_t i = 0; i < left.numel(); ++i) CHECK((*left.data)[i] == (*right.data)[i]);
    }
}

TEST_CASE("grad_check fixtures") {
    // f(x) = sum x^2 at x = [3]
    Tensor<double> x({1}, {3.0});
    auto err = grad_check([](Tensor<double>& t) { return mean_all(mul(t, t)); }, x, 1e-4);
    CHECK(err < 1e-6);

    // constant f -> zero gradient, zero error
    Tensor<double> y({2}, {1.0, 2.0});
    auto cerr = grad_check(
        [](Tensor<double>& t) {
            auto z = scale(t, 0.0);
            return mean_all(z);
        },
        y, 1e-4);
    CHECK(cerr == 0.0);

    CHECK_THROWS_AS(grad_check([](Tensor<double>& t) { return add(t, t); }, y, 1e-4),
                    ContractError);
    CHECK_THROWS_AS(grad_check([](Tensor<double>& t) { return mean_all(t); }, y, 0.0),
                    ContractError);
}

TEST_CASE("every registered primitive passes grad_check at seeded random points") {
    Rng rng(42);
    const double h = 1e-5, tol = 1e-4;
    for (int rep = 0; rep < 10; ++rep) {
        Tensor<double> m = smooth_randn({3, 4}, rng);
        Tensor<double> m2 = smooth_randn({3, 4}, rng);
        Tensor<double> v = smooth_randn({4}, rng);
        Tensor<double> rows = smooth_randn({3}, rng);

        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(add(x, m2)); }, m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(sub(x, m2)); }, m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(mul(x, m2)); }, m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(scale(x, 1.7)); }, m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(add_scalar(x, 0.3)); }, m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(relu(x)); }, m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(exp_(scale(x, 0.5))); }, m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(sqrt_(add_scalar(mul(x, x), 0.5))); },
                         m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(abs_(x)); }, m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(recip(add_scalar(mul(x, x), 1.0))); },
                         m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(matmul(x, transpose(m2))); }, m, h) <
              tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(mul(transpose(x), transpose(m2))); },
                         m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(reshape(mul(x, x), {4, 3})); }, m,
                         h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(add_rowvec(x, v)); }, m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(mul(add_rowvec(m2, x), m2)); }, v, h) <
              tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(scale_rows(x, rows)); }, m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(mul(scale_rows(m2, x), m2)); }, rows,
                         h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(gather_rows(x, {2, 0, 0, 1})); }, m,
                         h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(mul(mean_rows(x), rows)); }, m, h) <
              tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(min_rows(x)); }, m, h) < tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(mul(softmax_rows(x), m2)); }, m, h) <
              tol);
        CHECK(grad_check([&](Tensor<double>& x) { return mean_all(mul(layernorm_rows(x), m2)); }, m,
                         h) < tol);
    }
}

TEST_CASE("conv, upsample, laplacian, channel bias gradients") {
    Rng rng(43);
    const double h = 1e-5, tol = 1e-4;
    Tensor<double> x = smooth_randn({2, 6, 6}, rng);
    Tensor<double> w = smooth_randn({3, 2, 3, 3}, rng);
    Tensor<double> b = smooth_randn({3}, rng);
    Tensor<double> cb = smooth_randn({2}, rng);

    for (Pad pad : {Pad::Valid, Pad::SameZero, Pad::SameReplicate}) {
        for (int stride : {1, 2}) {
            CHECK(grad_check(
                      [&](Tensor<double>& t) { return mean_all(conv2d(t, w, &b, stride, pad)); }, x,
                      h) < tol);
            CHECK(grad_check(
                      [&](Tensor<double>& t) { return mean_all(conv2d(x, t, &b, stride, pad)); }, w,
                      h) < tol);
            CHECK(grad_check(
                      [&](Tensor<double>& t) { return mean_all(mul(conv2d(x, w, &t, stride, pad),
                                                                   conv2d(x, w, &t, stride, pad))); },
                      b, h) < tol);
        }
    }
    CHECK(grad_check([&](Tensor<double>& t) { return mean_all(mul(upsample_nearest2(t),
                                                                  upsample_nearest2(t))); },
                     x, h) < tol);
    CHECK(grad_check([&](Tensor<double>& t) { return mean_all(mul(laplacian2d(t), laplacian2d(t))); },
                     x, h) < tol);
    CHECK(grad_check([&](Tensor<double>& t) { return mean_all(mul(add_channel_bias(x, t),
                                                                  add_channel_bias(x, t))); },
                     cb, h) < tol);
}

TEST_CASE("gradients of unused inputs stay zero") {
    Tensor<float> used({2}, {1.f, 2.f});
    Tensor<float> unused({2}, {3.f, 4.f});
    GradientTape<float> tape;
    auto loss = mean_all(mul(used, used));
    tape.backward(loss);
    CHECK((*unused.grad)[0] == 0.f);
    CHECK((*unused.grad)[1] == 0.f);
    CHECK((*used.grad)[0] == doctest::Approx(1.f));  // d/dx mean(x^2) = x
}

TEST_CASE("non-finite results are rejected") {
    Tensor<float> big = Tensor<float>::full({2, 2}, 1e30f);
    CHECK_THROWS_AS(mul(big, big), ContractError);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    namespace fs = std::filesystem;
    Rng rng(5);
    TensorMap m;
    m["ae/enc.w"] = Tensor<float>::randn({2, 3, 3, 3}, rng);
    m["ldm/t"] = Tensor<float>::full({1}, 0.1234567f);
    m["style/x"] = Tensor<float>::randn({7}, rng, 3.f);

    std::string path = (fs::temp_directory_path() / "cclap_ckpt_test.bin").string();
    save_checkpoint(path, m);
    TensorMap back = load_checkpoint(path);
    REQUIRE(back.size() == m.size());
    for (const auto& [name, t] : m) {
        REQUIRE(back.count(name) == 1);
        CHECK(back[name].shape == t.shape);
        for (size_t i = 0; i < t.numel(); ++i) CHECK((*back[name].data)[i] == (*t.data)[i]);
    }

    // merge replaces exactly one section
    TensorMap repl;
    repl["x"] = Tensor<float>::full({2}, 9.f);
    merge_into_checkpoint(path, "style", repl);
    TensorMap merged = load_checkpoint(path);
    CHECK(merged.count("ae/enc.w") == 1);
    CHECK(merged["style/x"].numel() == 2);

    auto stripped = with_prefix_stripped(merged, "ae");
    CHECK(stripped.count("enc.w") == 1);
    fs::remove(path);
}
