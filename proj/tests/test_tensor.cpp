#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "gnf/tensor.hpp"

using namespace gnf;
using nn::Tensor;

namespace {

std::mt19937_64 g_rng(2024);

Tensor randt(nn::Shape shape, bool rg = true, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(nn::numel(shape));
    for (auto& x : v) x = u(g_rng);
    return Tensor::from(std::move(shape), std::move(v), rg);
}

// Central finite differences against tape gradients; returns max relative error.
double fd_check(const std::function<Tensor(nn::Tape*)>& f, std::vector<Tensor> inputs,
                double h = 1e-6) {
    for (auto& in : inputs) in.zero_grad();
    nn::Tape tape;
    Tensor loss = f(&tape);
    tape.backward(loss);
    double worst = 0;
    for (auto& in : inputs) {
        if (!in.requires_grad()) continue;
        for (size_t i = 0; i < in.size(); ++i) {
            double saved = in.v()[i];
            in.v()[i] = saved + h;
            double up = f(nullptr).v()[0];
            in.v()[i] = saved - h;
            double dn = f(nullptr).v()[0];
            in.v()[i] = saved;
            double numeric = (up - dn) / (2 * h);
            double analytic = in.g()[i];
            double err = std::abs(numeric - analytic) /
                         std::max({1.0, std::abs(numeric), std::abs(analytic)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

// Scalarizes an op output with a fixed random weighting so every output
// element contributes to the gradient.
Tensor weigh(nn::Tape* tape, const Tensor& out, const Tensor& w) {
    return nn::sum_all(tape, nn::mul(tape, out, w));
}

}  // namespace

TEST_CASE("matmul matches a naive triple loop") {
    for (int it = 0; it < 10; ++it) {
        size_t m = 1 + g_rng() % 5, k = 1 + g_rng() % 5, n = 1 + g_rng() % 5;
        Tensor a = randt({m, k}, false), b = randt({k, n}, false);
        Tensor c = nn::matmul(nullptr, a, b);
        for (size_t i = 0; i < m; ++i)
            for (size_t j = 0; j < n; ++j) {
                double acc = 0;
                for (size_t x = 0; x < k; ++x) acc += a.v()[i * k + x] * b.v()[x * n + j];
                CHECK(c.v()[i * n + j] == doctest::Approx(acc).epsilon(1e-12));
            }
    }
}

TEST_CASE("softmax rows are positive and sum to one") {
    Tensor x = randt({3, 4, 7}, false, -30, 30);
    Tensor y = nn::softmax_last(nullptr, x);
    for (size_t r = 0; r < 12; ++r) {
        double sum = 0;
        for (size_t j = 0; j < 7; ++j) {
            double p = y.v()[r * 7 + j];
            CHECK(p > 0);
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("elementwise and shape ops: gradient checks over random shapes") {
    for (int it = 0; it < 10; ++it) {
        size_t a = 1 + g_rng() % 4, b = 1 + g_rng() % 4, c = 1 + g_rng() % 4;
        nn::Shape s{a, b, c};
        Tensor x = randt(s), y = randt(s), w = randt(s, false);

        CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::add(t, x, y), w); }, {x, y}) < 1e-4);
        CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::sub(t, x, y), w); }, {x, y}) < 1e-4);
        CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::mul(t, x, y), w); }, {x, y}) < 1e-4);
        CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::scale(t, x, -1.7), w); }, {x}) <
              1e-4);
        CHECK(fd_check([&](nn::Tape* t) {
                  return weigh(t, nn::reshape(t, x, {a * b, c}),
                               nn::reshape(nullptr, w, {a * b, c}));
              },
                       {x}) < 1e-4);
        Tensor wt = randt({a, c, b}, false);
        CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::transpose_last2(t, x), wt); },
                       {x}) < 1e-4);

        Tensor bias = randt({c});
        CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::add_bias(t, x, bias), w); },
                       {x, bias}) < 1e-4);
    }
}

TEST_CASE("matmul/bmm gradient checks") {
    for (int it = 0; it < 10; ++it) {
        size_t m = 1 + g_rng() % 4, k = 1 + g_rng() % 4, n = 1 + g_rng() % 4,
               B = 1 + g_rng() % 3;
        {
            Tensor a = randt({m, k}), b = randt({k, n}), w = randt({m, n}, false);
            CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::matmul(t, a, b), w); }, {a, b}) <
                  1e-4);
        }
        {
            Tensor a = randt({B, m, k}), b = randt({B, k, n}), w = randt({B, m, n}, false);
            CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::bmm(t, a, b), w); }, {a, b}) <
                  1e-4);
        }
    }
}

TEST_CASE("concat and slice gradient checks") {
    for (int it = 0; it < 10; ++it) {
        size_t B = 1 + g_rng() % 3, n1 = 1 + g_rng() % 4, n2 = 1 + g_rng() % 4,
               d = 1 + g_rng() % 5;
        Tensor a = randt({B, n1, d}), b = randt({B, n2, d}), w = randt({B, n1 + n2, d}, false);
        CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::concat_mid(t, a, b), w); }, {a, b}) <
              1e-4);

        Tensor x = randt({B, n1, d + 3});
        size_t start = g_rng() % 3, len = 1 + g_rng() % d;
        Tensor ws = randt({B, n1, len}, false);
        CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::slice_last(t, x, start, len), ws); },
                       {x}) < 1e-4);

        Tensor c1 = randt({B, n1, d}), c2 = randt({B, n1, 2}), c3 = randt({B, n1, 1});
        Tensor wc = randt({B, n1, d + 3}, false);
        CHECK(fd_check(
                  [&](nn::Tape* t) {
                      return weigh(t, nn::concat_last(t, {c1, c2, c3}), wc);
                  },
                  {c1, c2, c3}) < 1e-4);
    }
}

TEST_CASE("nonlinearity gradient checks away from kinks") {
    for (int it = 0; it < 10; ++it) {
        nn::Shape s{2, 3, 1 + g_rng() % 5};
        Tensor x = randt(s);
        for (auto& v : x.v())
            if (std::abs(v) < 0.05) v += 0.1;  // keep relu off its kink
        Tensor w = randt(s, false);
        CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::relu(t, x), w); }, {x}) < 1e-4);
        CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::gelu(t, x), w); }, {x}) < 1e-4);
        CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::softmax_last(t, x), w); }, {x}) <
              1e-4);
    }
}

TEST_CASE("gather_last values and gradient") {
    size_t B = 2, N = 3, M = 6, J = 4;
    Tensor x = randt({B, N, M});
    std::vector<size_t> idx(N * J);
    for (auto& i : idx) i = g_rng() % M;
    Tensor y = nn::gather_last(nullptr, x, idx, J);
    REQUIRE(y.shape() == nn::Shape{B, N, J});
    for (size_t b = 0; b < B; ++b)
        for (size_t i = 0; i < N; ++i)
            for (size_t j = 0; j < J; ++j)
                CHECK(y.v()[(b * N + i) * J + j] == x.v()[(b * N + i) * M + idx[i * J + j]]);
    Tensor w = randt({B, N, J}, false);
    CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::gather_last(t, x, idx, J), w); }, {x}) <
          1e-4);
}

TEST_CASE("gradients accumulate when a tensor is used twice") {
    Tensor x = randt({2, 2});
    Tensor w = randt({2, 2}, false);
    CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::add(t, x, x), w); }, {x}) < 1e-4);
    CHECK(fd_check([&](nn::Tape* t) { return weigh(t, nn::mul(t, x, x), w); }, {x}) < 1e-4);
}

TEST_CASE("detach blocks gradient flow") {
    Tensor x = randt({3});
    x.zero_grad();
    nn::Tape tape;
    Tensor d = x.detach();
    CHECK_FALSE(d.requires_grad());
    // d(x * stopgrad(x)) / dx = stopgrad(x), not 2x
    Tensor loss = nn::sum_all(&tape, nn::mul(&tape, x, d));
    tape.backward(loss);
    for (size_t i = 0; i < 3; ++i) CHECK(x.g()[i] == doctest::Approx(x.v()[i]));
}

TEST_CASE("backward demands a scalar and seeds with one") {
    Tensor x = randt({2, 2});
    nn::Tape tape;
    Tensor y = nn::add(&tape, x, x);
    CHECK_THROWS_AS(tape.backward(y), NotScalar);
    nn::Tape tape2;
    Tensor s = nn::sum_all(&tape2, x);
    tape2.backward(s);
    for (double g : x.g()) CHECK(g == 1.0);
}

TEST_CASE("ensure_finite rejects NaN and infinity") {
    Tensor x = Tensor::from({2}, {1.0, std::nan("")});
    CHECK_THROWS_AS(nn::ensure_finite(x, "test"), NonFinite);
    Tensor y = Tensor::from({1}, {1e308});
    CHECK_NOTHROW(nn::ensure_finite(y, "test"));
}

TEST_CASE("shape errors throw") {
    Tensor a = randt({2, 3}), b = randt({3, 3});
    CHECK_THROWS_AS(nn::add(nullptr, a, b), ShapeMismatch);
    CHECK_THROWS_AS(nn::matmul(nullptr, a, randt({2, 2})), ShapeMismatch);
    CHECK_THROWS_AS(nn::reshape(nullptr, a, {4, 2}), ShapeMismatch);
}
