#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdmcl/numerics.hpp"

using namespace sdmcl;

TEST_CASE("l2_normalize basic cases") {
    DenseVector v{3.0, 4.0};
    auto u = l2_normalize(v);
    CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-12));

    DenseVector e1{1.0, 0.0, 0.0};
    auto same = l2_normalize(e1);
    CHECK(same[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(same[1] == 0.0);

    DenseVector zero{0.0, 0.0};
    CHECK_THROWS_AS(l2_normalize(zero), ZeroVector);
}

TEST_CASE("l2_normalize returns a unit vector and is idempotent") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        DenseVector v(5);
        for (auto& x : v.data) x = rng.uniform(-10.0, 10.0);
        if (norm2(v) < 1e-12) continue;
        auto once = l2_normalize(v);
        CHECK(std::abs(norm2(once) - 1.0) < 1e-12);
        auto twice = l2_normalize(once);
        for (std::size_t i = 0; i < v.dim(); ++i) {
            CHECK(std::abs(twice[i] - once[i]) < 1e-15);
        }
    }
}

TEST_CASE("softmax_beta hand values") {
    DenseVector logits{10.0, 0.0};
    auto low = softmax_beta(logits, 0.005);
    const double sigma = 1.0 / (1.0 + std::exp(-0.05));
    CHECK(low[0] == doctest::Approx(sigma).epsilon(1e-12));
    CHECK(low[1] == doctest::Approx(1.0 - sigma).epsilon(1e-12));
    CHECK(low[0] == doctest::Approx(0.5125).epsilon(1e-3));

    auto hot = softmax_beta(logits, 1.0);
    CHECK(hot[0] == doctest::Approx(1.0 / (1.0 + std::exp(-10.0))).epsilon(1e-12));
    CHECK(hot[0] > 0.99994);

    // beta -> 0+ approaches uniform
    auto flat = softmax_beta(logits, 1e-9);
    CHECK(flat[0] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("softmax_beta shift invariance and simplex") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        DenseVector l(6);
        for (auto& x : l.data) x = rng.uniform(-20.0, 20.0);
        const double beta = rng.uniform(0.001, 3.0);
        const double shift = rng.uniform(-100.0, 100.0);
        DenseVector shifted = l;
        for (auto& x : shifted.data) x += shift;
        auto p = softmax_beta(l, beta);
        auto q = softmax_beta(shifted, beta);
        double sum = 0;
        for (std::size_t i = 0; i < l.dim(); ++i) {
            CHECK(p[i] > 0.0);
            CHECK(std::abs(p[i] - q[i]) < 1e-12);
            sum += p[i];
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    DenseVector bad{1.0, std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(softmax_beta(bad, 1.0), NonFiniteInput);
}

TEST_CASE("cross_entropy") {
    DenseVector onehot{0.0, 1.0, 0.0};
    CHECK(cross_entropy(onehot, 1) == doctest::Approx(0.0).epsilon(1e-12));

    DenseVector uniform(10, 0.1);
    CHECK(cross_entropy(uniform, 3) ==
          doctest::Approx(std::log(10.0)).epsilon(1e-12));

    DenseVector tiny{1e-20, 1.0 - 1e-20};
    CHECK(cross_entropy(tiny, 0) ==
          doctest::Approx(-std::log(1e-12)).epsilon(1e-12));

    CHECK_THROWS_AS(cross_entropy(uniform, 10), IndexOutOfRange);
}

TEST_CASE("matvec hand values and errors") {
    DenseMatrix m(2, 2);
    m.at(0, 0) = 1;
    m.at(0, 1) = 2;
    m.at(1, 0) = 3;
    m.at(1, 1) = 4;
    DenseVector ones{1.0, 1.0};
    auto y = matvec(m, ones);
    CHECK(y[0] == 3.0);
    CHECK(y[1] == 7.0);

    DenseMatrix eye(3, 3);
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1;
    DenseVector v{4.0, -1.0, 2.5};
    auto same = matvec(eye, v);
    for (std::size_t i = 0; i < 3; ++i) CHECK(same[i] == v[i]);

    DenseMatrix zero(3, 3);
    auto z = matvec(zero, v);
    for (std::size_t i = 0; i < 3; ++i) CHECK(z[i] == 0.0);

    DenseVector wrong{1.0};
    CHECK_THROWS_AS(matvec(m, wrong), DimensionMismatch);
    CHECK_THROWS_AS(transpose_matvec(m, wrong), DimensionMismatch);
}

TEST_CASE("transpose_matvec agrees with matvec of the transpose") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        DenseMatrix m(4, 7);
        for (auto& x : m.data) x = rng.uniform(-2.0, 2.0);
        DenseMatrix mt(7, 4);
        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t c = 0; c < 7; ++c) mt.at(c, r) = m.at(r, c);
        }
        DenseVector u(4);
        for (auto& x : u.data) x = rng.uniform(-2.0, 2.0);
        auto a = transpose_matvec(m, u);
        auto b = matvec(mt, u);
        for (std::size_t i = 0; i < 7; ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
    }
}

TEST_CASE("rng reproducibility") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(43);
    bool differs = false;
    Rng a2(42);
    for (int i = 0; i < 10; ++i) differs |= a2.next_u64() != c.next_u64();
    CHECK(differs);

    Rng d(1);
    for (int i = 0; i < 1000; ++i) {
        const double x = d.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        CHECK(d.index(13) < 13);
    }
}
