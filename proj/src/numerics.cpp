#include "sdmcl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sdmcl {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

std::size_t Rng::index(std::size_t n) {
    // rejection sampling keeps the distribution exactly uniform
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

Real norm2(const DenseVector& v) {
    Real acc = 0;
    for (Real x : v.data) acc += x * x;
    return std::sqrt(acc);
}

DenseVector l2_normalize(const DenseVector& v) {
    const Real n = norm2(v);
    if (n < Real(1e-30)) {
        throw ZeroVector("l2_normalize: vector norm below 1e-30");
    }
    DenseVector out(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) out[i] = v[i] / n;
    return out;
}

DenseVector softmax_beta(const DenseVector& logits, Real beta) {
    Real max_scaled = -std::numeric_limits<Real>::infinity();
    for (Real l : logits.data) {
        if (!std::isfinite(l)) {
            throw NonFiniteInput("softmax_beta: non-finite logit");
        }
        max_scaled = std::max(max_scaled, beta * l);
    }
    DenseVector out(logits.dim());
    Real z = 0;
    for (std::size_t i = 0; i < logits.dim(); ++i) {
        out[i] = std::exp(beta * logits[i] - max_scaled);
        z += out[i];
    }
    for (Real& p : out.data) p /= z;
    return out;
}

Real cross_entropy(const DenseVector& probs, std::size_t target_class) {
    if (target_class >= probs.dim()) {
        throw IndexOutOfRange("cross_entropy: target class out of range");
    }
    return -std::log(std::max(probs[target_class], Real(1e-12)));
}

DenseVector matvec(const DenseMatrix& m, const DenseVector& v) {
    if (m.cols != v.dim()) {
        throw DimensionMismatch("matvec: cols != dim(v)");
    }
    DenseVector out(m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const Real* row = m.data.data() + r * m.cols;
        Real acc = 0;
        for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
        out[r] = acc;
    }
    return out;
}

DenseVector transpose_matvec(const DenseMatrix& m, const DenseVector& u) {
    if (m.rows != u.dim()) {
        throw DimensionMismatch("transpose_matvec: rows != dim(u)");
    }
    DenseVector out(m.cols);
    // axpy over rows keeps the row-major access pattern sequential
    for (std::size_t r = 0; r < m.rows; ++r) {
        const Real ur = u[r];
        if (ur == Real(0)) continue;
        const Real* row = m.data.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) out[c] += ur * row[c];
    }
    return out;
}

}  // namespace sdmcl
