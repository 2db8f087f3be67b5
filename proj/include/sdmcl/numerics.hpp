#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sdmcl/errors.hpp"

namespace sdmcl {

// 64-bit everywhere by default; tests and oracles assume this. Configure
// -DSDMCL_REAL32 for 32-bit training arithmetic (tolerances then no longer
// apply).
#ifdef SDMCL_REAL32
using Real = float;
#else
using Real = double;
#endif

/// Dense row-major matrix. Only what the models need, nothing more.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Real> data;  // rows * cols, row-major

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, Real fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    Real& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    Real at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct DenseVector {
    std::vector<Real> data;

    DenseVector() = default;
    explicit DenseVector(std::size_t n, Real fill = 0.0) : data(n, fill) {}
    DenseVector(std::initializer_list<Real> init) : data(init) {}

    std::size_t dim() const { return data.size(); }
    Real& operator[](std::size_t i) { return data[i]; }
    Real operator[](std::size_t i) const { return data[i]; }
};

/// Seedable PRNG with stable output across platforms: xoshiro256** over a
/// splitmix64-expanded seed. Identical seed, identical stream.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);
    /// Uniform index in [0, n). n must be positive.
    std::size_t index(std::size_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

private:
    std::uint64_t state_[4];
};

Real norm2(const DenseVector& v);

/// Scales v to unit Euclidean norm. Throws ZeroVector if the norm is below
/// 1e-30.
DenseVector l2_normalize(const DenseVector& v);

/// Tempered softmax p_i = exp(beta * l_i) / sum_j exp(beta * l_j), computed
/// with max-subtraction so that adding a constant to all logits is a no-op.
DenseVector softmax_beta(const DenseVector& logits, Real beta);

/// -ln(probs[target]) with the input floored at 1e-12.
Real cross_entropy(const DenseVector& probs, std::size_t target_class);

/// y = M v
DenseVector matvec(const DenseMatrix& m, const DenseVector& v);
/// y = M^T u
DenseVector transpose_matvec(const DenseMatrix& m, const DenseVector& u);

}  // namespace sdmcl
