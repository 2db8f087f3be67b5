#pragma once

#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "sdmcl/numerics.hpp"

namespace sdmcl {

/// Neuron activation rules for the classic associative memory: a fixed
/// cosine-similarity threshold, or the top-k most similar neurons.
struct CosineThreshold {
    Real c = 0.5;  // in [-1, 1]; ties (similarity == c) count as active
};
struct TopK {
    std::size_t k = 1;
};
using ActivationRule = std::variant<CosineThreshold, TopK>;

/// Associative memory over unit-norm addresses. Addresses occupy the columns
/// of address (n x r); each neuron stores a column of storage (o x r).
struct SdmMemory {
    std::size_t n = 0;  // address dimension
    std::size_t r = 0;  // neuron count
    std::size_t o = 0;  // value dimension
    DenseMatrix address;  // n x r, unit-norm columns
    DenseMatrix storage;  // o x r
    ActivationRule rule = CosineThreshold{};

    /// Random unit-norm addresses, zero storage.
    static SdmMemory random(std::size_t n, std::size_t r, std::size_t o,
                            ActivationRule rule, Rng& rng);
    /// Throws NotNormalized / DimensionMismatch if invariants are broken.
    void validate() const;
};

/// Superposes patterns into the memory: storage += values * b(addresses^T *
/// pattern_addresses) with b the rule's activation. pattern_addresses is
/// n x m (unit columns), pattern_values o x m.
void sdm_write(SdmMemory& mem, const DenseMatrix& pattern_addresses,
               const DenseMatrix& pattern_values);

/// Sum of the storage columns of the neurons activated by the query.
/// Returns nullopt when a threshold rule activates no neuron (distinct from
/// a zero output). With TopK(k) exactly min(k, r) neurons are activated.
std::optional<DenseVector> sdm_read(const SdmMemory& mem,
                                    const DenseVector& query,
                                    bool renormalize = false);

/// Indices of the neurons the query would activate (sorted ascending).
std::vector<std::size_t> sdm_active_set(const SdmMemory& mem,
                                        const DenseVector& query);

// ---------------------------------------------------------------------------
// Circle-intersection counts: how many binary addresses lie within Hamming
// radius d of both a query and a pattern at distance d_v, optionally
// weighting each address by a read*write distance coefficient.
// ---------------------------------------------------------------------------

enum class IntersectionWeight { Binary, Linear, Exp };

struct IntersectionQuery {
    std::size_t n = 64;   // bit dimension (<= 512)
    std::size_t d = 10;   // Hamming activation radius
    std::size_t d_v = 0;  // query-pattern Hamming distance
    IntersectionWeight weight = IntersectionWeight::Binary;
    Real beta = 1.0;  // decay rate for the Exp weight
};

/// Per-term weight for an address that agrees with both vectors in a
/// positions and with the pattern alone in c of the d_v disagreement
/// positions.
Real intersection_weight(IntersectionWeight type, Real beta, std::size_t n,
                         std::size_t d_v, std::size_t a, std::size_t c);

/// Weighted intersection size. The Binary weight gives the exact address
/// count (integer-valued, computed with exact big-integer binomials).
Real intersection_weighted_sum(const IntersectionQuery& q);

/// One curve point per d_v = 0..n, each value normalized by the curve's
/// d_v = 0 value.
std::vector<std::pair<std::size_t, Real>> intersection_curve(
    std::size_t n, std::size_t d, IntersectionWeight weight, Real beta = 1.0);

// ---------------------------------------------------------------------------
// Excitatory/inhibitory interneuron dynamics, iterated to a fixed point.
// ---------------------------------------------------------------------------

struct EiDynamicsConfig {
    std::size_t r_e = 0;  // excitatory count
    std::size_t r_i = 0;  // inhibitory count
    Real tau_a = 1.0;
    Real tau_i = 1.0;
    Real smoothing = 1.0;            // L
    DenseVector threshold_e;         // b, per excitatory neuron
    Real threshold_i = 0.0;          // b_i, scalar
    DenseMatrix w_ie;                // r_e x r_i, inhibitory -> excitatory
    DenseMatrix w_ei;                // r_i x r_e, excitatory -> inhibitory
    DenseMatrix w_inp;               // input_dim x r_e
    Real step = 0.1;                 // Delta
    std::size_t max_steps = 10000;
    Real convergence_tol = 1e-6;

    /// 90% connection probability; w_ei strength 1, w_ie strength
    /// 1/(0.9 r_i) so the inhibitory-to-excitatory weights sum to 1 in
    /// expectation.
    static EiDynamicsConfig standard(std::size_t input_dim, std::size_t r_e,
                                     std::size_t r_i, Real threshold_e,
                                     Real threshold_i, Rng& rng);
};

struct EiResult {
    DenseVector e;  // converged excitatory activities
    DenseVector i;  // converged inhibitory activities
    std::size_t steps = 0;
    bool converged = false;  // false: stopped at max_steps (non-fatal)
};

/// Discrete updates e += step*g_a, i += step*g_i until the largest activity
/// change drops below convergence_tol or max_steps is hit.
EiResult simulate_ei_dynamics(const EiDynamicsConfig& cfg,
                              const DenseVector& input);

/// Number of excitatory activities strictly above zero.
std::size_t ei_active_count(const EiResult& res);

}  // namespace sdmcl
