#include "sdmcl/sdm_theory.hpp"

#include <gmpxx.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sdmcl {

namespace {

Real column_norm(const DenseMatrix& m, std::size_t col) {
    Real acc = 0;
    for (std::size_t r = 0; r < m.rows; ++r) acc += m.at(r, col) * m.at(r, col);
    return std::sqrt(acc);
}

/// Cosine similarities of the query against every address column.
DenseVector address_similarities(const SdmMemory& mem, const DenseVector& q) {
    if (q.dim() != mem.n) {
        throw DimensionMismatch("sdm: query dimension != address dimension");
    }
    DenseVector sims(mem.r);
    for (std::size_t row = 0; row < mem.n; ++row) {
        const Real x = q[row];
        if (x == Real(0)) continue;
        const Real* arow = mem.address.data.data() + row * mem.r;
        for (std::size_t col = 0; col < mem.r; ++col) sims[col] += x * arow[col];
    }
    return sims;
}

/// Top-k indices by similarity, ties broken by lower index. Returns exactly
/// min(k, size) indices.
std::vector<std::size_t> topk_indices(const DenseVector& sims, std::size_t k) {
    std::vector<std::size_t> order(sims.dim());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t take = std::min(k, order.size());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sims[a] > sims[b];
    });
    order.resize(take);
    std::sort(order.begin(), order.end());
    return order;
}

}  // namespace

SdmMemory SdmMemory::random(std::size_t n, std::size_t r, std::size_t o,
                            ActivationRule rule, Rng& rng) {
    SdmMemory mem;
    mem.n = n;
    mem.r = r;
    mem.o = o;
    mem.address = DenseMatrix(n, r);
    mem.storage = DenseMatrix(o, r);
    mem.rule = rule;
    for (std::size_t col = 0; col < r; ++col) {
        Real norm_sq = 0;
        do {
            norm_sq = 0;
            for (std::size_t row = 0; row < n; ++row) {
                const Real x = rng.uniform(-1.0, 1.0);
                mem.address.at(row, col) = x;
                norm_sq += x * x;
            }
        } while (norm_sq < Real(1e-12));
        const Real inv = Real(1) / std::sqrt(norm_sq);
        for (std::size_t row = 0; row < n; ++row) mem.address.at(row, col) *= inv;
    }
    return mem;
}

void SdmMemory::validate() const {
    if (address.rows != n || address.cols != r || storage.rows != o ||
        storage.cols != r) {
        throw DimensionMismatch("SdmMemory: matrix shapes inconsistent");
    }
    for (std::size_t col = 0; col < r; ++col) {
        if (std::abs(column_norm(address, col) - Real(1)) > Real(1e-9)) {
            throw NotNormalized("SdmMemory: address column not unit-norm");
        }
    }
    if (const auto* tk = std::get_if<TopK>(&rule)) {
        if (tk->k < 1 || tk->k > r) {
            throw ConfigError("SdmMemory: TopK k outside [1, r]");
        }
    }
}

void sdm_write(SdmMemory& mem, const DenseMatrix& pattern_addresses,
               const DenseMatrix& pattern_values) {
    if (pattern_addresses.rows != mem.n || pattern_values.rows != mem.o ||
        pattern_addresses.cols != pattern_values.cols) {
        throw DimensionMismatch("sdm_write: pattern shapes inconsistent");
    }
    const std::size_t m = pattern_addresses.cols;
    for (std::size_t p = 0; p < m; ++p) {
        if (std::abs(column_norm(pattern_addresses, p) - Real(1)) > Real(1e-9)) {
            throw NotNormalized("sdm_write: pattern address not unit-norm");
        }
    }
    for (std::size_t p = 0; p < m; ++p) {
        DenseVector pa(mem.n);
        for (std::size_t row = 0; row < mem.n; ++row) {
            pa[row] = pattern_addresses.at(row, p);
        }
        const DenseVector sims = address_similarities(mem, pa);
        std::vector<std::size_t> active;
        if (const auto* th = std::get_if<CosineThreshold>(&mem.rule)) {
            for (std::size_t col = 0; col < mem.r; ++col) {
                if (sims[col] >= th->c) active.push_back(col);
            }
        } else {
            active = topk_indices(sims, std::get<TopK>(mem.rule).k);
        }
        for (std::size_t col : active) {
            for (std::size_t row = 0; row < mem.o; ++row) {
                mem.storage.at(row, col) += pattern_values.at(row, p);
            }
        }
    }
}

std::vector<std::size_t> sdm_active_set(const SdmMemory& mem,
                                        const DenseVector& query) {
    const DenseVector sims = address_similarities(mem, query);
    if (const auto* th = std::get_if<CosineThreshold>(&mem.rule)) {
        std::vector<std::size_t> active;
        for (std::size_t col = 0; col < mem.r; ++col) {
            if (sims[col] >= th->c) active.push_back(col);
        }
        return active;
    }
    return topk_indices(sims, std::get<TopK>(mem.rule).k);
}

std::optional<DenseVector> sdm_read(const SdmMemory& mem,
                                    const DenseVector& query,
                                    bool renormalize) {
    const auto active = sdm_active_set(mem, query);
    if (active.empty()) return std::nullopt;
    DenseVector out(mem.o);
    for (std::size_t col : active) {
        for (std::size_t row = 0; row < mem.o; ++row) {
            out[row] += mem.storage.at(row, col);
        }
    }
    if (renormalize) out = l2_normalize(out);
    return out;
}

// ---------------------------------------------------------------------------
// Circle intersection
// ---------------------------------------------------------------------------

Real intersection_weight(IntersectionWeight type, Real beta, std::size_t n,
                         std::size_t d_v, std::size_t a, std::size_t c) {
    const Real dn = static_cast<Real>(n);
    const Real dist_query = dn - static_cast<Real>(a + c);
    const Real dist_pattern = dn - static_cast<Real>(a + (d_v - c));
    switch (type) {
        case IntersectionWeight::Binary:
            return 1.0;
        case IntersectionWeight::Linear:
            return (dn - dist_query) / dn * (dn - dist_pattern) / dn;
        case IntersectionWeight::Exp:
            return std::exp(-beta * dist_query) * std::exp(-beta * dist_pattern);
    }
    return 1.0;
}

Real intersection_weighted_sum(const IntersectionQuery& q) {
    if (q.n > 512) throw ConfigError("intersection: n must be <= 512");
    if (q.d_v > q.n || q.d > q.n) {
        throw ConfigError("intersection: distances must be <= n");
    }
    const long n = static_cast<long>(q.n);
    const long d = static_cast<long>(q.d);
    const long d_v = static_cast<long>(q.d_v);

    const long a_lo = std::max(0L, n - d - d_v / 2);
    const long a_hi = n - d_v;

    // exact binomials; the ratio to double happens per term at the end
    long double total = 0.0L;
    for (long a = a_lo; a <= a_hi; ++a) {
        const long c_lo = std::max(0L, n - d - a);
        const long c_hi = std::min(d_v, d_v - (n - d - a));
        for (long c = c_lo; c <= c_hi; ++c) {
            mpz_class term;
            mpz_bin_uiui(term.get_mpz_t(), static_cast<unsigned long>(n - d_v),
                         static_cast<unsigned long>(a));
            mpz_class second;
            mpz_bin_uiui(second.get_mpz_t(), static_cast<unsigned long>(d_v),
                         static_cast<unsigned long>(c));
            term *= second;
            total += static_cast<long double>(term.get_d()) *
                     intersection_weight(q.weight, q.beta, q.n,
                                         static_cast<std::size_t>(d_v),
                                         static_cast<std::size_t>(a),
                                         static_cast<std::size_t>(c));
        }
    }
    return static_cast<Real>(total);
}

std::vector<std::pair<std::size_t, Real>> intersection_curve(
    std::size_t n, std::size_t d, IntersectionWeight weight, Real beta) {
    std::vector<std::pair<std::size_t, Real>> curve;
    curve.reserve(n + 1);
    IntersectionQuery q{n, d, 0, weight, beta};
    const Real base = intersection_weighted_sum(q);
    for (std::size_t d_v = 0; d_v <= n; ++d_v) {
        q.d_v = d_v;
        const Real val = intersection_weighted_sum(q);
        curve.emplace_back(d_v, base > Real(0) ? val / base : Real(0));
    }
    return curve;
}

// ---------------------------------------------------------------------------
// E/I dynamics
// ---------------------------------------------------------------------------

EiDynamicsConfig EiDynamicsConfig::standard(std::size_t input_dim,
                                            std::size_t r_e, std::size_t r_i,
                                            Real threshold_e, Real threshold_i,
                                            Rng& rng) {
    EiDynamicsConfig cfg;
    cfg.r_e = r_e;
    cfg.r_i = r_i;
    cfg.threshold_e = DenseVector(r_e, threshold_e);
    cfg.threshold_i = threshold_i;
    cfg.w_ie = DenseMatrix(r_e, r_i);
    cfg.w_ei = DenseMatrix(r_i, r_e);
    const Real ie_strength = Real(1) / (Real(0.9) * static_cast<Real>(r_i));
    for (std::size_t row = 0; row < r_e; ++row) {
        for (std::size_t col = 0; col < r_i; ++col) {
            if (rng.uniform() < 0.9) cfg.w_ie.at(row, col) = ie_strength;
        }
    }
    for (std::size_t row = 0; row < r_i; ++row) {
        for (std::size_t col = 0; col < r_e; ++col) {
            if (rng.uniform() < 0.9) cfg.w_ei.at(row, col) = Real(1);
        }
    }
    cfg.w_inp = DenseMatrix(input_dim, r_e);
    for (Real& w : cfg.w_inp.data) w = rng.uniform();
    return cfg;
}

EiResult simulate_ei_dynamics(const EiDynamicsConfig& cfg,
                              const DenseVector& input) {
    if (input.dim() != cfg.w_inp.rows) {
        throw DimensionMismatch("simulate_ei_dynamics: input dim != w_inp rows");
    }
    if (cfg.tau_a <= 0 || cfg.tau_i <= 0 || cfg.step <= 0) {
        throw ConfigError("simulate_ei_dynamics: time constants must be positive");
    }
    const DenseVector e0 = transpose_matvec(cfg.w_inp, input);

    EiResult res;
    res.e = e0;
    res.i = DenseVector(cfg.r_i);
    for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
        const DenseVector drive_e = matvec(cfg.w_ie, res.i);
        const DenseVector drive_i = matvec(cfg.w_ei, res.e);
        Real max_change = 0;
        DenseVector e_next(cfg.r_e);
        for (std::size_t j = 0; j < cfg.r_e; ++j) {
            const Real p = e0[j] + drive_e[j] - cfg.threshold_e[j];
            const Real target = std::tanh(std::max(Real(0), p / cfg.smoothing));
            const Real g = (target - res.e[j]) / cfg.tau_a;
            e_next[j] = res.e[j] + cfg.step * g;
            max_change = std::max(max_change, std::abs(e_next[j] - res.e[j]));
        }
        DenseVector i_next(cfg.r_i);
        for (std::size_t m = 0; m < cfg.r_i; ++m) {
            const Real target = std::max(Real(0), drive_i[m] - cfg.threshold_i);
            const Real g = (target - res.i[m]) / cfg.tau_i;
            i_next[m] = res.i[m] + cfg.step * g;
            max_change = std::max(max_change, std::abs(i_next[m] - res.i[m]));
        }
        res.e = std::move(e_next);
        res.i = std::move(i_next);
        res.steps = step;
        if (max_change < cfg.convergence_tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

std::size_t ei_active_count(const EiResult& res) {
    std::size_t count = 0;
    for (Real e : res.e.data) {
        if (e > Real(0)) ++count;
    }
    return count;
}

}  // namespace sdmcl
