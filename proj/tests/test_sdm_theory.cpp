#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sdmcl/sdm_theory.hpp"

using namespace sdmcl;

namespace {

DenseMatrix column_matrix(const std::vector<DenseVector>& cols) {
    DenseMatrix m(cols[0].dim(), cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) {
        for (std::size_t r = 0; r < cols[0].dim(); ++r) m.at(r, c) = cols[c][r];
    }
    return m;
}

DenseVector random_unit(std::size_t n, Rng& rng) {
    DenseVector v(n);
    for (auto& x : v.data) x = rng.uniform(-1.0, 1.0);
    return l2_normalize(v);
}

/// Brute-force write: loop over every (pattern, neuron) pair and apply the
/// threshold elementwise. Independent of the production code path.
DenseMatrix brute_force_write(const DenseMatrix& addresses,
                              const DenseMatrix& pattern_addresses,
                              const DenseMatrix& pattern_values, Real c) {
    DenseMatrix storage(pattern_values.rows, addresses.cols);
    for (std::size_t p = 0; p < pattern_addresses.cols; ++p) {
        for (std::size_t neuron = 0; neuron < addresses.cols; ++neuron) {
            Real sim = 0;
            for (std::size_t row = 0; row < addresses.rows; ++row) {
                sim += pattern_addresses.at(row, p) * addresses.at(row, neuron);
            }
            if (sim >= c) {
                for (std::size_t row = 0; row < pattern_values.rows; ++row) {
                    storage.at(row, neuron) += pattern_values.at(row, p);
                }
            }
        }
    }
    return storage;
}

/// Exhaustive count of binary addresses within Hamming d of both vectors.
std::uint64_t enumerate_intersection(std::size_t n, std::size_t d,
                                     std::size_t d_v) {
    // query = all zeros; pattern = ones in the first d_v positions
    std::uint64_t count = 0;
    for (std::uint64_t addr = 0; addr < (std::uint64_t(1) << n); ++addr) {
        const std::size_t to_query =
            static_cast<std::size_t>(__builtin_popcountll(addr));
        const std::uint64_t pattern = (std::uint64_t(1) << d_v) - 1;
        const std::size_t to_pattern =
            static_cast<std::size_t>(__builtin_popcountll(addr ^ pattern));
        if (to_query <= d && to_pattern <= d) ++count;
    }
    return count;
}

}  // namespace

TEST_CASE("sdm_write hand cases") {
    SUBCASE("pattern at the neuron's own address is stored") {
        SdmMemory mem;
        mem.n = 3;
        mem.r = 1;
        mem.o = 2;
        mem.rule = CosineThreshold{0.5};
        mem.address = column_matrix({DenseVector{1.0, 0.0, 0.0}});
        mem.storage = DenseMatrix(2, 1);
        DenseMatrix pa = column_matrix({DenseVector{1.0, 0.0, 0.0}});
        DenseMatrix pv = column_matrix({DenseVector{0.7, -0.3}});
        sdm_write(mem, pa, pv);
        CHECK(mem.storage.at(0, 0) == doctest::Approx(0.7));
        CHECK(mem.storage.at(1, 0) == doctest::Approx(-0.3));
    }
    SUBCASE("orthogonal pattern leaves the memory untouched") {
        SdmMemory mem;
        mem.n = 3;
        mem.r = 1;
        mem.o = 2;
        mem.rule = CosineThreshold{0.5};
        mem.address = column_matrix({DenseVector{1.0, 0.0, 0.0}});
        mem.storage = DenseMatrix(2, 1);
        DenseMatrix pa = column_matrix({DenseVector{0.0, 1.0, 0.0}});
        DenseMatrix pv = column_matrix({DenseVector{0.7, -0.3}});
        sdm_write(mem, pa, pv);
        CHECK(mem.storage.at(0, 0) == 0.0);
        CHECK(mem.storage.at(1, 0) == 0.0);
    }
    SUBCASE("write requires unit-norm pattern addresses") {
        Rng rng(5);
        SdmMemory mem = SdmMemory::random(4, 3, 2, CosineThreshold{0.5}, rng);
        DenseMatrix pa = column_matrix({DenseVector{2.0, 0.0, 0.0, 0.0}});
        DenseMatrix pv = column_matrix({DenseVector{1.0, 1.0}});
        CHECK_THROWS_AS(sdm_write(mem, pa, pv), NotNormalized);
    }
}

TEST_CASE("sdm_write matches the brute-force pairwise oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 3 + rng.index(6);
        const std::size_t r = 2 + rng.index(6);
        const std::size_t m = 1 + rng.index(5);
        const std::size_t o = 1 + rng.index(4);
        const Real c = rng.uniform(-0.2, 0.9);
        SdmMemory mem = SdmMemory::random(n, r, o, CosineThreshold{c}, rng);
        std::vector<DenseVector> pa_cols, pv_cols;
        for (std::size_t p = 0; p < m; ++p) {
            pa_cols.push_back(random_unit(n, rng));
            DenseVector pv(o);
            for (auto& x : pv.data) x = rng.uniform(-1.0, 1.0);
            pv_cols.push_back(pv);
        }
        const DenseMatrix pa = column_matrix(pa_cols);
        const DenseMatrix pv = column_matrix(pv_cols);
        const DenseMatrix expected =
            brute_force_write(mem.address, pa, pv, c);
        sdm_write(mem, pa, pv);
        for (std::size_t i = 0; i < expected.data.size(); ++i) {
            CHECK(std::abs(mem.storage.data[i] - expected.data[i]) < 1e-12);
        }
    }
}

TEST_CASE("sdm_write is order independent over a pattern batch") {
    Rng rng(23);
    const std::size_t n = 6, r = 5, m = 4, o = 3;
    SdmMemory base = SdmMemory::random(n, r, o, CosineThreshold{0.3}, rng);
    std::vector<DenseVector> pa_cols, pv_cols;
    for (std::size_t p = 0; p < m; ++p) {
        pa_cols.push_back(random_unit(n, rng));
        DenseVector pv(o);
        for (auto& x : pv.data) x = rng.uniform(-1.0, 1.0);
        pv_cols.push_back(pv);
    }
    SdmMemory forward_order = base;
    sdm_write(forward_order, column_matrix(pa_cols), column_matrix(pv_cols));

    std::reverse(pa_cols.begin(), pa_cols.end());
    std::reverse(pv_cols.begin(), pv_cols.end());
    SdmMemory reverse_order = base;
    sdm_write(reverse_order, column_matrix(pa_cols), column_matrix(pv_cols));

    for (std::size_t i = 0; i < forward_order.storage.data.size(); ++i) {
        CHECK(std::abs(forward_order.storage.data[i] -
                       reverse_order.storage.data[i]) < 1e-12);
    }
}

TEST_CASE("sdm_read hand cases and the empty-activation result") {
    SdmMemory mem;
    mem.n = 3;
    mem.r = 1;
    mem.o = 2;
    mem.rule = CosineThreshold{0.5};
    mem.address = column_matrix({DenseVector{1.0, 0.0, 0.0}});
    mem.storage = column_matrix({DenseVector{0.4, 0.9}});

    auto hit = sdm_read(mem, DenseVector{1.0, 0.0, 0.0});
    REQUIRE(hit.has_value());
    CHECK((*hit)[0] == doctest::Approx(0.4));
    CHECK((*hit)[1] == doctest::Approx(0.9));

    auto miss = sdm_read(mem, DenseVector{0.0, 1.0, 0.0});
    CHECK(!miss.has_value());
}

TEST_CASE("sdm_read TopK matches brute-force top-k and activates min(k, r)") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 5, r = 6, o = 4;
        const std::size_t k = 1 + rng.index(8);  // may exceed r
        SdmMemory mem = SdmMemory::random(n, r, o, TopK{std::min(k, r)}, rng);
        for (auto& x : mem.storage.data) x = rng.uniform(-1.0, 1.0);
        const DenseVector query = random_unit(n, rng);

        const auto active = sdm_active_set(mem, query);
        CHECK(active.size() == std::min(k, r));

        // oracle: rank cosines, sum the top-k storage columns
        std::vector<std::pair<Real, std::size_t>> sims;
        for (std::size_t col = 0; col < r; ++col) {
            Real s = 0;
            for (std::size_t row = 0; row < n; ++row) {
                s += query[row] * mem.address.at(row, col);
            }
            sims.emplace_back(-s, col);
        }
        std::stable_sort(sims.begin(), sims.end());
        DenseVector expected(o);
        for (std::size_t i = 0; i < std::min(k, r); ++i) {
            for (std::size_t row = 0; row < o; ++row) {
                expected[row] += mem.storage.at(row, sims[i].second);
            }
        }
        const auto got = sdm_read(mem, query);
        REQUIRE(got.has_value());
        for (std::size_t row = 0; row < o; ++row) {
            CHECK(std::abs((*got)[row] - expected[row]) < 1e-12);
        }
    }
}

TEST_CASE("intersection hand values") {
    IntersectionQuery q;
    q.n = 4;
    q.d = 1;
    q.d_v = 0;
    q.weight = IntersectionWeight::Binary;
    CHECK(intersection_weighted_sum(q) == doctest::Approx(5.0));  // C(4,4)+C(4,3)

    q.d_v = 4;
    CHECK(intersection_weighted_sum(q) == doctest::Approx(0.0));
}

TEST_CASE("binary intersection equals exhaustive enumeration (small n)") {
    for (std::size_t n : {4, 7, 10}) {
        for (std::size_t d = 0; d <= n; ++d) {
            for (std::size_t d_v = 0; d_v <= n; ++d_v) {
                IntersectionQuery q{n, d, d_v, IntersectionWeight::Binary, 1.0};
                const Real got = intersection_weighted_sum(q);
                const std::uint64_t expected = enumerate_intersection(n, d, d_v);
                CHECK(got == doctest::Approx(static_cast<Real>(expected)));
            }
        }
    }
}

TEST_CASE("exp weight is constant in c when z = 0") {
    const std::size_t n = 32;
    for (std::size_t d_v : {0, 3, 9, 20}) {
        const std::size_t a = n - d_v;  // z = (n - d_v) - a = 0
        const Real beta = 0.37;
        const Real expected = std::exp(-beta * static_cast<Real>(d_v));
        for (std::size_t c = 0; c <= d_v; ++c) {
            CHECK(intersection_weight(IntersectionWeight::Exp, beta, n, d_v, a,
                                      c) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("linear weight peaks midway between the two vectors") {
    const std::size_t n = 64;
    const std::size_t d_v = 10;  // C = d_v with z = 0
    const std::size_t a = n - d_v;
    std::size_t best_x = 0;
    Real best = -1;
    for (std::size_t c = 0; c <= d_v; ++c) {
        const std::size_t x = d_v - c;  // distance from the query
        const Real w =
            intersection_weight(IntersectionWeight::Linear, 1.0, n, d_v, a, c);
        if (w > best) {
            best = w;
            best_x = x;
        }
    }
    CHECK(best_x == d_v / 2);
}

TEST_CASE("intersection curves normalize to 1 and binary is nonincreasing") {
    const auto curve =
        intersection_curve(64, 16, IntersectionWeight::Binary);
    REQUIRE(curve.size() == 65);
    CHECK(curve[0].second == doctest::Approx(1.0));
    for (std::size_t i = 1; i < curve.size(); ++i) {
        CHECK(curve[i].second <= curve[i - 1].second + 1e-12);
    }
}

TEST_CASE("exp and linear weighted curves stay near the binary curve") {
    const std::size_t n = 64;
    for (std::size_t d : {11, 15, 20}) {
        const auto binary = intersection_curve(n, d, IntersectionWeight::Binary);
        const auto expc =
            intersection_curve(n, d, IntersectionWeight::Exp, 0.5);
        const auto linear = intersection_curve(n, d, IntersectionWeight::Linear);
        for (std::size_t i = 0; i < binary.size(); ++i) {
            CHECK(std::abs(expc[i].second - binary[i].second) < 0.05);
            CHECK(std::abs(linear[i].second - binary[i].second) < 0.05);
        }
    }
}

TEST_CASE("ei dynamics: zero input and thresholds settle at zero") {
    Rng rng(41);
    EiDynamicsConfig cfg = EiDynamicsConfig::standard(8, 12, 4, 0.0, 0.0, rng);
    const EiResult res = simulate_ei_dynamics(cfg, DenseVector(8));
    CHECK(res.converged);
    for (Real e : res.e.data) CHECK(e == doctest::Approx(0.0).epsilon(1e-9));
    for (Real i : res.i.data) CHECK(i == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("ei dynamics satisfy the fixed-point condition at convergence") {
    Rng rng(43);
    EiDynamicsConfig cfg =
        EiDynamicsConfig::standard(10, 30, 5, 0.8, 0.5, rng);
    cfg.convergence_tol = 1e-10;
    DenseVector input(10);
    for (auto& x : input.data) x = rng.uniform();
    input = l2_normalize(input);
    const EiResult res = simulate_ei_dynamics(cfg, input);
    REQUIRE(res.converged);
    const DenseVector e0 = transpose_matvec(cfg.w_inp, input);
    const DenseVector feedback = matvec(cfg.w_ie, res.i);
    for (std::size_t j = 0; j < cfg.r_e; ++j) {
        const Real target = std::tanh(std::max(
            Real(0), (e0[j] + feedback[j] - cfg.threshold_e[j]) / cfg.smoothing));
        CHECK(std::abs(res.e[j] - target) < 1e-6);
    }
}

TEST_CASE("ei dynamics report non-convergence without throwing") {
    Rng rng(47);
    EiDynamicsConfig cfg = EiDynamicsConfig::standard(6, 10, 3, 0.2, 0.0, rng);
    cfg.max_steps = 2;
    cfg.convergence_tol = 1e-14;
    DenseVector input(6);
    for (auto& x : input.data) x = rng.uniform();
    const EiResult res = simulate_ei_dynamics(cfg, l2_normalize(input));
    CHECK(!res.converged);
    CHECK(res.steps == 2);
}

TEST_CASE("ei active count is nonincreasing in the inhibitory threshold") {
    Rng rng(53);
    EiDynamicsConfig cfg =
        EiDynamicsConfig::standard(12, 60, 6, 0.9, 0.0, rng);
    DenseVector input(12);
    for (auto& x : input.data) x = rng.uniform();
    input = l2_normalize(input);
    std::size_t prev = SIZE_MAX;
    for (Real b_i : {0.0, 1.0, 2.0, 4.0, 8.0, 16.0}) {
        cfg.threshold_i = b_i;
        const EiResult res = simulate_ei_dynamics(cfg, input);
        const std::size_t active = ei_active_count(res);
        CHECK(active <= prev);
        prev = active;
    }
}
