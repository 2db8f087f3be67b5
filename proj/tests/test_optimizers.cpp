#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdmcl/optimizers.hpp"

using namespace sdmcl;

namespace {

OptimizerConfig config(OptKind kind, double lr = 1.0) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    cfg.learning_rate = lr;
    return cfg;
}

/// First delta from zero buffers for a single gradient g.
double first_delta(OptKind kind, double g) {
    OptimizerConfig cfg = config(kind);
    InjectionSchedule sched;
    sched.injections = {{0, g}};
    sched.total_steps = 1;
    return stale_momentum_probe(cfg, sched)[0].delta;
}

}  // namespace

TEST_CASE("first-step amplification from zero state, g = 0.2") {
    const double g = 0.2;
    const double eps = 1e-8;

    // RMSProp: v = 0.01 * g^2, delta = g / (sqrt(v) + eps) ~ 10 (50x)
    const double rms_expected = g / (std::sqrt(0.01 * g * g) + eps);
    CHECK(std::abs(first_delta(OptKind::RMSProp, g) - rms_expected) < 1e-12);
    CHECK(rms_expected == doctest::Approx(10.0).epsilon(1e-5));

    // Adam with the constant bias correction: m_hat = g, v_hat = g^2,
    // delta = g / (|g| + eps) ~ 1 (5x)
    const double adam_expected = g / (std::sqrt(g * g) + eps);
    CHECK(std::abs(first_delta(OptKind::Adam, g) - adam_expected) < 1e-12);
    CHECK(adam_expected == doctest::Approx(1.0).epsilon(1e-5));

    CHECK(first_delta(OptKind::SGD, g) == g);
    CHECK(first_delta(OptKind::SGDM, g) == g);
}

TEST_CASE("first-step ordering holds for any 0 < g < 1") {
    for (double g : {0.01, 0.05, 0.3, 0.7, 0.99}) {
        const double rms = std::abs(first_delta(OptKind::RMSProp, g));
        const double adam = std::abs(first_delta(OptKind::Adam, g));
        const double sgdm = std::abs(first_delta(OptKind::SGDM, g));
        const double sgd = std::abs(first_delta(OptKind::SGD, g));
        CHECK(rms > adam);
        CHECK(adam > sgdm);
        CHECK(sgdm == g);
        CHECK(sgd == g);
        // Adam's first-step amplification is 1/g up to epsilon
        CHECK(adam / g == doctest::Approx(1.0 / g).epsilon(1e-6));
    }
}

TEST_CASE("quiescent behavior per optimizer") {
    InjectionSchedule sched;
    sched.injections = {{0, 0.2}, {1, 0.2}};
    sched.total_steps = 30;

    SUBCASE("SGD applies nothing during quiescence") {
        auto trace = stale_momentum_probe(config(OptKind::SGD), sched);
        for (std::size_t i = 2; i < trace.size(); ++i) {
            CHECK(trace[i].delta == 0.0);
        }
    }
    SUBCASE("SGDM decays geometrically during quiescence") {
        auto trace = stale_momentum_probe(config(OptKind::SGDM), sched);
        for (std::size_t i = 3; i < trace.size(); ++i) {
            CHECK(trace[i].delta ==
                  doctest::Approx(0.9 * trace[i - 1].delta).epsilon(1e-12));
            CHECK(trace[i].delta > 0.0);
        }
    }
    SUBCASE("RMSProp applies nothing during quiescence but keeps its buffer") {
        auto trace = stale_momentum_probe(config(OptKind::RMSProp), sched);
        for (std::size_t i = 2; i < trace.size(); ++i) {
            CHECK(trace[i].delta == 0.0);
            CHECK(trace[i].v > 0.0);
        }
    }
    SUBCASE("Adam keeps updating during quiescence, larger than SGDM") {
        auto adam = stale_momentum_probe(config(OptKind::Adam), sched);
        auto sgdm = stale_momentum_probe(config(OptKind::SGDM), sched);
        for (std::size_t i = 2; i < adam.size(); ++i) {
            CHECK(adam[i].delta > 0.0);
            CHECK(adam[i].delta > sgdm[i].delta);
        }
    }
}

TEST_CASE("reinjection spike ordering on the two-four-one-one schedule") {
    // two injections, quiescence, four, quiescence, one, quiescence, one
    InjectionSchedule sched;
    sched.injections = {{0, 0.2}, {1, 0.2},  {40, 0.2}, {41, 0.2},
                        {42, 0.2}, {43, 0.2}, {90, 0.2}, {140, 0.2}};
    sched.total_steps = 150;

    auto rms = stale_momentum_probe(config(OptKind::RMSProp), sched);
    auto adam = stale_momentum_probe(config(OptKind::Adam), sched);
    auto sgdm = stale_momentum_probe(config(OptKind::SGDM), sched);
    auto sgd = stale_momentum_probe(config(OptKind::SGD), sched);

    for (std::uint64_t reinjection : {40ULL, 90ULL, 140ULL}) {
        CHECK(rms[reinjection].delta > adam[reinjection].delta);
        CHECK(adam[reinjection].delta > sgdm[reinjection].delta);
        CHECK(sgd[reinjection].delta == 0.2);
        // spikes exceed the true gradient
        CHECK(rms[reinjection].delta > 0.2);
        CHECK(adam[reinjection].delta > 0.2);
    }
}

TEST_CASE("zero-gradient step updates buffers but SGD never moves") {
    std::vector<Real> params{1.0};
    std::vector<Real> grads{0.0};

    OptimizerConfig sgd = config(OptKind::SGD, 0.5);
    OptimizerState state;
    optimizer_step(sgd, state, params, grads);
    CHECK(params[0] == 1.0);

    OptimizerConfig adam = config(OptKind::Adam, 0.5);
    OptimizerState astate;
    std::vector<Real> aparams{1.0};
    optimizer_step(adam, astate, aparams, std::vector<Real>{0.4});
    const double moved = aparams[0];
    CHECK(moved != 1.0);
    optimizer_step(adam, astate, aparams, grads);
    CHECK(aparams[0] != moved);  // nonzero buffer keeps pushing

    // sparse mode skips exactly-zero gradients entirely
    OptimizerConfig sparse = adam;
    sparse.sparse_mode = true;
    OptimizerState sstate;
    std::vector<Real> sparams{1.0};
    optimizer_step(sparse, sstate, sparams, std::vector<Real>{0.4});
    const double after_first = sparams[0];
    optimizer_step(sparse, sstate, sparams, grads);
    CHECK(sparams[0] == after_first);
    CHECK(sstate.m[0] != 0.0);  // buffer untouched by the skipped step
}

TEST_CASE("lr zero freezes parameters while buffers update") {
    OptimizerConfig cfg = config(OptKind::Adam, 0.0);
    OptimizerState state;
    std::vector<Real> params{2.0};
    optimizer_step(cfg, state, params, std::vector<Real>{0.3});
    CHECK(params[0] == 2.0);
    CHECK(state.m[0] != 0.0);
    CHECK(state.v[0] != 0.0);
}

TEST_CASE("standard bias correction differs from the constant form") {
    OptimizerConfig paper = config(OptKind::Adam);
    OptimizerConfig standard = paper;
    standard.standard_bias_correction = true;

    InjectionSchedule sched;
    sched.injections = {{0, 0.2}};
    sched.total_steps = 1;
    const double d_paper = stale_momentum_probe(paper, sched)[0].delta;
    const double d_standard = stale_momentum_probe(standard, sched)[0].delta;
    // both bias corrections coincide on the very first step
    CHECK(d_paper == doctest::Approx(d_standard).epsilon(1e-12));

    sched.injections = {{0, 0.2}, {1, 0.2}, {2, 0.2}};
    sched.total_steps = 3;
    const double p3 = stale_momentum_probe(paper, sched)[2].delta;
    const double s3 = stale_momentum_probe(standard, sched)[2].delta;
    CHECK(p3 != doctest::Approx(s3).epsilon(1e-6));
}

TEST_CASE("schedule validation and shape errors") {
    InjectionSchedule bad;
    bad.injections = {{5, 0.1}, {5, 0.2}};
    bad.total_steps = 10;
    CHECK_THROWS_AS(stale_momentum_probe(config(OptKind::SGD), bad), ConfigError);

    OptimizerState state;
    std::vector<Real> params{1.0, 2.0};
    std::vector<Real> grads{0.1};
    CHECK_THROWS_AS(
        optimizer_step(config(OptKind::SGD), state, params, grads),
        ShapeMismatch);
}
