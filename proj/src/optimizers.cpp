#include "sdmcl/optimizers.hpp"

#include <cmath>

namespace sdmcl {

namespace {

void ensure_size(std::vector<Real>& buf, std::size_t n) {
    if (buf.empty()) buf.assign(n, Real(0));
    if (buf.size() != n) {
        throw ShapeMismatch("optimizer state buffer sized for another block");
    }
}

}  // namespace

Real optimizer_delta(const OptimizerConfig& cfg, OptimizerState& state,
                     std::size_t i, Real grad, std::uint64_t step) {
    switch (cfg.kind) {
        case OptKind::SGD:
            return grad;
        case OptKind::SGDM: {
            // buffer recurrence b_t = gamma*b_{t-1} + g_t; the printed rule
            // reuses theta where the buffer belongs (see README notes)
            Real& b = state.momentum[i];
            b = cfg.gamma * b + grad;
            return b;
        }
        case OptKind::Adam: {
            Real& m = state.m[i];
            Real& v = state.v[i];
            m = cfg.beta1 * m + (Real(1) - cfg.beta1) * grad;
            v = cfg.beta2 * v + (Real(1) - cfg.beta2) * grad * grad;
            Real c1 = Real(1) - cfg.beta1;
            Real c2 = Real(1) - cfg.beta2;
            if (cfg.standard_bias_correction) {
                c1 = Real(1) - std::pow(cfg.beta1, Real(step));
                c2 = Real(1) - std::pow(cfg.beta2, Real(step));
            }
            const Real m_hat = m / c1;
            const Real v_hat = v / c2;
            return m_hat / (std::sqrt(v_hat) + cfg.epsilon);
        }
        case OptKind::RMSProp: {
            Real& v = state.v[i];
            v = cfg.alpha * v + (Real(1) - cfg.alpha) * grad * grad;
            return grad / (std::sqrt(v) + cfg.epsilon);
        }
    }
    return grad;
}

void optimizer_step(const OptimizerConfig& cfg, OptimizerState& state,
                    std::span<Real> params, std::span<const Real> grads) {
    if (params.size() != grads.size()) {
        throw ShapeMismatch("optimizer_step: params/grads size mismatch");
    }
    const std::size_t n = params.size();
    if (cfg.kind == OptKind::SGDM) ensure_size(state.momentum, n);
    if (cfg.kind == OptKind::Adam) {
        ensure_size(state.m, n);
        ensure_size(state.v, n);
    }
    if (cfg.kind == OptKind::RMSProp) ensure_size(state.v, n);

    ++state.t;
    for (std::size_t i = 0; i < n; ++i) {
        if (cfg.sparse_mode && grads[i] == Real(0)) continue;
        const Real delta = optimizer_delta(cfg, state, i, grads[i], state.t);
        params[i] -= cfg.learning_rate * delta;
    }
}

std::vector<ProbeRecord> stale_momentum_probe(const OptimizerConfig& cfg,
                                              const InjectionSchedule& schedule) {
    for (std::size_t i = 1; i < schedule.injections.size(); ++i) {
        if (schedule.injections[i].first <= schedule.injections[i - 1].first) {
            throw ConfigError("injection steps must be strictly increasing");
        }
    }
    OptimizerState state;
    state.momentum.assign(1, 0);
    state.m.assign(1, 0);
    state.v.assign(1, 0);

    std::vector<ProbeRecord> trace;
    trace.reserve(schedule.total_steps);
    std::size_t next = 0;
    for (std::uint64_t step = 0; step < schedule.total_steps; ++step) {
        Real g = 0;
        if (next < schedule.injections.size() &&
            schedule.injections[next].first == step) {
            g = schedule.injections[next].second;
            ++next;
        }
        ProbeRecord rec;
        rec.step = step;
        rec.grad = g;
        rec.delta = optimizer_delta(cfg, state, 0, g, step + 1);
        rec.momentum = state.momentum[0];
        rec.m = state.m[0];
        rec.v = state.v[0];
        trace.push_back(rec);
    }
    return trace;
}

}  // namespace sdmcl
