#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sdmcl/numerics.hpp"

namespace sdmcl {

enum class OptKind { SGD, SGDM, Adam, RMSProp };

struct OptimizerConfig {
    OptKind kind = OptKind::SGD;
    Real learning_rate = 0.1;
    Real gamma = 0.9;    // SGDM buffer decay
    Real beta1 = 0.9;    // Adam first moment
    Real beta2 = 0.999;  // Adam second moment
    Real alpha = 0.99;   // RMSProp decay
    Real epsilon = 1e-8;
    /// Skip parameters whose gradient is exactly zero (experimental; the
    /// default false reproduces the stale-momentum pathology).
    bool sparse_mode = false;
    /// false: constant 1-beta bias correction. true: standard 1-beta^t.
    bool standard_bias_correction = false;
};

/// Moving-average buffers for one flat parameter block. Buffers are sized on
/// first use.
struct OptimizerState {
    std::vector<Real> momentum;  // SGDM
    std::vector<Real> m;         // Adam first moment
    std::vector<Real> v;         // Adam / RMSProp second moment
    std::uint64_t t = 0;         // completed steps
};

/// Raw update magnitude before the learning rate is applied:
/// theta <- theta - lr * delta.
Real optimizer_delta(const OptimizerConfig& cfg, OptimizerState& state,
                     std::size_t i, Real grad, std::uint64_t step);

/// One update over a flat parameter block. Throws ShapeMismatch when grads
/// and params disagree, or when a state buffer was sized for another block.
void optimizer_step(const OptimizerConfig& cfg, OptimizerState& state,
                    std::span<Real> params, std::span<const Real> grads);

/// Sparse gradient injections for the single-parameter probe:
/// (step index, gradient value) pairs, strictly increasing steps.
struct InjectionSchedule {
    std::vector<std::pair<std::uint64_t, Real>> injections;
    std::uint64_t total_steps = 0;
};

struct ProbeRecord {
    std::uint64_t step = 0;
    Real grad = 0;
    Real delta = 0;  // independent of the learning rate
    Real momentum = 0;
    Real m = 0;
    Real v = 0;
};

/// Runs one scalar parameter through the schedule (zero gradient outside the
/// injection steps) and records the raw delta each step.
std::vector<ProbeRecord> stale_momentum_probe(const OptimizerConfig& cfg,
                                              const InjectionSchedule& schedule);

}  // namespace sdmcl
