#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sdmcl/numerics.hpp"
#include "sdmcl/params.hpp"

namespace sdmcl {

enum class TopKMode { AnnealSubtract, AnnealMask, GabaSwitch, FixedSubtract };

struct TopKConfig {
    std::size_t k_target = 10;
    std::size_t k_max = 1000;
    /// Anneal span in epochs, or the per-neuron activation count for the
    /// GABA switch.
    Real s = 100;
    TopKMode mode = TopKMode::AnnealSubtract;
    /// Block the gradient that flows through the subtracted inhibition value
    /// to the (k+1)-th neuron.
    bool detach_inhibition = false;
};

struct SdmlpAblations {
    bool allow_negative_weights = false;
    bool disable_l2_norm = false;  // skips input and weight-column normalization
    bool hidden_bias = false;
    bool output_bias = false;
};

/// Result of a Top-K style inhibition pass.
struct TopKResult {
    DenseVector activations;               // a*, post inhibition
    Real inhibition = 0;                   // I
    std::optional<std::size_t> kth_index;  // j*, the (k+1)-th unit
    std::vector<std::size_t> active;       // A, ascending
};

/// k_t = max(k_target, floor(k_max - E_t * (k_max - k_target) / s)).
std::size_t anneal_k(std::size_t epoch, const TopKConfig& cfg);

/// a* = relu(a - I) with I the (k+1)-th largest entry of relu(a), or 0 when
/// fewer than k+1 entries are strictly positive. Ties at the (k+1)-th value
/// all subtract to exactly zero.
TopKResult topk_subtract(const DenseVector& a, std::size_t k);

/// Keeps the k largest positive entries untouched, zeroes the rest.
TopKResult topk_mask(const DenseVector& a, std::size_t k);

/// Per-neuron GABA interpolation: a*_i = relu(a_i - lambda_i * I) with
/// lambda_i = clamp(-1 + 2*C_i/s, -1, 1); negative lambda excites.
/// I is the (k_target+1)-th largest entry of relu(a).
TopKResult gaba_forward(const DenseVector& a, const TopKConfig& cfg,
                        const std::vector<std::uint64_t>& counters,
                        std::vector<Real>* lambda_out = nullptr);

struct ForwardTrace {
    DenseVector input;  // normalized unless the l2 ablation is on
    DenseVector pre_activations;
    TopKResult topk;
    DenseVector logits;
    std::size_t k_t = 0;
    TopKMode mode = TopKMode::AnnealSubtract;
    bool detach_inhibition = false;
    std::vector<Real> lambda;  // per-neuron, GABA mode only
    std::uint64_t model_revision = 0;
};

struct SdmlpGradients {
    DenseMatrix d_address;
    DenseMatrix d_storage;
    DenseVector d_hidden_bias;  // sized only under the bias ablation
    DenseVector d_output_bias;
};

/// Single hidden layer constrained to mimic an associative memory: no biases
/// (unless ablated), nonnegative weights, unit-norm address columns, Top-K
/// subtraction with an annealing or GABA-switch schedule.
struct SdmlpModel {
    std::size_t n = 0;  // input dim
    std::size_t r = 0;  // neuron count
    std::size_t o = 0;  // class count
    DenseMatrix address;  // n x r
    DenseMatrix storage;  // o x r
    TopKConfig topk;
    SdmlpAblations ablations;
    DenseVector hidden_bias;  // present only under the ablation
    DenseVector output_bias;
    std::vector<std::uint64_t> gaba_counters;  // activations since start
    std::size_t epoch = 0;                     // E_t
    std::uint64_t revision = 0;  // bumped on every weight mutation
    std::uint64_t dead_column_resets = 0;
    std::uint64_t init_seed = 0;

    static SdmlpModel init(std::size_t n, std::size_t r, std::size_t o,
                           const TopKConfig& topk, const SdmlpAblations& abl,
                           std::uint64_t seed);

    /// Re-initializes the output weights (the pretrain -> continual reset).
    void reset_storage(std::uint64_t seed);

    std::size_t current_k() const;
    ParamView params();
};

ForwardTrace sdmlp_forward(const SdmlpModel& model, const DenseVector& x);

/// Cross-entropy/softmax gradients for a trace produced by sdmlp_forward on
/// this exact model state. Throws StaleTrace if the model changed since.
SdmlpGradients sdmlp_backward(const SdmlpModel& model, const ForwardTrace& trace,
                              std::size_t target);

/// Backward pass from an arbitrary gradient at the logits (regularizers use
/// this for importance estimates).
SdmlpGradients sdmlp_backward_from_delta(const SdmlpModel& model,
                                         const ForwardTrace& trace,
                                         const DenseVector& delta_logits);

/// Clamps weights nonnegative and rescales address columns to unit norm,
/// per the enabled ablations. All-zero address columns after clamping are
/// re-randomized (counted in dead_column_resets).
void project_weights(SdmlpModel& model, Rng& rng);

struct EpochStats {
    Real mean_loss = 0;
    Real accuracy = 0;
    std::size_t samples = 0;
    std::uint64_t dead_column_resets = 0;
};

struct SdmlpTrainer {
    OptimizerConfig opt;
    BlockOptimizerState opt_state;
    std::size_t batch_size = 128;
    Rng rng;  // shuffling and dead-column resets

    explicit SdmlpTrainer(const OptimizerConfig& cfg, std::size_t batch,
                          std::uint64_t seed)
        : opt(cfg), batch_size(batch), rng(seed) {}
};

/// One pass over the given samples in shuffled mini-batches: forward,
/// backward, optimizer step, weight projection; bumps E_t once. When
/// class_counts (neuron x class) is given, per-sample activations are tallied
/// into it.
EpochStats train_epoch(SdmlpModel& model, SdmlpTrainer& trainer,
                       const DenseMatrix& features,
                       const std::vector<int>& labels,
                       const std::vector<std::size_t>& sample_indices,
                       const TrainHooks* hooks = nullptr,
                       std::vector<std::vector<std::uint64_t>>* class_counts =
                           nullptr);

void save_checkpoint(const SdmlpModel& model, const std::string& path);
SdmlpModel load_checkpoint(const std::string& path);

}  // namespace sdmcl
