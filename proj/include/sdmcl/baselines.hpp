#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "sdmcl/numerics.hpp"
#include "sdmcl/params.hpp"
#include "sdmcl/sdmlp.hpp"

namespace sdmcl {

enum class MlpActivation { ReLU, TopKMask, TopKSubtract };

/// Plain one-hidden-layer MLP with biases and unconstrained weights; the
/// comparison point the sdmlp strips down from.
struct MlpBaseline {
    std::size_t n = 0;
    std::size_t r = 0;
    std::size_t o = 0;
    DenseMatrix address;      // n x r
    DenseVector hidden_bias;  // r
    DenseMatrix storage;      // o x r
    DenseVector output_bias;  // o
    MlpActivation activation = MlpActivation::ReLU;
    std::size_t k = 0;  // Top-K activations only
    Real dropout_rate = 0.0;
    bool detach_inhibition = false;
    std::uint64_t revision = 0;

    static MlpBaseline init(std::size_t n, std::size_t r, std::size_t o,
                            MlpActivation act, std::size_t k, std::uint64_t seed);
    ParamView params();
};

struct MlpTrace {
    DenseVector input;
    DenseVector pre_hidden;
    TopKResult topk;        // post-activation, before dropout
    DenseVector hidden;     // after dropout (== topk.activations in eval)
    std::vector<Real> dropout_scale;  // per-unit multiplier, training only
    DenseVector logits;
    std::uint64_t model_revision = 0;
};

/// training enables dropout (inverted scaling); rng is only touched then.
MlpTrace mlp_forward(const MlpBaseline& model, const DenseVector& x,
                     bool training = false, Rng* rng = nullptr);

struct MlpGradients {
    DenseMatrix d_address;
    DenseVector d_hidden_bias;
    DenseMatrix d_storage;
    DenseVector d_output_bias;
};

MlpGradients mlp_backward(const MlpBaseline& model, const MlpTrace& trace,
                          std::size_t target);
MlpGradients mlp_backward_from_delta(const MlpBaseline& model,
                                     const MlpTrace& trace,
                                     const DenseVector& delta_logits);

struct MlpTrainer {
    OptimizerConfig opt;
    BlockOptimizerState opt_state;
    std::size_t batch_size = 128;
    Rng rng;

    explicit MlpTrainer(const OptimizerConfig& cfg, std::size_t batch,
                        std::uint64_t seed)
        : opt(cfg), batch_size(batch), rng(seed) {}
};

EpochStats mlp_train_epoch(MlpBaseline& model, MlpTrainer& trainer,
                           const DenseMatrix& features,
                           const std::vector<int>& labels,
                           const std::vector<std::size_t>& sample_indices,
                           const TrainHooks* hooks = nullptr,
                           std::vector<std::vector<std::uint64_t>>*
                               class_counts = nullptr);

// ---------------------------------------------------------------------------
// Importance regularizers
// ---------------------------------------------------------------------------

/// Uniform gradient interface the importance estimators need; adapters wrap
/// the two model families.
class DifferentiableModel {
public:
    virtual ~DifferentiableModel() = default;
    virtual ParamView params() = 0;
    virtual std::size_t num_classes() const = 0;
    virtual DenseVector predict_logits(const DenseVector& x) const = 0;
    /// grads += d(-ln softmax_beta(logits)[target]) / d theta
    virtual void accumulate_nll_grad(const DenseVector& x, std::size_t target,
                                     Real beta, GradBlocks& grads) = 0;
    /// grads += d(||logits||^2) / d theta
    virtual void accumulate_output_sqnorm_grad(const DenseVector& x,
                                               GradBlocks& grads) = 0;
};

std::unique_ptr<DifferentiableModel> wrap_model(SdmlpModel& model);
std::unique_ptr<DifferentiableModel> wrap_model(MlpBaseline& model);

enum class RegMethod { None, EWC, MAS, SI, L2Anchor };

/// One running importance vector plus the latest anchor; estimates from each
/// task accumulate additively.
struct ImportanceState {
    RegMethod method = RegMethod::None;
    Real lambda_reg = 0;
    Real beta = 1.0;        // importance-estimation softmax temperature
    Real si_damping = 1e-3;
    std::vector<Real> omega;          // per-parameter importance, >= 0
    std::vector<Real> anchor;         // theta*
    std::vector<Real> si_path;        // SI running path integral
    std::vector<Real> si_task_start;  // theta at the current task's start

    static ImportanceState make(RegMethod method, Real lambda_reg, Real beta,
                                std::size_t param_count);
    bool active() const { return method != RegMethod::None && lambda_reg > 0; }
};

/// Adds the current task's importance estimate onto omega and refreshes the
/// anchor. EWC and MAS average per-sample gradients over sample_indices; SI
/// consumes its accumulated path integral.
void estimate_importance(ImportanceState& state, DifferentiableModel& model,
                         const DenseMatrix& features,
                         const std::vector<int>& labels,
                         const std::vector<std::size_t>& sample_indices);

/// base_loss + lambda_reg * sum_i omega_i (theta_i - anchor_i)^2
Real regularized_loss(Real base_loss, const std::vector<Real>& params_flat,
                      const ImportanceState& state);

/// Hooks wiring the quadratic penalty (and SI's online path integral) into a
/// training loop.
TrainHooks importance_hooks(ImportanceState& state);

// ---------------------------------------------------------------------------
// FlyModel: fixed sparse binary projection, top-k binarization, one-pass
// Hebbian output learning.
// ---------------------------------------------------------------------------

struct FlyModel {
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
    std::size_t r_kc = 1000;  // Kenyon cells
    std::size_t q = 32;       // projection fan-in per cell
    std::size_t k = 64;       // active cells per input
    Real lr = 0.005;
    bool decay_mode = false;  // multiplicative decay of other classes
    /// r_kc rows of q input indices each (the ones of the binary projection)
    std::vector<std::uint32_t> projection;
    DenseMatrix output;  // num_classes x r_kc, nonnegative

    static FlyModel init(std::size_t input_dim, std::size_t num_classes,
                         std::size_t r_kc, std::size_t q, std::size_t k,
                         Real lr, std::uint64_t seed);
};

/// Indices of the k most activated Kenyon cells (ties by lower index).
std::vector<std::size_t> fly_active_cells(const FlyModel& fly,
                                          const DenseVector& x);

/// Single Hebbian pass over the given samples, in order.
void flymodel_train(FlyModel& fly, const DenseMatrix& features,
                    const std::vector<int>& labels,
                    const std::vector<std::size_t>& sample_indices);

/// argmax over classes of output[c] . h; ties resolve to the lowest class.
std::size_t flymodel_predict(const FlyModel& fly, const DenseVector& x);

}  // namespace sdmcl
