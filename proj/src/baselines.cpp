#include "sdmcl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sdmcl {

MlpBaseline MlpBaseline::init(std::size_t n, std::size_t r, std::size_t o,
                              MlpActivation act, std::size_t k,
                              std::uint64_t seed) {
    MlpBaseline model;
    model.n = n;
    model.r = r;
    model.o = o;
    model.activation = act;
    model.k = k;
    Rng rng(seed);
    model.address = DenseMatrix(n, r);
    const Real scale_a = Real(1) / std::sqrt(static_cast<Real>(n));
    for (Real& w : model.address.data) w = rng.uniform(-scale_a, scale_a);
    model.storage = DenseMatrix(o, r);
    const Real scale_v = Real(1) / std::sqrt(static_cast<Real>(r));
    for (Real& w : model.storage.data) w = rng.uniform(-scale_v, scale_v);
    model.hidden_bias = DenseVector(r);
    model.output_bias = DenseVector(o);
    return model;
}

ParamView MlpBaseline::params() {
    ParamView view;
    view.blocks.push_back(std::span<Real>(address.data));
    view.blocks.push_back(std::span<Real>(storage.data));
    view.blocks.push_back(std::span<Real>(hidden_bias.data));
    view.blocks.push_back(std::span<Real>(output_bias.data));
    return view;
}

MlpTrace mlp_forward(const MlpBaseline& model, const DenseVector& x,
                     bool training, Rng* rng) {
    if (x.dim() != model.n) {
        throw ShapeMismatch("mlp_forward: input dim != n");
    }
    MlpTrace trace;
    trace.input = x;
    trace.pre_hidden = transpose_matvec(model.address, x);
    for (std::size_t i = 0; i < model.r; ++i) {
        trace.pre_hidden[i] += model.hidden_bias[i];
    }
    switch (model.activation) {
        case MlpActivation::ReLU: {
            trace.topk.activations = DenseVector(model.r);
            for (std::size_t i = 0; i < model.r; ++i) {
                trace.topk.activations[i] =
                    std::max(Real(0), trace.pre_hidden[i]);
                if (trace.topk.activations[i] > Real(0)) {
                    trace.topk.active.push_back(i);
                }
            }
            break;
        }
        case MlpActivation::TopKMask:
            trace.topk = topk_mask(trace.pre_hidden, model.k);
            break;
        case MlpActivation::TopKSubtract:
            trace.topk = topk_subtract(trace.pre_hidden, model.k);
            break;
    }
    trace.hidden = trace.topk.activations;
    if (training && model.dropout_rate > Real(0)) {
        if (!rng) throw ConfigError("mlp_forward: dropout needs an rng");
        trace.dropout_scale.assign(model.r, Real(0));
        const Real keep = Real(1) - model.dropout_rate;
        for (std::size_t i = 0; i < model.r; ++i) {
            if (rng->uniform() < keep) trace.dropout_scale[i] = Real(1) / keep;
            trace.hidden[i] *= trace.dropout_scale[i];
        }
    }
    trace.logits = DenseVector(model.o);
    for (std::size_t i = 0; i < model.r; ++i) {
        const Real h = trace.hidden[i];
        if (h == Real(0)) continue;
        for (std::size_t row = 0; row < model.o; ++row) {
            trace.logits[row] += model.storage.at(row, i) * h;
        }
    }
    for (std::size_t row = 0; row < model.o; ++row) {
        trace.logits[row] += model.output_bias[row];
    }
    trace.model_revision = model.revision;
    return trace;
}

MlpGradients mlp_backward(const MlpBaseline& model, const MlpTrace& trace,
                          std::size_t target) {
    if (target >= model.o) {
        throw IndexOutOfRange("mlp_backward: target class out of range");
    }
    DenseVector delta_logits = softmax_beta(trace.logits, 1.0);
    delta_logits[target] -= Real(1);
    return mlp_backward_from_delta(model, trace, delta_logits);
}

MlpGradients mlp_backward_from_delta(const MlpBaseline& model,
                                     const MlpTrace& trace,
                                     const DenseVector& delta_logits) {
    if (trace.model_revision != model.revision) {
        throw StaleTrace("mlp_backward: model changed since forward");
    }
    MlpGradients grads;
    grads.d_address = DenseMatrix(model.n, model.r);
    grads.d_hidden_bias = DenseVector(model.r);
    grads.d_storage = DenseMatrix(model.o, model.r);
    grads.d_output_bias = delta_logits;

    DenseVector delta_hidden(model.r);
    for (std::size_t i = 0; i < model.r; ++i) {
        const Real h = trace.hidden[i];
        if (h != Real(0)) {
            for (std::size_t row = 0; row < model.o; ++row) {
                grads.d_storage.at(row, i) = delta_logits[row] * h;
            }
        }
        Real d = 0;
        for (std::size_t row = 0; row < model.o; ++row) {
            d += model.storage.at(row, i) * delta_logits[row];
        }
        delta_hidden[i] = d;
    }
    if (!trace.dropout_scale.empty()) {
        for (std::size_t i = 0; i < model.r; ++i) {
            delta_hidden[i] *= trace.dropout_scale[i];
        }
    }

    DenseVector delta_pre(model.r);
    switch (model.activation) {
        case MlpActivation::ReLU:
        case MlpActivation::TopKMask:
            for (std::size_t i : trace.topk.active) {
                delta_pre[i] = delta_hidden[i];
            }
            break;
        case MlpActivation::TopKSubtract: {
            Real inhibition_sum = 0;
            for (std::size_t i : trace.topk.active) {
                delta_pre[i] = delta_hidden[i];
                inhibition_sum += delta_hidden[i];
            }
            if (!model.detach_inhibition && trace.topk.kth_index) {
                delta_pre[*trace.topk.kth_index] -= inhibition_sum;
            }
            break;
        }
    }
    grads.d_hidden_bias = delta_pre;
    for (std::size_t col = 0; col < model.r; ++col) {
        const Real d = delta_pre[col];
        if (d == Real(0)) continue;
        for (std::size_t row = 0; row < model.n; ++row) {
            grads.d_address.at(row, col) = trace.input[row] * d;
        }
    }
    return grads;
}

EpochStats mlp_train_epoch(MlpBaseline& model, MlpTrainer& trainer,
                           const DenseMatrix& features,
                           const std::vector<int>& labels,
                           const std::vector<std::size_t>& sample_indices,
                           const TrainHooks* hooks,
                           std::vector<std::vector<std::uint64_t>>* class_counts) {
    if (sample_indices.empty()) throw EmptyData("mlp_train_epoch: no samples");
    std::vector<std::size_t> order = sample_indices;
    trainer.rng.shuffle(order);

    EpochStats stats;
    ParamView params = model.params();
    GradBlocks batch_grads = GradBlocks::like(params);
    std::vector<Real> before;

    DenseVector x(model.n);
    for (std::size_t start = 0; start < order.size();
         start += trainer.batch_size) {
        const std::size_t end =
            std::min(order.size(), start + trainer.batch_size);
        batch_grads.zero();
        for (std::size_t s = start; s < end; ++s) {
            const std::size_t row = order[s];
            std::copy_n(features.data.data() + row * features.cols, model.n,
                        x.data.begin());
            const MlpTrace trace = mlp_forward(model, x, true, &trainer.rng);
            const std::size_t target = static_cast<std::size_t>(labels[row]);
            const DenseVector probs = softmax_beta(trace.logits, 1.0);
            stats.mean_loss += cross_entropy(probs, target);
            std::size_t argmax = 0;
            for (std::size_t c = 1; c < model.o; ++c) {
                if (probs[c] > probs[argmax]) argmax = c;
            }
            stats.accuracy += argmax == target ? 1 : 0;
            ++stats.samples;

            const MlpGradients g = mlp_backward(model, trace, target);
            for (std::size_t i = 0; i < g.d_address.data.size(); ++i) {
                batch_grads.blocks[0][i] += g.d_address.data[i];
            }
            for (std::size_t i = 0; i < g.d_storage.data.size(); ++i) {
                batch_grads.blocks[1][i] += g.d_storage.data[i];
            }
            for (std::size_t i = 0; i < model.r; ++i) {
                batch_grads.blocks[2][i] += g.d_hidden_bias[i];
            }
            for (std::size_t i = 0; i < model.o; ++i) {
                batch_grads.blocks[3][i] += g.d_output_bias[i];
            }
            if (class_counts) {
                for (std::size_t i : trace.topk.active) {
                    ++(*class_counts)[i][target];
                }
            }
        }
        batch_grads.scale(Real(1) / static_cast<Real>(end - start));
        if (hooks && hooks->modify_grads) hooks->modify_grads(params, batch_grads);
        if (hooks && hooks->after_step) before = params.gather();
        optimizer_step_blocks(trainer.opt, trainer.opt_state, params, batch_grads);
        ++model.revision;
        if (hooks && hooks->after_step) hooks->after_step(before, params, batch_grads);
    }
    stats.mean_loss /= static_cast<Real>(stats.samples);
    stats.accuracy /= static_cast<Real>(stats.samples);
    return stats;
}

// ---------------------------------------------------------------------------
// Importance regularizers
// ---------------------------------------------------------------------------

namespace {

class SdmlpRef final : public DifferentiableModel {
public:
    explicit SdmlpRef(SdmlpModel& model) : model_(model) {}

    ParamView params() override { return model_.params(); }
    std::size_t num_classes() const override { return model_.o; }

    DenseVector predict_logits(const DenseVector& x) const override {
        return sdmlp_forward(model_, x).logits;
    }

    void accumulate_nll_grad(const DenseVector& x, std::size_t target,
                             Real beta, GradBlocks& grads) override {
        const ForwardTrace trace = sdmlp_forward(model_, x);
        DenseVector delta = softmax_beta(trace.logits, beta);
        delta[target] -= Real(1);
        for (Real& d : delta.data) d *= beta;
        add(sdmlp_backward_from_delta(model_, trace, delta), grads);
    }

    void accumulate_output_sqnorm_grad(const DenseVector& x,
                                       GradBlocks& grads) override {
        const ForwardTrace trace = sdmlp_forward(model_, x);
        DenseVector delta = trace.logits;
        for (Real& d : delta.data) d *= Real(2);
        add(sdmlp_backward_from_delta(model_, trace, delta), grads);
    }

private:
    void add(const SdmlpGradients& g, GradBlocks& grads) {
        std::size_t block = 0;
        for (std::size_t i = 0; i < g.d_address.data.size(); ++i) {
            grads.blocks[block][i] += g.d_address.data[i];
        }
        ++block;
        for (std::size_t i = 0; i < g.d_storage.data.size(); ++i) {
            grads.blocks[block][i] += g.d_storage.data[i];
        }
        ++block;
        if (model_.ablations.hidden_bias) {
            for (std::size_t i = 0; i < model_.r; ++i) {
                grads.blocks[block][i] += g.d_hidden_bias[i];
            }
            ++block;
        }
        if (model_.ablations.output_bias) {
            for (std::size_t i = 0; i < model_.o; ++i) {
                grads.blocks[block][i] += g.d_output_bias[i];
            }
        }
    }

    SdmlpModel& model_;
};

class MlpRef final : public DifferentiableModel {
public:
    explicit MlpRef(MlpBaseline& model) : model_(model) {}

    ParamView params() override { return model_.params(); }
    std::size_t num_classes() const override { return model_.o; }

    DenseVector predict_logits(const DenseVector& x) const override {
        return mlp_forward(model_, x).logits;
    }

    void accumulate_nll_grad(const DenseVector& x, std::size_t target,
                             Real beta, GradBlocks& grads) override {
        const MlpTrace trace = mlp_forward(model_, x);
        DenseVector delta = softmax_beta(trace.logits, beta);
        delta[target] -= Real(1);
        for (Real& d : delta.data) d *= beta;
        add(mlp_backward_from_delta(model_, trace, delta), grads);
    }

    void accumulate_output_sqnorm_grad(const DenseVector& x,
                                       GradBlocks& grads) override {
        const MlpTrace trace = mlp_forward(model_, x);
        DenseVector delta = trace.logits;
        for (Real& d : delta.data) d *= Real(2);
        add(mlp_backward_from_delta(model_, trace, delta), grads);
    }

private:
    void add(const MlpGradients& g, GradBlocks& grads) {
        for (std::size_t i = 0; i < g.d_address.data.size(); ++i) {
            grads.blocks[0][i] += g.d_address.data[i];
        }
        for (std::size_t i = 0; i < g.d_storage.data.size(); ++i) {
            grads.blocks[1][i] += g.d_storage.data[i];
        }
        for (std::size_t i = 0; i < model_.r; ++i) {
            grads.blocks[2][i] += g.d_hidden_bias[i];
        }
        for (std::size_t i = 0; i < model_.o; ++i) {
            grads.blocks[3][i] += g.d_output_bias[i];
        }
    }

    MlpBaseline& model_;
};

}  // namespace

std::unique_ptr<DifferentiableModel> wrap_model(SdmlpModel& model) {
    return std::make_unique<SdmlpRef>(model);
}

std::unique_ptr<DifferentiableModel> wrap_model(MlpBaseline& model) {
    return std::make_unique<MlpRef>(model);
}

ImportanceState ImportanceState::make(RegMethod method, Real lambda_reg,
                                      Real beta, std::size_t param_count) {
    ImportanceState state;
    state.method = method;
    state.lambda_reg = lambda_reg;
    state.beta = beta;
    state.omega.assign(param_count, Real(0));
    state.anchor.assign(param_count, Real(0));
    if (method == RegMethod::SI) {
        state.si_path.assign(param_count, Real(0));
        state.si_task_start.assign(param_count, Real(0));
    }
    return state;
}

void estimate_importance(ImportanceState& state, DifferentiableModel& model,
                         const DenseMatrix& features,
                         const std::vector<int>& labels,
                         const std::vector<std::size_t>& sample_indices) {
    if (state.method == RegMethod::None) return;
    if (sample_indices.empty() && state.method != RegMethod::SI &&
        state.method != RegMethod::L2Anchor) {
        throw EmptyData("estimate_importance: no samples");
    }
    ParamView params = model.params();
    const std::vector<Real> theta = params.gather();
    if (theta.size() != state.omega.size()) {
        throw ShapeMismatch("estimate_importance: parameter count changed");
    }

    switch (state.method) {
        case RegMethod::None:
            break;
        case RegMethod::EWC: {
            GradBlocks sample = GradBlocks::like(params);
            DenseVector x(features.cols);
            const Real inv = Real(1) / static_cast<Real>(sample_indices.size());
            for (std::size_t row : sample_indices) {
                sample.zero();
                std::copy_n(features.data.data() + row * features.cols,
                            features.cols, x.data.begin());
                model.accumulate_nll_grad(
                    x, static_cast<std::size_t>(labels[row]), state.beta, sample);
                std::size_t off = 0;
                for (const auto& block : sample.blocks) {
                    for (Real g : block) state.omega[off++] += g * g * inv;
                }
            }
            break;
        }
        case RegMethod::MAS: {
            GradBlocks sample = GradBlocks::like(params);
            DenseVector x(features.cols);
            const Real inv = Real(1) / static_cast<Real>(sample_indices.size());
            for (std::size_t row : sample_indices) {
                sample.zero();
                std::copy_n(features.data.data() + row * features.cols,
                            features.cols, x.data.begin());
                model.accumulate_output_sqnorm_grad(x, sample);
                std::size_t off = 0;
                for (const auto& block : sample.blocks) {
                    for (Real g : block) state.omega[off++] += std::abs(g) * inv;
                }
            }
            break;
        }
        case RegMethod::SI: {
            for (std::size_t i = 0; i < theta.size(); ++i) {
                const Real moved = theta[i] - state.si_task_start[i];
                const Real contrib =
                    std::max(Real(0), state.si_path[i]) /
                    (moved * moved + state.si_damping);
                state.omega[i] += contrib;
            }
            std::fill(state.si_path.begin(), state.si_path.end(), Real(0));
            state.si_task_start = theta;
            break;
        }
        case RegMethod::L2Anchor: {
            std::fill(state.omega.begin(), state.omega.end(), Real(1));
            break;
        }
    }
    state.anchor = theta;
}

Real regularized_loss(Real base_loss, const std::vector<Real>& params_flat,
                      const ImportanceState& state) {
    if (!state.active()) return base_loss;
    Real penalty = 0;
    for (std::size_t i = 0; i < params_flat.size(); ++i) {
        const Real diff = params_flat[i] - state.anchor[i];
        penalty += state.omega[i] * diff * diff;
    }
    return base_loss + state.lambda_reg * penalty;
}

TrainHooks importance_hooks(ImportanceState& state) {
    TrainHooks hooks;
    hooks.modify_grads = [&state](const ParamView& params, GradBlocks& grads) {
        if (!state.active()) return;
        std::size_t off = 0;
        for (std::size_t b = 0; b < params.blocks.size(); ++b) {
            for (std::size_t i = 0; i < params.blocks[b].size(); ++i, ++off) {
                grads.blocks[b][i] += Real(2) * state.lambda_reg *
                                      state.omega[off] *
                                      (params.blocks[b][i] - state.anchor[off]);
            }
        }
    };
    if (state.method == RegMethod::SI) {
        hooks.after_step = [&state](std::span<const Real> before,
                                    const ParamView& after,
                                    const GradBlocks& grads) {
            std::size_t off = 0;
            for (std::size_t b = 0; b < after.blocks.size(); ++b) {
                for (std::size_t i = 0; i < after.blocks[b].size(); ++i, ++off) {
                    const Real delta = after.blocks[b][i] - before[off];
                    state.si_path[off] -= grads.blocks[b][i] * delta;
                }
            }
        };
    }
    return hooks;
}

// ---------------------------------------------------------------------------
// FlyModel
// ---------------------------------------------------------------------------

FlyModel FlyModel::init(std::size_t input_dim, std::size_t num_classes,
                        std::size_t r_kc, std::size_t q, std::size_t k,
                        Real lr, std::uint64_t seed) {
    if (q > input_dim) throw ConfigError("FlyModel: fan-in q > input dim");
    FlyModel fly;
    fly.input_dim = input_dim;
    fly.num_classes = num_classes;
    fly.r_kc = r_kc;
    fly.q = q;
    fly.k = k;
    fly.lr = lr;
    fly.projection.reserve(r_kc * q);
    Rng rng(seed);
    std::vector<std::uint32_t> pool(input_dim);
    std::iota(pool.begin(), pool.end(), 0u);
    for (std::size_t row = 0; row < r_kc; ++row) {
        // partial Fisher-Yates: first q entries are a uniform q-subset
        for (std::size_t j = 0; j < q; ++j) {
            const std::size_t pick = j + rng.index(input_dim - j);
            std::swap(pool[j], pool[pick]);
            fly.projection.push_back(pool[j]);
        }
    }
    fly.output = DenseMatrix(num_classes, r_kc);
    return fly;
}

std::vector<std::size_t> fly_active_cells(const FlyModel& fly,
                                          const DenseVector& x) {
    if (x.dim() != fly.input_dim) {
        throw ShapeMismatch("fly_active_cells: input dim mismatch");
    }
    DenseVector raw(fly.r_kc);
    for (std::size_t cell = 0; cell < fly.r_kc; ++cell) {
        Real acc = 0;
        const std::uint32_t* idx = fly.projection.data() + cell * fly.q;
        for (std::size_t j = 0; j < fly.q; ++j) acc += x[idx[j]];
        raw[cell] = acc;
    }
    std::vector<std::size_t> order(fly.r_kc);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return raw[a] > raw[b];
    });
    order.resize(std::min(fly.k, fly.r_kc));
    std::sort(order.begin(), order.end());
    return order;
}

void flymodel_train(FlyModel& fly, const DenseMatrix& features,
                    const std::vector<int>& labels,
                    const std::vector<std::size_t>& sample_indices) {
    DenseVector x(fly.input_dim);
    for (std::size_t row : sample_indices) {
        std::copy_n(features.data.data() + row * features.cols, fly.input_dim,
                    x.data.begin());
        const auto active = fly_active_cells(fly, x);
        const std::size_t label = static_cast<std::size_t>(labels[row]);
        for (std::size_t cell : active) {
            fly.output.at(label, cell) += fly.lr;
            if (fly.decay_mode) {
                for (std::size_t c = 0; c < fly.num_classes; ++c) {
                    if (c != label) fly.output.at(c, cell) *= Real(1) - fly.lr;
                }
            }
        }
    }
}

std::size_t flymodel_predict(const FlyModel& fly, const DenseVector& x) {
    const auto active = fly_active_cells(fly, x);
    std::size_t best = 0;
    Real best_score = -1;
    for (std::size_t c = 0; c < fly.num_classes; ++c) {
        Real score = 0;
        for (std::size_t cell : active) score += fly.output.at(c, cell);
        if (score > best_score) {
            best_score = score;
            best = c;
        }
    }
    return best;
}

}  // namespace sdmcl
