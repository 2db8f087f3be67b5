#include "sdmcl/sdmlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

namespace sdmcl {

namespace {

/// Descending order of the strictly positive entries; ties by lower index.
/// Returns the index of the m-th entry (0-based) or nullopt if there are not
/// that many positives.
std::optional<std::size_t> nth_positive_index(const DenseVector& a,
                                              std::size_t m) {
    std::vector<std::size_t> pos;
    pos.reserve(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) {
        if (a[i] > Real(0)) pos.push_back(i);
    }
    if (pos.size() <= m) return std::nullopt;
    std::nth_element(pos.begin(), pos.begin() + m, pos.end(),
                     [&](std::size_t x, std::size_t y) {
                         if (a[x] != a[y]) return a[x] > a[y];
                         return x < y;
                     });
    return pos[m];
}

void collect_active(TopKResult& res) {
    for (std::size_t i = 0; i < res.activations.dim(); ++i) {
        if (res.activations[i] > Real(0)) res.active.push_back(i);
    }
}

void normalize_address_column(DenseMatrix& address, std::size_t col) {
    Real norm_sq = 0;
    for (std::size_t row = 0; row < address.rows; ++row) {
        norm_sq += address.at(row, col) * address.at(row, col);
    }
    const Real inv = Real(1) / std::sqrt(norm_sq);
    for (std::size_t row = 0; row < address.rows; ++row) {
        address.at(row, col) *= inv;
    }
}

void random_nonneg_unit_column(DenseMatrix& address, std::size_t col, Rng& rng) {
    Real norm_sq = 0;
    do {
        norm_sq = 0;
        for (std::size_t row = 0; row < address.rows; ++row) {
            const Real x = rng.uniform();
            address.at(row, col) = x;
            norm_sq += x * x;
        }
    } while (norm_sq < Real(1e-12));
    normalize_address_column(address, col);
}

}  // namespace

std::size_t anneal_k(std::size_t epoch, const TopKConfig& cfg) {
    const Real span = static_cast<Real>(cfg.k_max - cfg.k_target);
    const Real raw = static_cast<Real>(cfg.k_max) -
                     static_cast<Real>(epoch) * span / cfg.s;
    const Real floored = std::floor(raw);
    if (floored <= static_cast<Real>(cfg.k_target)) return cfg.k_target;
    return static_cast<std::size_t>(floored);
}

TopKResult topk_subtract(const DenseVector& a, std::size_t k) {
    TopKResult res;
    res.kth_index = nth_positive_index(a, k);
    res.inhibition = res.kth_index ? a[*res.kth_index] : Real(0);
    res.activations = DenseVector(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) {
        res.activations[i] = std::max(Real(0), a[i] - res.inhibition);
    }
    collect_active(res);
    return res;
}

TopKResult topk_mask(const DenseVector& a, std::size_t k) {
    TopKResult res;
    res.activations = DenseVector(a.dim());
    std::vector<std::size_t> pos;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        if (a[i] > Real(0)) pos.push_back(i);
    }
    std::stable_sort(pos.begin(), pos.end(), [&](std::size_t x, std::size_t y) {
        return a[x] > a[y];
    });
    if (pos.size() > k) pos.resize(k);
    for (std::size_t i : pos) res.activations[i] = a[i];
    collect_active(res);
    return res;
}

TopKResult gaba_forward(const DenseVector& a, const TopKConfig& cfg,
                        const std::vector<std::uint64_t>& counters,
                        std::vector<Real>* lambda_out) {
    TopKResult res;
    res.kth_index = nth_positive_index(a, cfg.k_target);
    res.inhibition = res.kth_index ? a[*res.kth_index] : Real(0);
    res.activations = DenseVector(a.dim());
    if (lambda_out) lambda_out->assign(a.dim(), Real(0));
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const Real raw = Real(-1) + Real(2) * static_cast<Real>(counters[i]) / cfg.s;
        const Real lambda = std::min(Real(1), std::max(Real(-1), raw));
        if (lambda_out) (*lambda_out)[i] = lambda;
        res.activations[i] = std::max(Real(0), a[i] - lambda * res.inhibition);
    }
    collect_active(res);
    return res;
}

SdmlpModel SdmlpModel::init(std::size_t n, std::size_t r, std::size_t o,
                            const TopKConfig& topk, const SdmlpAblations& abl,
                            std::uint64_t seed) {
    if (topk.k_target < 1 || topk.k_target > topk.k_max || topk.k_max > r) {
        throw ConfigError("TopKConfig: need 1 <= k_target <= k_max <= r");
    }
    SdmlpModel model;
    model.n = n;
    model.r = r;
    model.o = o;
    model.topk = topk;
    model.ablations = abl;
    model.init_seed = seed;
    model.gaba_counters.assign(r, 0);
    Rng rng(seed);
    model.address = DenseMatrix(n, r);
    for (std::size_t col = 0; col < r; ++col) {
        random_nonneg_unit_column(model.address, col, rng);
    }
    model.storage = DenseMatrix(o, r);
    for (Real& w : model.storage.data) w = rng.uniform(0.0, 0.01);
    if (abl.hidden_bias) model.hidden_bias = DenseVector(r);
    if (abl.output_bias) model.output_bias = DenseVector(o);
    return model;
}

void SdmlpModel::reset_storage(std::uint64_t seed) {
    Rng rng(seed);
    for (Real& w : storage.data) w = rng.uniform(0.0, 0.01);
    if (ablations.output_bias) output_bias = DenseVector(o);
    ++revision;
}

std::size_t SdmlpModel::current_k() const {
    switch (topk.mode) {
        case TopKMode::AnnealSubtract:
        case TopKMode::AnnealMask:
            return anneal_k(epoch, topk);
        case TopKMode::GabaSwitch:
        case TopKMode::FixedSubtract:
            return topk.k_target;
    }
    return topk.k_target;
}

ParamView SdmlpModel::params() {
    ParamView view;
    view.blocks.push_back(std::span<Real>(address.data));
    view.blocks.push_back(std::span<Real>(storage.data));
    if (ablations.hidden_bias) view.blocks.push_back(std::span<Real>(hidden_bias.data));
    if (ablations.output_bias) view.blocks.push_back(std::span<Real>(output_bias.data));
    return view;
}

ForwardTrace sdmlp_forward(const SdmlpModel& model, const DenseVector& x) {
    if (x.dim() != model.n) {
        throw DimensionMismatch("sdmlp_forward: input dim != n");
    }
    ForwardTrace trace;
    trace.input = model.ablations.disable_l2_norm ? x : l2_normalize(x);
    trace.pre_activations = transpose_matvec(model.address, trace.input);
    if (model.ablations.hidden_bias) {
        for (std::size_t i = 0; i < model.r; ++i) {
            trace.pre_activations[i] += model.hidden_bias[i];
        }
    }
    trace.k_t = model.current_k();
    trace.mode = model.topk.mode;
    trace.detach_inhibition = model.topk.detach_inhibition;
    switch (model.topk.mode) {
        case TopKMode::AnnealSubtract:
        case TopKMode::FixedSubtract:
            trace.topk = topk_subtract(trace.pre_activations, trace.k_t);
            break;
        case TopKMode::AnnealMask:
            trace.topk = topk_mask(trace.pre_activations, trace.k_t);
            break;
        case TopKMode::GabaSwitch:
            trace.topk = gaba_forward(trace.pre_activations, model.topk,
                                      model.gaba_counters, &trace.lambda);
            break;
    }
    // logits from the active columns only
    trace.logits = DenseVector(model.o);
    for (std::size_t i : trace.topk.active) {
        const Real act = trace.topk.activations[i];
        for (std::size_t row = 0; row < model.o; ++row) {
            trace.logits[row] += model.storage.at(row, i) * act;
        }
    }
    if (model.ablations.output_bias) {
        for (std::size_t row = 0; row < model.o; ++row) {
            trace.logits[row] += model.output_bias[row];
        }
    }
    trace.model_revision = model.revision;
    return trace;
}

SdmlpGradients sdmlp_backward(const SdmlpModel& model, const ForwardTrace& trace,
                              std::size_t target) {
    if (target >= model.o) {
        throw IndexOutOfRange("sdmlp_backward: target class out of range");
    }
    DenseVector delta_logits = softmax_beta(trace.logits, 1.0);
    delta_logits[target] -= Real(1);
    return sdmlp_backward_from_delta(model, trace, delta_logits);
}

SdmlpGradients sdmlp_backward_from_delta(const SdmlpModel& model,
                                         const ForwardTrace& trace,
                                         const DenseVector& delta_logits) {
    if (trace.model_revision != model.revision) {
        throw StaleTrace("sdmlp_backward: model changed since forward");
    }
    SdmlpGradients grads;
    grads.d_address = DenseMatrix(model.n, model.r);
    grads.d_storage = DenseMatrix(model.o, model.r);
    if (model.ablations.hidden_bias) grads.d_hidden_bias = DenseVector(model.r);
    if (model.ablations.output_bias) grads.d_output_bias = DenseVector(model.o);

    for (std::size_t i : trace.topk.active) {
        const Real act = trace.topk.activations[i];
        for (std::size_t row = 0; row < model.o; ++row) {
            grads.d_storage.at(row, i) = delta_logits[row] * act;
        }
    }
    if (model.ablations.output_bias) grads.d_output_bias = delta_logits;

    // delta through the active set, plus the inhibition path to j*
    DenseVector delta_pre(model.r);
    Real inhibition_sum = 0;
    for (std::size_t i : trace.topk.active) {
        Real d = 0;
        for (std::size_t row = 0; row < model.o; ++row) {
            d += model.storage.at(row, i) * delta_logits[row];
        }
        delta_pre[i] = d;
        const Real lambda =
            trace.mode == TopKMode::GabaSwitch ? trace.lambda[i] : Real(1);
        inhibition_sum += lambda * d;
    }
    const bool couple_inhibition = trace.mode != TopKMode::AnnealMask &&
                                   !trace.detach_inhibition &&
                                   trace.topk.kth_index.has_value();
    if (couple_inhibition) {
        delta_pre[*trace.topk.kth_index] -= inhibition_sum;
    }

    for (std::size_t col = 0; col < model.r; ++col) {
        const Real d = delta_pre[col];
        if (d == Real(0)) continue;
        for (std::size_t row = 0; row < model.n; ++row) {
            grads.d_address.at(row, col) = trace.input[row] * d;
        }
    }
    if (model.ablations.hidden_bias) grads.d_hidden_bias = delta_pre;
    return grads;
}

void project_weights(SdmlpModel& model, Rng& rng) {
    if (!model.ablations.allow_negative_weights) {
        for (Real& w : model.address.data) w = std::max(Real(0), w);
        for (Real& w : model.storage.data) w = std::max(Real(0), w);
    }
    if (!model.ablations.disable_l2_norm) {
        for (std::size_t col = 0; col < model.r; ++col) {
            Real norm_sq = 0;
            for (std::size_t row = 0; row < model.n; ++row) {
                norm_sq += model.address.at(row, col) * model.address.at(row, col);
            }
            if (norm_sq < Real(1e-24)) {
                random_nonneg_unit_column(model.address, col, rng);
                ++model.dead_column_resets;
            } else {
                const Real inv = Real(1) / std::sqrt(norm_sq);
                for (std::size_t row = 0; row < model.n; ++row) {
                    model.address.at(row, col) *= inv;
                }
            }
        }
    }
    ++model.revision;
}

EpochStats train_epoch(SdmlpModel& model, SdmlpTrainer& trainer,
                       const DenseMatrix& features,
                       const std::vector<int>& labels,
                       const std::vector<std::size_t>& sample_indices,
                       const TrainHooks* hooks,
                       std::vector<std::vector<std::uint64_t>>* class_counts) {
    if (sample_indices.empty()) throw EmptyData("train_epoch: no samples");
    std::vector<std::size_t> order = sample_indices;
    trainer.rng.shuffle(order);

    EpochStats stats;
    ParamView params = model.params();
    GradBlocks batch_grads = GradBlocks::like(params);
    std::vector<Real> before;  // only filled when an after_step hook exists

    DenseVector x(model.n);
    std::vector<std::uint64_t> batch_activations(model.r, 0);
    for (std::size_t start = 0; start < order.size();
         start += trainer.batch_size) {
        const std::size_t end =
            std::min(order.size(), start + trainer.batch_size);
        batch_grads.zero();
        std::fill(batch_activations.begin(), batch_activations.end(), 0);
        for (std::size_t s = start; s < end; ++s) {
            const std::size_t row = order[s];
            std::copy_n(features.data.data() + row * features.cols, model.n,
                        x.data.begin());
            const ForwardTrace trace = sdmlp_forward(model, x);
            const std::size_t target = static_cast<std::size_t>(labels[row]);
            const DenseVector probs = softmax_beta(trace.logits, 1.0);
            stats.mean_loss += cross_entropy(probs, target);
            std::size_t argmax = 0;
            for (std::size_t c = 1; c < model.o; ++c) {
                if (probs[c] > probs[argmax]) argmax = c;
            }
            stats.accuracy += argmax == target ? 1 : 0;
            ++stats.samples;

            const SdmlpGradients g = sdmlp_backward(model, trace, target);
            std::size_t block = 0;
            for (std::size_t i = 0; i < g.d_address.data.size(); ++i) {
                batch_grads.blocks[block][i] += g.d_address.data[i];
            }
            ++block;
            for (std::size_t i = 0; i < g.d_storage.data.size(); ++i) {
                batch_grads.blocks[block][i] += g.d_storage.data[i];
            }
            ++block;
            if (model.ablations.hidden_bias) {
                for (std::size_t i = 0; i < model.r; ++i) {
                    batch_grads.blocks[block][i] += g.d_hidden_bias[i];
                }
                ++block;
            }
            if (model.ablations.output_bias) {
                for (std::size_t i = 0; i < model.o; ++i) {
                    batch_grads.blocks[block][i] += g.d_output_bias[i];
                }
                ++block;
            }
            for (std::size_t i : trace.topk.active) {
                ++batch_activations[i];
                if (class_counts) ++(*class_counts)[i][target];
            }
        }
        batch_grads.scale(Real(1) / static_cast<Real>(end - start));
        if (hooks && hooks->modify_grads) hooks->modify_grads(params, batch_grads);
        if (hooks && hooks->after_step) before = params.gather();
        optimizer_step_blocks(trainer.opt, trainer.opt_state, params, batch_grads);
        ++model.revision;
        project_weights(model, trainer.rng);
        if (hooks && hooks->after_step) hooks->after_step(before, params, batch_grads);
        // GABA counters aggregate per batch
        for (std::size_t i = 0; i < model.r; ++i) {
            model.gaba_counters[i] += batch_activations[i];
        }
    }
    stats.mean_loss /= static_cast<Real>(stats.samples);
    stats.accuracy /= static_cast<Real>(stats.samples);
    stats.dead_column_resets = model.dead_column_resets;
    ++model.epoch;
    return stats;
}

// ---------------------------------------------------------------------------
// Checkpoint format (little-endian throughout), documented in the README:
//   magic "SDMLP1\n"
//   u32 n, r, o, mode, k_target, k_max, E_t, flags
//   f64 s
//   f64 address[n*r] row-major, f64 storage[o*r] row-major
//   u64 counters[r]
//   f64 hidden_bias[r]   (only when flag bit 2 is set)
//   f64 output_bias[o]   (only when flag bit 3 is set)
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[] = "SDMLP1\n";

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw Truncated("checkpoint: truncated u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw Truncated("checkpoint: truncated u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) {
    const std::uint64_t bits = get_u64(in);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_checkpoint(const SdmlpModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_checkpoint: cannot open " + path);
    out.write(kMagic, 7);
    put_u32(out, static_cast<std::uint32_t>(model.n));
    put_u32(out, static_cast<std::uint32_t>(model.r));
    put_u32(out, static_cast<std::uint32_t>(model.o));
    put_u32(out, static_cast<std::uint32_t>(model.topk.mode));
    put_u32(out, static_cast<std::uint32_t>(model.topk.k_target));
    put_u32(out, static_cast<std::uint32_t>(model.topk.k_max));
    put_u32(out, static_cast<std::uint32_t>(model.epoch));
    std::uint32_t flags = 0;
    if (model.ablations.allow_negative_weights) flags |= 1u;
    if (model.ablations.disable_l2_norm) flags |= 2u;
    if (model.ablations.hidden_bias) flags |= 4u;
    if (model.ablations.output_bias) flags |= 8u;
    if (model.topk.detach_inhibition) flags |= 16u;
    put_u32(out, flags);
    put_f64(out, model.topk.s);
    for (Real w : model.address.data) put_f64(out, w);
    for (Real w : model.storage.data) put_f64(out, w);
    for (std::uint64_t c : model.gaba_counters) put_u64(out, c);
    if (model.ablations.hidden_bias) {
        for (Real w : model.hidden_bias.data) put_f64(out, w);
    }
    if (model.ablations.output_bias) {
        for (Real w : model.output_bias.data) put_f64(out, w);
    }
    if (!out) throw IoError("save_checkpoint: write failed");
}

SdmlpModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path);
    char magic[7];
    in.read(magic, 7);
    if (!in || std::memcmp(magic, kMagic, 7) != 0) {
        throw BadMagic("load_checkpoint: bad magic");
    }
    SdmlpModel model;
    model.n = get_u32(in);
    model.r = get_u32(in);
    model.o = get_u32(in);
    model.topk.mode = static_cast<TopKMode>(get_u32(in));
    model.topk.k_target = get_u32(in);
    model.topk.k_max = get_u32(in);
    model.epoch = get_u32(in);
    const std::uint32_t flags = get_u32(in);
    model.ablations.allow_negative_weights = flags & 1u;
    model.ablations.disable_l2_norm = flags & 2u;
    model.ablations.hidden_bias = flags & 4u;
    model.ablations.output_bias = flags & 8u;
    model.topk.detach_inhibition = flags & 16u;
    model.topk.s = get_f64(in);
    model.address = DenseMatrix(model.n, model.r);
    for (Real& w : model.address.data) w = get_f64(in);
    model.storage = DenseMatrix(model.o, model.r);
    for (Real& w : model.storage.data) w = get_f64(in);
    model.gaba_counters.resize(model.r);
    for (std::uint64_t& c : model.gaba_counters) c = get_u64(in);
    if (model.ablations.hidden_bias) {
        model.hidden_bias = DenseVector(model.r);
        for (Real& w : model.hidden_bias.data) w = get_f64(in);
    }
    if (model.ablations.output_bias) {
        model.output_bias = DenseVector(model.o);
        for (Real& w : model.output_bias.data) w = get_f64(in);
    }
    return model;
}

}  // namespace sdmcl
