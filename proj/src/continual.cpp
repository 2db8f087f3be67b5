#include "sdmcl/continual.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sdmcl {

TaskStream split_dataset(const LabeledDataset& dataset,
                         std::size_t classes_per_task, std::uint64_t seed) {
    if (classes_per_task == 0 ||
        dataset.num_classes % classes_per_task != 0) {
        throw IndivisibleClasses(
            "split_dataset: classes_per_task must divide the class count");
    }
    std::vector<int> classes(dataset.num_classes);
    std::iota(classes.begin(), classes.end(), 0);
    Rng rng(seed);
    rng.shuffle(classes);

    TaskStream stream;
    stream.seed = seed;
    for (std::size_t start = 0; start < classes.size();
         start += classes_per_task) {
        stream.class_partition.emplace_back(
            classes.begin() + static_cast<std::ptrdiff_t>(start),
            classes.begin() + static_cast<std::ptrdiff_t>(start + classes_per_task));
    }
    return stream;
}

namespace {

std::vector<std::size_t> indices_for_classes(const LabeledDataset& data,
                                             const std::vector<int>& classes) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (std::find(classes.begin(), classes.end(), data.labels[i]) !=
            classes.end()) {
            out.push_back(i);
        }
    }
    return out;
}

std::vector<std::size_t> all_indices(const LabeledDataset& data) {
    std::vector<std::size_t> out(data.size());
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
}

std::size_t argmax(const DenseVector& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.dim(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

/// Uniform evaluation surface over the three model families.
struct Predictor {
    const SdmlpModel* sdmlp = nullptr;
    const MlpBaseline* mlp = nullptr;
    const FlyModel* fly = nullptr;

    std::size_t predict(const DenseVector& x) const {
        if (sdmlp) return argmax(sdmlp_forward(*sdmlp, x).logits);
        if (mlp) return argmax(mlp_forward(*mlp, x).logits);
        return flymodel_predict(*fly, x);
    }
};

struct EvalResult {
    Real overall = 0;
    std::vector<Real> per_task;
};

EvalResult evaluate(const Predictor& model, const LabeledDataset& validation,
                    const std::vector<std::vector<int>>& partition) {
    EvalResult res;
    res.per_task.assign(partition.size(), Real(0));
    std::vector<Real> task_total(partition.size(), Real(0));
    std::vector<int> class_to_task(validation.num_classes, -1);
    for (std::size_t t = 0; t < partition.size(); ++t) {
        for (int c : partition[t]) class_to_task[static_cast<std::size_t>(c)] = static_cast<int>(t);
    }
    Real correct = 0;
    for (std::size_t i = 0; i < validation.size(); ++i) {
        const DenseVector x = validation.row(i);
        const bool hit =
            model.predict(x) == static_cast<std::size_t>(validation.labels[i]);
        correct += hit ? 1 : 0;
        const int task = class_to_task[static_cast<std::size_t>(validation.labels[i])];
        if (task >= 0) {
            task_total[static_cast<std::size_t>(task)] += 1;
            res.per_task[static_cast<std::size_t>(task)] += hit ? 1 : 0;
        }
    }
    res.overall = correct / static_cast<Real>(validation.size());
    for (std::size_t t = 0; t < partition.size(); ++t) {
        if (task_total[t] > 0) res.per_task[t] /= task_total[t];
    }
    return res;
}

std::string method_name(const ContinualConfig& cfg) {
    std::string name;
    switch (cfg.model_kind) {
        case ModelKind::Sdmlp: name = "sdmlp"; break;
        case ModelKind::Relu: name = "relu"; break;
        case ModelKind::TopK: name = "topk"; break;
        case ModelKind::Fly: name = "flymodel"; break;
    }
    switch (cfg.reg_method) {
        case RegMethod::None: break;
        case RegMethod::EWC: name += "+ewc"; break;
        case RegMethod::MAS: name += "+mas"; break;
        case RegMethod::SI: name += "+si"; break;
        case RegMethod::L2Anchor: name += "+l2"; break;
    }
    return name;
}

}  // namespace

Real dead_neuron_fraction(const SdmlpModel& model, const LabeledDataset& data) {
    std::vector<bool> seen(model.r, false);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const ForwardTrace trace = sdmlp_forward(model, data.row(i));
        for (std::size_t j : trace.topk.active) seen[j] = true;
    }
    const std::size_t dead =
        static_cast<std::size_t>(std::count(seen.begin(), seen.end(), false));
    return static_cast<Real>(dead) / static_cast<Real>(model.r);
}

Real dead_neuron_fraction(const MlpBaseline& model, const LabeledDataset& data) {
    std::vector<bool> seen(model.r, false);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const MlpTrace trace = mlp_forward(model, data.row(i));
        for (std::size_t j : trace.topk.active) seen[j] = true;
    }
    const std::size_t dead =
        static_cast<std::size_t>(std::count(seen.begin(), seen.end(), false));
    return static_cast<Real>(dead) / static_cast<Real>(model.r);
}

EntropyReport entropy_from_counts(
    const std::vector<std::vector<std::uint64_t>>& counts) {
    EntropyReport report;
    report.per_neuron.resize(counts.size());
    Real grand_total = 0;
    for (const auto& row : counts) {
        for (std::uint64_t c : row) grand_total += static_cast<Real>(c);
    }
    for (std::size_t i = 0; i < counts.size(); ++i) {
        Real total = 0;
        for (std::uint64_t c : counts[i]) total += static_cast<Real>(c);
        if (total == Real(0)) continue;  // never active: share 0, entropy 0
        Real entropy = 0;
        for (std::uint64_t c : counts[i]) {
            if (c == 0) continue;
            const Real p = static_cast<Real>(c) / total;
            entropy -= p * std::log(p);
        }
        report.per_neuron[i].entropy = entropy;
        report.per_neuron[i].active_share = total / grand_total;
        report.weighted_mean += report.per_neuron[i].active_share * entropy;
    }
    return report;
}

namespace {

template <typename Model, typename TraceFn>
EntropyReport entropy_over_data(const Model& model, const LabeledDataset& data,
                                std::size_t r, TraceFn&& active_of) {
    std::vector<std::vector<std::uint64_t>> counts(
        r, std::vector<std::uint64_t>(data.num_classes, 0));
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto active = active_of(model, data.row(i));
        const std::size_t label = static_cast<std::size_t>(data.labels[i]);
        for (std::size_t j : active) ++counts[j][label];
    }
    return entropy_from_counts(counts);
}

}  // namespace

EntropyReport activation_entropy_report(const SdmlpModel& model,
                                        const LabeledDataset& data) {
    return entropy_over_data(
        model, data, model.r, [](const SdmlpModel& m, const DenseVector& x) {
            return sdmlp_forward(m, x).topk.active;
        });
}

EntropyReport activation_entropy_report(const MlpBaseline& model,
                                        const LabeledDataset& data) {
    return entropy_over_data(
        model, data, model.r, [](const MlpBaseline& m, const DenseVector& x) {
            return mlp_forward(m, x).topk.active;
        });
}

MetricsLog run_continual(const ContinualConfig& cfg,
                         const LabeledDataset& train,
                         const LabeledDataset& validation) {
    MetricsLog log;
    log.method = method_name(cfg);
    log.neurons = cfg.neurons;
    log.seed = cfg.seed;

    TaskStream stream;
    if (cfg.oracle) {
        stream.seed = cfg.seed;
        stream.class_partition.emplace_back();
        for (std::size_t c = 0; c < train.num_classes; ++c) {
            stream.class_partition.back().push_back(static_cast<int>(c));
        }
    } else {
        stream = split_dataset(train, cfg.classes_per_task, cfg.seed);
    }
    stream.epochs_per_task = cfg.epochs_per_task;

    // --- model construction -------------------------------------------------
    SdmlpModel sdmlp;
    MlpBaseline mlp;
    FlyModel fly;
    Predictor predictor;
    std::unique_ptr<SdmlpTrainer> sdmlp_trainer;
    std::unique_ptr<MlpTrainer> mlp_trainer;

    const std::uint64_t model_seed = cfg.seed * 7919 + 1;
    switch (cfg.model_kind) {
        case ModelKind::Sdmlp: {
            sdmlp = SdmlpModel::init(train.dim(), cfg.neurons,
                                     train.num_classes, cfg.topk,
                                     cfg.ablations, model_seed);
            predictor.sdmlp = &sdmlp;
            sdmlp_trainer = std::make_unique<SdmlpTrainer>(
                cfg.optimizer, cfg.batch_size, cfg.seed * 104729 + 3);
            log.k = cfg.topk.k_target;
            break;
        }
        case ModelKind::Relu:
        case ModelKind::TopK: {
            const MlpActivation act = cfg.model_kind == ModelKind::Relu
                                          ? MlpActivation::ReLU
                                          : cfg.baseline_activation;
            mlp = MlpBaseline::init(train.dim(), cfg.neurons, train.num_classes,
                                    act, cfg.topk.k_target, model_seed);
            mlp.dropout_rate = cfg.dropout;
            predictor.mlp = &mlp;
            mlp_trainer = std::make_unique<MlpTrainer>(
                cfg.optimizer, cfg.batch_size, cfg.seed * 104729 + 3);
            log.k = act == MlpActivation::ReLU ? 0 : cfg.topk.k_target;
            break;
        }
        case ModelKind::Fly: {
            fly = FlyModel::init(train.dim(), train.num_classes, cfg.neurons,
                                 cfg.fly_q, cfg.fly_k, cfg.fly_lr, model_seed);
            predictor.fly = &fly;
            log.k = cfg.fly_k;
            break;
        }
    }

    const std::size_t neuron_rows =
        cfg.model_kind == ModelKind::Fly ? fly.r_kc : cfg.neurons;
    log.neuron_class_counts.assign(
        neuron_rows, std::vector<std::uint64_t>(train.num_classes, 0));

    // --- optional pretraining; the anneal/GABA schedule completes here ------
    if (cfg.pretrain && cfg.pretrain_epochs > 0) {
        if (cfg.model_kind == ModelKind::Fly) {
            throw ConfigError("run_continual: the fly model takes no pretraining");
        }
        const auto pre_indices = all_indices(*cfg.pretrain);
        for (std::size_t e = 0; e < cfg.pretrain_epochs; ++e) {
            if (cfg.model_kind == ModelKind::Sdmlp) {
                train_epoch(sdmlp, *sdmlp_trainer, cfg.pretrain->features,
                            cfg.pretrain->labels, pre_indices);
            } else {
                mlp_train_epoch(mlp, *mlp_trainer, cfg.pretrain->features,
                                cfg.pretrain->labels, pre_indices);
            }
        }
        // fresh output weights at the pretrain -> continual boundary
        if (cfg.model_kind == ModelKind::Sdmlp) {
            sdmlp.reset_storage(model_seed + 17);
        } else {
            MlpBaseline fresh = MlpBaseline::init(
                mlp.n, mlp.r, mlp.o, mlp.activation, mlp.k, model_seed + 17);
            mlp.storage = fresh.storage;
            mlp.output_bias = DenseVector(mlp.o);
            ++mlp.revision;
        }
    }

    // --- regularizer state ---------------------------------------------------
    std::unique_ptr<DifferentiableModel> diff_model;
    if (cfg.model_kind == ModelKind::Sdmlp) diff_model = wrap_model(sdmlp);
    if (cfg.model_kind == ModelKind::Relu || cfg.model_kind == ModelKind::TopK) {
        diff_model = wrap_model(mlp);
    }
    ImportanceState importance;
    TrainHooks hooks;
    bool use_hooks = false;
    if (cfg.reg_method != RegMethod::None) {
        if (!diff_model) {
            throw ConfigError("run_continual: regularizer needs a gradient model");
        }
        importance = ImportanceState::make(cfg.reg_method, cfg.lambda_reg,
                                           cfg.reg_beta,
                                           diff_model->params().total());
        const std::vector<Real> theta = diff_model->params().gather();
        importance.anchor = theta;
        if (cfg.reg_method == RegMethod::SI) importance.si_task_start = theta;
        hooks = importance_hooks(importance);
        use_hooks = true;
    }

    // --- task loop ------------------------------------------------------------
    std::size_t global_epoch = 0;
    for (std::size_t t = 0; t < stream.class_partition.size(); ++t) {
        const auto task_indices =
            indices_for_classes(train, stream.class_partition[t]);
        if (task_indices.empty()) throw EmptyData("run_continual: empty task");
        for (std::size_t i : task_indices) {
            const auto& classes = stream.class_partition[t];
            if (std::find(classes.begin(), classes.end(), train.labels[i]) ==
                classes.end()) {
                throw Error("run_continual: sample outside the current task");
            }
        }
        const std::size_t task_epochs =
            cfg.model_kind == ModelKind::Fly ? 1 : cfg.epochs_per_task;
        for (std::size_t e = 0; e < task_epochs; ++e) {
            EpochRecord rec;
            rec.task = t;
            rec.epoch_in_task = e;
            rec.global_epoch = global_epoch++;
            if (cfg.model_kind == ModelKind::Fly) {
                flymodel_train(fly, train.features, train.labels, task_indices);
                for (std::size_t i : task_indices) {
                    const auto active = fly_active_cells(fly, train.row(i));
                    for (std::size_t cell : active) {
                        ++log.neuron_class_counts[cell]
                                                 [static_cast<std::size_t>(
                                                     train.labels[i])];
                    }
                }
                rec.loss = 0;
                rec.k_t = fly.k;
            } else if (cfg.model_kind == ModelKind::Sdmlp) {
                const EpochStats stats = train_epoch(
                    sdmlp, *sdmlp_trainer, train.features, train.labels,
                    task_indices, use_hooks ? &hooks : nullptr,
                    &log.neuron_class_counts);
                rec.loss = stats.mean_loss;
                rec.k_t = sdmlp.current_k();
            } else {
                const EpochStats stats = mlp_train_epoch(
                    mlp, *mlp_trainer, train.features, train.labels,
                    task_indices, use_hooks ? &hooks : nullptr,
                    &log.neuron_class_counts);
                rec.loss = stats.mean_loss;
                rec.k_t = mlp.activation == MlpActivation::ReLU ? 0 : mlp.k;
            }
            const EvalResult eval =
                evaluate(predictor, validation, stream.class_partition);
            rec.overall_acc = eval.overall;
            rec.per_task_acc = eval.per_task;
            if (cfg.model_kind == ModelKind::Sdmlp) {
                rec.dead_fraction = dead_neuron_fraction(sdmlp, validation);
            } else if (cfg.model_kind != ModelKind::Fly) {
                rec.dead_fraction = dead_neuron_fraction(mlp, validation);
            }
            log.records.push_back(std::move(rec));
        }
        // refresh importance at the task boundary
        if (use_hooks) {
            estimate_importance(importance, *diff_model, train.features,
                                train.labels, task_indices);
        }
    }
    return log;
}

}  // namespace sdmcl
