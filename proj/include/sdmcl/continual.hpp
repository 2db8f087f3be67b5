#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdmcl/baselines.hpp"
#include "sdmcl/data_io.hpp"
#include "sdmcl/sdmlp.hpp"

namespace sdmcl {

/// Seeded partition of class labels into disjoint ordered subsets.
struct TaskStream {
    std::vector<std::vector<int>> class_partition;
    std::uint64_t seed = 0;
    std::size_t epochs_per_task = 0;
};

/// Shuffles the class ids with the seed and chunks them. Throws
/// IndivisibleClasses when classes_per_task does not divide the class count.
TaskStream split_dataset(const LabeledDataset& dataset,
                         std::size_t classes_per_task, std::uint64_t seed);

struct EpochRecord {
    std::size_t task = 0;
    std::size_t epoch_in_task = 0;
    std::size_t global_epoch = 0;
    Real overall_acc = 0;               // over the full validation set
    std::vector<Real> per_task_acc;     // one entry per task
    Real dead_fraction = 0;
    std::size_t k_t = 0;
    Real loss = 0;
};

struct MetricsLog {
    std::string method;
    std::size_t neurons = 0;
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> records;
    /// training-time activation counts, neuron x class
    std::vector<std::vector<std::uint64_t>> neuron_class_counts;

    Real final_acc() const {
        return records.empty() ? Real(0) : records.back().overall_acc;
    }
};

enum class ModelKind { Sdmlp, Relu, TopK, Fly };

struct ContinualConfig {
    ModelKind model_kind = ModelKind::Sdmlp;
    std::size_t neurons = 1000;

    TopKConfig topk;            // sdmlp
    SdmlpAblations ablations;   // sdmlp
    MlpActivation baseline_activation = MlpActivation::ReLU;
    Real dropout = 0.0;
    std::size_t fly_q = 32;
    std::size_t fly_k = 64;
    Real fly_lr = 0.005;

    OptimizerConfig optimizer;
    RegMethod reg_method = RegMethod::None;
    Real lambda_reg = 0;
    Real reg_beta = 1.0;

    std::size_t classes_per_task = 2;
    std::size_t epochs_per_task = 50;
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;
    bool oracle = false;  // one task containing every class

    const LabeledDataset* pretrain = nullptr;
    std::size_t pretrain_epochs = 0;
};

/// Class-incremental run: optional pretraining (the anneal/GABA schedule
/// completes there), output-weight reset at the boundary, then task-by-task
/// training with every-epoch evaluation against the full validation set.
MetricsLog run_continual(const ContinualConfig& cfg,
                         const LabeledDataset& train,
                         const LabeledDataset& validation);

/// Fraction of neurons never in the active set over a full pass.
Real dead_neuron_fraction(const SdmlpModel& model, const LabeledDataset& data);
Real dead_neuron_fraction(const MlpBaseline& model, const LabeledDataset& data);

struct NeuronEntropy {
    Real entropy = 0;       // nats, over the class-activation distribution
    Real active_share = 0;  // this neuron's share of all activations
};

struct EntropyReport {
    std::vector<NeuronEntropy> per_neuron;
    Real weighted_mean = 0;  // sum of share * entropy
};

EntropyReport entropy_from_counts(
    const std::vector<std::vector<std::uint64_t>>& counts);
EntropyReport activation_entropy_report(const SdmlpModel& model,
                                        const LabeledDataset& data);
EntropyReport activation_entropy_report(const MlpBaseline& model,
                                        const LabeledDataset& data);

}  // namespace sdmcl
