#pragma once

#include <string>
#include <vector>

#include "sdmcl/numerics.hpp"

namespace sdmcl {

enum class Normalization { None, PerSampleL2 };

struct LabeledDataset {
    DenseMatrix features;  // samples x dim
    std::vector<int> labels;
    std::size_t num_classes = 0;
    Normalization normalization = Normalization::None;
    std::string provenance;

    std::size_t size() const { return features.rows; }
    std::size_t dim() const { return features.cols; }
    DenseVector row(std::size_t i) const {
        DenseVector v(features.cols);
        std::copy_n(features.data.data() + i * features.cols, features.cols,
                    v.data.begin());
        return v;
    }
};

/// IDX image/label pair (big-endian headers, magic 0x803 / 0x801). Pixels
/// land in [0, 1]; labels are cross-checked against the image count.
LabeledDataset parse_idx(const std::string& images_path,
                         const std::string& labels_path);

/// Embedding container: "SDMEMB1\n", u32 LE count/dim/num_classes, then
/// float32 features and u32 labels.
LabeledDataset parse_embeddings(const std::string& path);
void write_embeddings(const LabeledDataset& dataset, const std::string& path);

/// Scales every row to unit norm once; repeated calls are no-ops (tracked by
/// the normalization flag). Rows with near-zero norm are left untouched.
void normalize_per_sample_l2(LabeledDataset& dataset);

/// min-subtract / max-divide rescaling into [0, 1] for weight visualization
/// exports.
DenseVector rescale_unit_range(const DenseVector& v);

struct MetricsLog;  // continual.hpp

/// Writes <path>.jsonl (one record per task x epoch) and <path>.summary.json,
/// each atomically via a temp file and rename.
void write_results(const MetricsLog& log, const std::string& path);

/// Reads back what write_results wrote (used for round-trip checks and the
/// report command).
MetricsLog read_results(const std::string& path);

}  // namespace sdmcl
