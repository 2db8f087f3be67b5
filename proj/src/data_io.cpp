#include "sdmcl/data_io.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "sdmcl/continual.hpp"

namespace sdmcl {

namespace {

std::uint32_t read_u32_be(std::istream& in, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw Truncated(std::string("idx: truncated ") + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::uint32_t read_u32_le(std::istream& in, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw Truncated(std::string("embeddings: truncated ") + what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
           (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
    out.write(reinterpret_cast<const char*>(b), 4);
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr char kEmbMagic[] = "SDMEMB1\n";

void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw IoError("rename failed for " + path);
    }
}

}  // namespace

LabeledDataset parse_idx(const std::string& images_path,
                         const std::string& labels_path) {
    std::ifstream images(images_path, std::ios::binary);
    if (!images) throw IoError("cannot open " + images_path);
    if (read_u32_be(images, "image magic") != kIdxImagesMagic) {
        throw BadMagic("idx: image magic != 0x00000803");
    }
    const std::uint32_t count = read_u32_be(images, "image count");
    const std::uint32_t rows = read_u32_be(images, "image rows");
    const std::uint32_t cols = read_u32_be(images, "image cols");

    std::ifstream labels(labels_path, std::ios::binary);
    if (!labels) throw IoError("cannot open " + labels_path);
    if (read_u32_be(labels, "label magic") != kIdxLabelsMagic) {
        throw BadMagic("idx: label magic != 0x00000801");
    }
    const std::uint32_t label_count = read_u32_be(labels, "label count");
    if (label_count != count) {
        throw CountMismatch("idx: label count != image count");
    }

    LabeledDataset ds;
    const std::size_t dim = std::size_t(rows) * cols;
    ds.features = DenseMatrix(count, dim);
    ds.labels.resize(count);
    std::vector<unsigned char> buf(dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        images.read(reinterpret_cast<char*>(buf.data()),
                    static_cast<std::streamsize>(dim));
        if (!images) throw Truncated("idx: truncated pixel data");
        for (std::size_t j = 0; j < dim; ++j) {
            ds.features.at(i, j) = static_cast<Real>(buf[j]) / Real(255);
        }
    }
    int max_label = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        unsigned char l;
        labels.read(reinterpret_cast<char*>(&l), 1);
        if (!labels) throw Truncated("idx: truncated label data");
        ds.labels[i] = l;
        max_label = std::max(max_label, int(l));
    }
    ds.num_classes = static_cast<std::size_t>(max_label) + 1;
    ds.provenance = "idx:" + images_path;
    return ds;
}

LabeledDataset parse_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kEmbMagic, 8) != 0) {
        throw BadMagic("embeddings: bad magic");
    }
    const std::uint32_t count = read_u32_le(in, "count");
    const std::uint32_t dim = read_u32_le(in, "dim");
    const std::uint32_t num_classes = read_u32_le(in, "num_classes");

    LabeledDataset ds;
    ds.features = DenseMatrix(count, dim);
    ds.labels.resize(count);
    ds.num_classes = num_classes;
    std::vector<float> row(dim);
    for (std::uint32_t i = 0; i < count; ++i) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(dim * sizeof(float)));
        if (!in) throw Truncated("embeddings: truncated feature block");
        for (std::uint32_t j = 0; j < dim; ++j) {
            ds.features.at(i, j) = static_cast<Real>(row[j]);
        }
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t label = read_u32_le(in, "label");
        if (label >= num_classes) {
            throw LabelOutOfRange("embeddings: label >= num_classes");
        }
        ds.labels[i] = static_cast<int>(label);
    }
    ds.provenance = "embeddings:" + path;
    return ds;
}

void write_embeddings(const LabeledDataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path);
    out.write(kEmbMagic, 8);
    write_u32_le(out, static_cast<std::uint32_t>(dataset.size()));
    write_u32_le(out, static_cast<std::uint32_t>(dataset.dim()));
    write_u32_le(out, static_cast<std::uint32_t>(dataset.num_classes));
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        for (std::size_t j = 0; j < dataset.dim(); ++j) {
            const float f = static_cast<float>(dataset.features.at(i, j));
            out.write(reinterpret_cast<const char*>(&f), sizeof(float));
        }
    }
    for (int label : dataset.labels) {
        write_u32_le(out, static_cast<std::uint32_t>(label));
    }
    if (!out) throw IoError("write failed for " + path);
}

void normalize_per_sample_l2(LabeledDataset& dataset) {
    if (dataset.normalization == Normalization::PerSampleL2) return;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        Real norm_sq = 0;
        Real* row = dataset.features.data.data() + i * dataset.dim();
        for (std::size_t j = 0; j < dataset.dim(); ++j) norm_sq += row[j] * row[j];
        if (norm_sq < Real(1e-24)) continue;
        const Real inv = Real(1) / std::sqrt(norm_sq);
        for (std::size_t j = 0; j < dataset.dim(); ++j) row[j] *= inv;
    }
    dataset.normalization = Normalization::PerSampleL2;
}

DenseVector rescale_unit_range(const DenseVector& v) {
    Real lo = v[0], hi = v[0];
    for (Real x : v.data) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    DenseVector out(v.dim());
    const Real span = hi - lo;
    for (std::size_t i = 0; i < v.dim(); ++i) {
        out[i] = span > Real(0) ? (v[i] - lo) / span : Real(0);
    }
    return out;
}

void write_results(const MetricsLog& log, const std::string& path) {
    using nlohmann::json;
    std::string lines;
    for (const EpochRecord& rec : log.records) {
        json j{{"task", rec.task},
               {"epoch", rec.epoch_in_task},
               {"global_epoch", rec.global_epoch},
               {"overall_acc", rec.overall_acc},
               {"per_task_acc", rec.per_task_acc},
               {"dead_fraction", rec.dead_fraction},
               {"k_t", rec.k_t},
               {"loss", rec.loss}};
        lines += j.dump();
        lines += '\n';
    }
    atomic_write(path + ".jsonl", lines);

    json summary{{"method", log.method}, {"neurons", log.neurons},
                 {"k", log.k},           {"seed", log.seed},
                 {"records", log.records.size()},
                 {"final_acc", log.final_acc()}};
    atomic_write(path + ".summary.json", summary.dump(2) + "\n");
}

MetricsLog read_results(const std::string& path) {
    using nlohmann::json;
    MetricsLog log;
    {
        std::ifstream in(path + ".summary.json");
        if (!in) throw IoError("cannot open " + path + ".summary.json");
        json summary = json::parse(in);
        log.method = summary.at("method").get<std::string>();
        log.neurons = summary.at("neurons").get<std::size_t>();
        log.k = summary.at("k").get<std::size_t>();
        log.seed = summary.at("seed").get<std::uint64_t>();
    }
    std::ifstream in(path + ".jsonl");
    if (!in) throw IoError("cannot open " + path + ".jsonl");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        EpochRecord rec;
        rec.task = j.at("task").get<std::size_t>();
        rec.epoch_in_task = j.at("epoch").get<std::size_t>();
        rec.global_epoch = j.at("global_epoch").get<std::size_t>();
        rec.overall_acc = j.at("overall_acc").get<Real>();
        rec.per_task_acc = j.at("per_task_acc").get<std::vector<Real>>();
        rec.dead_fraction = j.at("dead_fraction").get<Real>();
        rec.k_t = j.at("k_t").get<std::size_t>();
        rec.loss = j.at("loss").get<Real>();
        log.records.push_back(std::move(rec));
    }
    return log;
}

}  // namespace sdmcl
