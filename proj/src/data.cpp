#include "hiersfl/data.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>

#include "hiersfl/errors.hpp"
#include "hiersfl/rng.hpp"

namespace hiersfl {

namespace {

// Blob spread around each class centroid; centroids live in [0.2, 0.8] so
// clipping to [0, 1] stays rare.
constexpr double kBlobSigma = 0.07;
constexpr double kCentroidLow = 0.2;
constexpr double kCentroidSpan = 0.6;

// Centroids are a fixed property of (num_classes, d), not of the dataset
// seed, so every seed samples the same class geometry.
constexpr uint64_t kCentroidBase = 0x9e3779b97f4a7c15ULL;

constexpr uint32_t kIdxImagesMagic = 0x00000803;
constexpr uint32_t kIdxLabelsMagic = 0x00000801;

}  // namespace

void Dataset::validate() const {
    if (size() == 0) throw InputError("dataset: empty");
    if (num_classes < 2) {
        throw InputError("dataset: need at least 2 classes, got " + std::to_string(num_classes));
    }
    if (labels.size() != features.rows) {
        throw InputError("dataset: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(features.rows) + " rows");
    }
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<size_t>(labels[i]) >= num_classes) {
            throw InputError("dataset: label " + std::to_string(labels[i]) + " at row " +
                             std::to_string(i) + " outside [0, " + std::to_string(num_classes) +
                             ")");
        }
    }
    for (double v : features.data) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw InputError("dataset: feature value " + std::to_string(v) +
                             " outside [0, 1]");
        }
    }
}

Dataset generate_synthetic(uint64_t seed, size_t n, size_t d, size_t num_classes) {
    if (n == 0 || d == 0 || num_classes < 2) {
        throw InputError("generate_synthetic: need n > 0, d > 0, num_classes >= 2");
    }
    if (n % num_classes != 0) {
        throw InputError("generate_synthetic: n = " + std::to_string(n) +
                         " not divisible by num_classes = " + std::to_string(num_classes));
    }
    std::vector<std::vector<double>> centroids(num_classes, std::vector<double>(d));
    for (size_t c = 0; c < num_classes; ++c) {
        Rng rng(mix_seed(kCentroidBase, seed_tags::kCentroid, c * 0x10001 + d));
        for (size_t j = 0; j < d; ++j) {
            centroids[c][j] = kCentroidLow + kCentroidSpan * rng.next_double();
        }
    }
    Dataset ds;
    ds.num_classes = num_classes;
    ds.features = Tensor2D(n, d);
    ds.labels.resize(n);
    Rng rng(mix_seed(seed, seed_tags::kData));
    for (size_t i = 0; i < n; ++i) {
        size_t c = i % num_classes;
        ds.labels[i] = static_cast<int>(c);
        for (size_t j = 0; j < d; ++j) {
            double v = centroids[c][j] + kBlobSigma * rng.next_gaussian();
            ds.features.at(i, j) = std::clamp(v, 0.0, 1.0);
        }
    }
    return ds;
}

namespace {

struct IdxFile {
    std::string path;
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp;
    size_t offset = 0;

    explicit IdxFile(const std::string& p)
        : path(p), fp(std::fopen(p.c_str(), "rb"), &std::fclose) {
        if (!fp) throw InputError("load_idx: cannot open " + path);
    }

    uint32_t read_u32() {
        unsigned char b[4];
        read_bytes(b, 4);
        return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) |
               uint32_t(b[3]);
    }

    void read_bytes(unsigned char* out, size_t n) {
        size_t got = std::fread(out, 1, n, fp.get());
        if (got != n) {
            throw FormatError("load_idx: " + path + ": truncated at offset " +
                              std::to_string(offset + got) + ", expected " +
                              std::to_string(n - got) + " more bytes");
        }
        offset += n;
    }
};

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    IdxFile images(images_path);
    uint32_t magic = images.read_u32();
    if (magic != kIdxImagesMagic) {
        throw FormatError("load_idx: " + images_path + ": bad magic at offset 0, expected " +
                          std::to_string(kIdxImagesMagic) + " got " + std::to_string(magic));
    }
    uint32_t n = images.read_u32();
    uint32_t rows = images.read_u32();
    uint32_t cols = images.read_u32();
    if (n == 0 || rows == 0 || cols == 0) {
        throw FormatError("load_idx: " + images_path + ": zero dimension in header");
    }

    IdxFile labels(labels_path);
    magic = labels.read_u32();
    if (magic != kIdxLabelsMagic) {
        throw FormatError("load_idx: " + labels_path + ": bad magic at offset 0, expected " +
                          std::to_string(kIdxLabelsMagic) + " got " + std::to_string(magic));
    }
    uint32_t n_labels = labels.read_u32();
    if (n_labels != n) {
        throw FormatError("load_idx: " + labels_path + ": holds " + std::to_string(n_labels) +
                          " labels but " + images_path + " holds " + std::to_string(n) +
                          " images");
    }

    size_t d = size_t(rows) * size_t(cols);
    Dataset ds;
    ds.features = Tensor2D(n, d);
    ds.labels.resize(n);
    std::vector<unsigned char> pixel_row(d);
    for (size_t i = 0; i < n; ++i) {
        images.read_bytes(pixel_row.data(), d);
        for (size_t j = 0; j < d; ++j) {
            ds.features.at(i, j) = static_cast<double>(pixel_row[j]) / 255.0;
        }
    }
    int max_label = 0;
    std::vector<unsigned char> label_bytes(n);
    labels.read_bytes(label_bytes.data(), n);
    for (size_t i = 0; i < n; ++i) {
        ds.labels[i] = static_cast<int>(label_bytes[i]);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = static_cast<size_t>(max_label) + 1;
    if (ds.num_classes < 2) ds.num_classes = 2;
    return ds;
}

PartitionPlan partition_noniid(const Dataset& ds, size_t num_clients, size_t labels_per_client,
                               size_t samples_per_label, uint64_t seed) {
    ds.validate();
    if (num_clients == 0) throw InputError("partition_noniid: need at least one client");
    if (labels_per_client == 0 || labels_per_client > ds.num_classes) {
        throw InputError("partition_noniid: labels_per_client " +
                         std::to_string(labels_per_client) + " outside [1, " +
                         std::to_string(ds.num_classes) + "]");
    }
    if (samples_per_label == 0) {
        throw InputError("partition_noniid: samples_per_label must be positive");
    }

    // Per-label sample pools in a seed-shuffled order.
    std::vector<std::vector<size_t>> pools(ds.num_classes);
    for (size_t i = 0; i < ds.size(); ++i) {
        pools[static_cast<size_t>(ds.labels[i])].push_back(i);
    }
    for (size_t c = 0; c < ds.num_classes; ++c) {
        Rng rng(mix_seed(seed, seed_tags::kPartition, c));
        shuffle(pools[c], rng);
    }

    PartitionPlan plan;
    plan.labels_per_client = labels_per_client;
    plan.samples_per_label = samples_per_label;
    plan.client_samples.resize(num_clients);
    std::vector<size_t> cursor(ds.num_classes, 0);
    for (size_t k = 0; k < num_clients; ++k) {
        plan.client_samples[k].reserve(labels_per_client * samples_per_label);
        for (size_t j = 0; j < labels_per_client; ++j) {
            size_t label = (k * labels_per_client + j) % ds.num_classes;
            size_t need = samples_per_label;
            size_t have = pools[label].size() - cursor[label];
            if (have < need) {
                throw CapacityError("partition_noniid: label " + std::to_string(label) +
                                    " exhausted: need " + std::to_string(need) + " more, have " +
                                    std::to_string(have));
            }
            for (size_t t = 0; t < need; ++t) {
                plan.client_samples[k].push_back(pools[label][cursor[label]++]);
            }
        }
    }
    return plan;
}

std::vector<size_t> epoch_order(const PartitionPlan& plan, size_t client_id, uint64_t seed,
                                size_t epoch) {
    if (client_id >= plan.num_clients()) {
        throw InputError("epoch_order: client " + std::to_string(client_id) +
                         " outside plan of " + std::to_string(plan.num_clients()));
    }
    std::vector<size_t> order = plan.client_samples[client_id];
    Rng rng(mix_seed(mix_seed(seed, seed_tags::kBatch, client_id), seed_tags::kEpoch, epoch));
    shuffle(order, rng);
    return order;
}

Batch extract_batch(const Dataset& ds, const std::vector<size_t>& order, size_t start,
                    size_t rows) {
    if (start + rows > order.size()) {
        throw ContractViolation("extract_batch: rows [" + std::to_string(start) + ", " +
                                std::to_string(start + rows) + ") outside order of " +
                                std::to_string(order.size()));
    }
    size_t d = ds.feature_dim();
    Batch b;
    b.features = Tensor2D(rows, d);
    b.labels.resize(rows);
    for (size_t r = 0; r < rows; ++r) {
        size_t src = order[start + r];
        if (src >= ds.size()) {
            throw ContractViolation("extract_batch: sample index " + std::to_string(src) +
                                    " outside dataset of " + std::to_string(ds.size()));
        }
        std::copy(ds.features.data.begin() + static_cast<ptrdiff_t>(src * d),
                  ds.features.data.begin() + static_cast<ptrdiff_t>((src + 1) * d),
                  b.features.data.begin() + static_cast<ptrdiff_t>(r * d));
        b.labels[r] = ds.labels[src];
    }
    return b;
}

std::vector<Batch> batches(const Dataset& ds, const PartitionPlan& plan, size_t client_id,
                           size_t batch_size, uint64_t seed, size_t epoch) {
    if (batch_size == 0) throw InputError("batches: batch_size must be positive");
    std::vector<size_t> order = epoch_order(plan, client_id, seed, epoch);
    std::vector<Batch> out;
    for (size_t start = 0; start < order.size(); start += batch_size) {
        out.push_back(extract_batch(ds, order, start, std::min(batch_size, order.size() - start)));
    }
    return out;
}

}  // namespace hiersfl
