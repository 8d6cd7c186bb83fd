#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hiersfl/tensor.hpp"

namespace hiersfl {

/// An immutable labeled dataset. Features are n x d with every value in
/// [0, 1]; labels index classes [0, num_classes).
struct Dataset {
    Tensor2D features{0, 0};
    std::vector<int> labels;
    size_t num_classes = 0;

    size_t size() const { return features.rows; }
    size_t feature_dim() const { return features.cols; }
    void validate() const;
};

/// Per-client sample-index assignment. Every client holds exactly
/// labels_per_client distinct labels with samples_per_label samples each;
/// the index sets are pairwise disjoint.
struct PartitionPlan {
    std::vector<std::vector<size_t>> client_samples;
    size_t labels_per_client = 0;
    size_t samples_per_label = 0;

    size_t num_clients() const { return client_samples.size(); }
    size_t samples_per_client() const { return labels_per_client * samples_per_label; }
};

/// One mini-batch of features plus labels.
struct Batch {
    Tensor2D features{0, 0};
    std::vector<int> labels;

    size_t rows() const { return features.rows; }
};

/// Class-conditional Gaussian blobs around fixed per-class centroids,
/// clipped to [0, 1]. Labels are balanced (n / num_classes each) and
/// interleaved; everything is deterministic in the seed.
Dataset generate_synthetic(uint64_t seed, size_t n, size_t d, size_t num_classes);

/// Loads an IDX image/label file pair (the MNIST container format) and
/// scales pixel bytes to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Assigns each client labels_per_client labels by round-robin over the
/// classes, then deals samples_per_label samples per (client, label) slot
/// from per-label pools shuffled with the seed. Samples the plan does not
/// claim stay unused.
PartitionPlan partition_noniid(const Dataset& ds, size_t num_clients, size_t labels_per_client,
                               size_t samples_per_label, uint64_t seed);

/// The client's sample indices reshuffled for one epoch, keyed by
/// (seed, client_id, epoch).
std::vector<size_t> epoch_order(const PartitionPlan& plan, size_t client_id, uint64_t seed,
                                size_t epoch);

/// Copies rows order[start, start+rows) out of the dataset.
Batch extract_batch(const Dataset& ds, const std::vector<size_t>& order, size_t start,
                    size_t rows);

/// One epoch of mini-batches for a client: the epoch_order permutation
/// chunked at batch_size, final short batch kept.
std::vector<Batch> batches(const Dataset& ds, const PartitionPlan& plan, size_t client_id,
                           size_t batch_size, uint64_t seed, size_t epoch);

}  // namespace hiersfl
