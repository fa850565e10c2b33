#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedalign/matrix.hpp"

namespace fedalign {

// ---------------------------------------------------------------------------
// A labeled dataset: features holds one sample per column (dim x n), labels
// are 0-based class ids, class_count is the number of classes C.
// ---------------------------------------------------------------------------
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    int class_count = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.rows(); }
};

// One client's slice of a dataset: indices into the dataset plus a per-class
// sample histogram.  A partition's shards are disjoint and cover the dataset.
struct ClientShard {
    int client_id = 0;
    std::vector<std::size_t> indices;
    std::vector<std::size_t> class_histogram;

    std::size_t sample_count() const { return indices.size(); }
};

struct PartitionSpec {
    int clients = 1;
    double beta = 1.0;   // Dirichlet concentration; smaller = more skew
    std::uint64_t seed = 0;
};

// Class centroids on the unit sphere: orthogonal axes e_c when dim >= classes,
// otherwise deterministic unit directions.  Centroids depend only on
// (classes, dim) -- never on a dataset seed -- so train and evaluation splits
// drawn with different seeds share the same geometry.
Matrix class_centroids(int classes, int dim);

// Gaussian blobs: per_class samples per class at centroid_c + spread * N(0, I).
// Deterministic per seed; samples are ordered class by class.
Dataset gen_blobs(int classes, int dim, int per_class, double spread, std::uint64_t seed);

// Label-skewed partition: for each class, client proportions are drawn from
// Dirichlet(beta * 1_N) (normalized Gamma(beta, 1) draws) and converted to
// exact counts by largest-remainder rounding, so the shards are always an
// exact partition of the dataset.  A client may end up with zero samples;
// see partition_dirichlet_nonempty for a re-drawing wrapper.
std::vector<ClientShard> partition_dirichlet(const Dataset& dataset, const PartitionSpec& spec);

bool has_empty_shard(const std::vector<ClientShard>& shards);

// Re-draws with follow-up seeds until no shard is empty (at most max_attempts
// draws); throws if every attempt leaves some client empty.
std::vector<ClientShard> partition_dirichlet_nonempty(const Dataset& dataset,
                                                      const PartitionSpec& spec,
                                                      int max_attempts = 100);

// A materialized mini-batch; indices point back into the source dataset.
struct Batch {
    Matrix features;
    std::vector<int> labels;
    std::vector<std::size_t> indices;
};

// One epoch of mini-batches over a shard: a fresh shuffle per epoch_seed,
// every index appearing exactly once, the final partial batch included.
std::vector<Batch> batches(const Dataset& dataset, const ClientShard& shard,
                           int batch_size, std::uint64_t epoch_seed);

// Header-less CSV rows of the form  label,f1,...,fd.  The class count is
// max(label) + 1.  Throws std::runtime_error with a line number on malformed
// rows.
Dataset load_csv(const std::string& path);

// JSON object mapping client id to its sorted sample indices.
std::string partition_to_json(const std::vector<ClientShard>& shards);

// Mean per-client label-distribution entropy (nats) -- the skew diagnostic:
// lower entropy means more skewed shards.  Empty shards are skipped.
double mean_label_entropy(const std::vector<ClientShard>& shards);

}  // namespace fedalign
