#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedalign/federation.hpp"

namespace fedalign {

enum class DataSource { Blobs, Csv };

// ---------------------------------------------------------------------------
// Declarative run description, loaded from a JSON file.  The file is the
// source of truth; the only ambient overrides are FEDALIGN_SEED and
// FEDALIGN_OUTPUT_DIR, plus explicit --set entries from the command line.
// Unknown keys anywhere in the file are rejected with their dotted path.
// ---------------------------------------------------------------------------
struct DataConfig {
    DataSource source = DataSource::Blobs;
    int classes = 5;
    int dim = 20;
    int train_per_class = 200;
    int eval_per_class = 50;
    double spread = 1.0;
    std::string train_csv;  // csv source only
    std::string eval_csv;   // csv source only
};

struct PartitionConfig {
    int clients = 10;
    double beta = 0.3;
};

struct MetricsConfig {
    bool trace_mode = false;
    bool representation = false;
    bool assumptions = false;
    int assumption_batch_size = 64;
    int assumption_batches = 4;
};

struct CompareConfig {
    std::vector<std::uint64_t> seeds;  // empty: use the run seed alone
    bool ablations = false;            // add the random-feedback and no-rescale arms
    int drift_window_start = 10;       // first round counted in drift means
    int tail_rounds = 10;              // final rounds averaged for accuracy
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "runs/out";
    int workers = 1;
    DataConfig data;
    PartitionConfig partition;
    TrainConfig train;  // hidden/activation/seed/workers/metric toggles filled in
    MetricsConfig metrics;
    CompareConfig compare;

    void validate() const;  // throws std::invalid_argument naming the field
};

// Parses a config from JSON text.  Strict: unknown keys, wrong types, and
// out-of-range values all throw std::invalid_argument with the dotted path.
RunConfig parse_run_config(const std::string& json_text);

// Reads the file, applies the FEDALIGN_SEED and FEDALIGN_OUTPUT_DIR
// environment variables, then --set overrides (dotted path = JSON value,
// e.g. "train.rounds=3" or "data.source=csv"), then parses strictly.
// Override precedence: file < environment < --set.  An empty path starts
// from the built-in defaults instead of a file.
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides = {});

// Builds the datasets and shards the config describes.
Dataset make_train_dataset(const RunConfig& cfg);
Dataset make_eval_dataset(const RunConfig& cfg);
std::vector<ClientShard> make_shards(const RunConfig& cfg, const Dataset& train);

// Round-trips a config back to canonical JSON (used by the run manifest).
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace fedalign
