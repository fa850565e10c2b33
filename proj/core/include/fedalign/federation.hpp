#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedalign/data.hpp"
#include "fedalign/feedback.hpp"
#include "fedalign/metrics.hpp"
#include "fedalign/nn.hpp"
#include "fedalign/trace.hpp"

namespace fedalign {

enum class BackwardKind { Backprop, FeedbackAlign };
enum class Algorithm { FedAvg, FedProx, FedAvgM };
enum class LayerStrategy { Lowest, Highest, Fixed, None };

// ---------------------------------------------------------------------------
// Full description of a federated training run.  Defaults mirror the usual
// experiment settings; validate() throws std::invalid_argument naming the
// offending field.
// ---------------------------------------------------------------------------
struct TrainConfig {
    int rounds = 1;
    int local_epochs = 1;
    int batch_size = 64;
    // Cap on batches per local epoch (0 = no cap).  Used by trace-mode runs
    // to pin the local step count even when shard sizes differ.
    int max_batches_per_epoch = 0;

    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.001;
    double lr_decay = 0.998;  // multiplicative, applied once per round
    double client_fraction = 1.0;

    BackwardKind backward = BackwardKind::Backprop;
    FeedbackMode feedback_mode = FeedbackMode::GlobalWeights;

    Algorithm algorithm = Algorithm::FedAvg;
    double prox_mu = 0.0;          // FedProx proximal coefficient
    double server_momentum = 0.0;  // FedAvgM server buffer coefficient

    LayerStrategy layer_strategy = LayerStrategy::None;
    int fixed_layer = 1;      // used by LayerStrategy::Fixed (1-based)
    int fa_layer_count = 1;   // how many extreme layers Lowest/Highest select

    std::vector<std::size_t> hidden;  // hidden layer widths
    ActivationKind activation = ActivationKind::ReLU;

    std::uint64_t seed = 0;
    int workers = 1;  // parallel local training; 0 = hardware concurrency

    bool trace_mode = false;
    bool record_representation = false;

    void validate() const;
};

// ---------------------------------------------------------------------------
// Everything recorded about one round: the selected clients, their flattened
// per-layer updates (weight entries then bias entries), the drift statistic,
// per-layer update alignment z_l (nullopt where undefined), the feedback
// layers applied during the round, global train/eval metrics of the
// post-aggregation model, and the round-start feedback gradient gap.
// ---------------------------------------------------------------------------
struct RoundRecord {
    int round = 0;
    std::vector<int> selected_clients;
    std::vector<std::vector<std::vector<double>>> client_layer_updates;
    double drift = 0.0;
    std::vector<std::optional<double>> alignment;
    std::vector<int> fa_layers;
    double train_loss = 0.0;
    double eval_loss = 0.0;
    double eval_accuracy = 0.0;
    // max over clients of || grad_fa - grad_bp ||_2 on the first local batch;
    // exactly 0 when no feedback layer is active.
    double g_round_start = 0.0;
    std::optional<RepresentationMetrics> representation;
};

struct RunResult {
    double initial_train_loss = 0.0;
    double initial_eval_loss = 0.0;
    double initial_eval_accuracy = 0.0;
    std::vector<RoundRecord> records;
    MlpModel final_model;
    std::vector<std::vector<ClientTrace>> traces;  // [round][selected client], trace mode only
    std::vector<std::string> warnings;
};

// --- building blocks ---------------------------------------------------------

// Uniform sample without replacement of max(1, round(fraction * n)) client
// ids, returned sorted ascending.
std::vector<int> select_clients(int n_clients, double fraction, Rng& rng);

// Weighted average with weights proportional to the given sizes (all positive).
MlpModel aggregate(const std::vector<MlpModel>& models, const std::vector<double>& sizes);

// Server-side momentum:  buffer <- coeff * buffer + (previous - aggregated);
// returns previous - buffer.  The buffer must match the model's shapes (an
// empty buffer is initialized to zeros).
MlpModel server_momentum_step(const MlpModel& previous, const MlpModel& aggregated,
                              std::vector<Matrix>& buffer, double coeff);

// Per-layer update alignment  z_l = (1/K) sum_i cos(g_i^l, mean_g^l).
// A layer reports nullopt when the mean update or any client update has
// Euclidean norm below 1e-12.
std::vector<std::optional<double>> cosine_alignment(
    const std::vector<std::vector<std::vector<double>>>& client_layer_updates);

// Chooses the feedback layers for the next round from the alignment profile.
// Lowest/Highest take the `count` smallest/largest defined entries (ties
// break toward the smaller layer index); Fixed returns {fixed_layer}; None
// and an all-undefined profile return the empty set.
std::set<int> select_fa_layers(const std::vector<std::optional<double>>& alignment,
                               LayerStrategy strategy, int fixed_layer, int count);

// One client's local training pass: copies the global model, runs
// local_epochs of mini-batch SGD (feedback-aligned backward on fa_layers when
// configured, proximal gradient correction under FedProx), rescaling the
// feedback matrices after every step in GlobalWeights mode.
struct LocalOutcome {
    MlpModel model;
    double g_round_start = 0.0;
    std::optional<ClientTrace> trace;
    std::vector<std::string> warnings;
};
LocalOutcome local_train(const Dataset& dataset, const ClientShard& shard,
                         const MlpModel& global, const TrainConfig& cfg,
                         const std::set<int>& fa_layers, double eta,
                         std::uint64_t client_seed,
                         const std::vector<Matrix>* feedback_bank);

// The full federated loop.  Round 0 always runs with an empty feedback set
// under Lowest/Highest (alignment needs one round of updates to exist);
// Fixed applies its layer from round 0.  Deterministic per cfg.seed: client
// work is seeded per (run, round, client) and may execute on a worker pool
// without changing results.
RunResult run_training(const TrainConfig& cfg, const Dataset& train, const Dataset& eval,
                       const std::vector<ClientShard>& shards);

}  // namespace fedalign
