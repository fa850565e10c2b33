#include "fedalign/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace fedalign {

void TrainConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("TrainConfig: " + field + " " + why);
    };
    if (rounds < 1) fail("rounds", "must be >= 1");
    if (local_epochs < 1) fail("local_epochs", "must be >= 1");
    if (batch_size < 1) fail("batch_size", "must be >= 1");
    if (max_batches_per_epoch < 0) fail("max_batches_per_epoch", "must be >= 0");
    if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
    if (momentum < 0.0 || momentum >= 1.0) fail("momentum", "must lie in [0, 1)");
    if (weight_decay < 0.0) fail("weight_decay", "must be non-negative");
    if (!(lr_decay > 0.0) || lr_decay > 1.0) fail("lr_decay", "must lie in (0, 1]");
    if (!(client_fraction > 0.0) || client_fraction > 1.0) {
        fail("client_fraction", "must lie in (0, 1]");
    }
    if (prox_mu < 0.0) fail("prox_mu", "must be non-negative");
    if (server_momentum < 0.0 || server_momentum >= 1.0) {
        fail("server_momentum", "must lie in [0, 1)");
    }
    if (layer_strategy == LayerStrategy::Fixed && fixed_layer < 1) {
        fail("fixed_layer", "must be >= 1");
    }
    if (fa_layer_count < 1) fail("fa_layer_count", "must be >= 1");
    for (std::size_t h : hidden) {
        if (h == 0) fail("hidden", "widths must be positive");
    }
    if (workers < 0) fail("workers", "must be >= 0");
}

std::vector<int> select_clients(int n_clients, double fraction, Rng& rng) {
    if (n_clients < 1) {
        throw std::invalid_argument("select_clients: n_clients must be >= 1");
    }
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw std::invalid_argument("select_clients: fraction must lie in (0, 1]");
    }
    const int k = std::max(1, static_cast<int>(std::lround(fraction * n_clients)));
    std::vector<int> ids(static_cast<std::size_t>(n_clients));
    for (int i = 0; i < n_clients; ++i) ids[static_cast<std::size_t>(i)] = i;
    // Partial Fisher-Yates: after k swaps the first k entries are a uniform
    // sample without replacement.
    for (int i = 0; i < k; ++i) {
        const std::size_t j = static_cast<std::size_t>(i) +
                              static_cast<std::size_t>(rng.below(
                                  static_cast<std::uint64_t>(n_clients - i)));
        std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
    }
    ids.resize(static_cast<std::size_t>(k));
    std::sort(ids.begin(), ids.end());
    return ids;
}

MlpModel aggregate(const std::vector<MlpModel>& models, const std::vector<double>& sizes) {
    if (models.empty()) {
        throw std::invalid_argument("aggregate: need at least one model");
    }
    if (models.size() != sizes.size()) {
        throw std::invalid_argument("aggregate: got " + std::to_string(models.size()) +
                                    " models and " + std::to_string(sizes.size()) + " sizes");
    }
    double total = 0.0;
    for (double s : sizes) {
        if (!(s > 0.0)) {
            throw std::invalid_argument("aggregate: sizes must be positive");
        }
        total += s;
    }
    const MlpModel& first = models.front();
    const std::size_t L = first.layer_count();
    for (const MlpModel& m : models) {
        if (m.layer_count() != L) {
            throw std::invalid_argument("aggregate: models disagree on layer count");
        }
        for (std::size_t l = 0; l < L; ++l) {
            if (!m.layers[l].weight.same_shape(first.layers[l].weight)) {
                throw ShapeError("aggregate: layer " + std::to_string(l + 1),
                                 m.layers[l].weight.rows(), m.layers[l].weight.cols(),
                                 first.layers[l].weight.rows(), first.layers[l].weight.cols());
            }
        }
    }

    MlpModel out = first;
    for (std::size_t l = 0; l < L; ++l) {
        Matrix& w = out.layers[l].weight;
        Matrix& b = out.layers[l].bias;
        std::fill(w.values().begin(), w.values().end(), 0.0);
        std::fill(b.values().begin(), b.values().end(), 0.0);
        for (std::size_t i = 0; i < models.size(); ++i) {
            const double pi = sizes[i] / total;
            const Matrix& wi = models[i].layers[l].weight;
            const Matrix& bi = models[i].layers[l].bias;
            for (std::size_t k = 0; k < w.size(); ++k) w.values()[k] += pi * wi.values()[k];
            for (std::size_t k = 0; k < b.size(); ++k) b.values()[k] += pi * bi.values()[k];
        }
    }
    return out;
}

MlpModel server_momentum_step(const MlpModel& previous, const MlpModel& aggregated,
                              std::vector<Matrix>& buffer, double coeff) {
    previous.validate();
    const std::size_t L = previous.layer_count();
    if (aggregated.layer_count() != L) {
        throw std::invalid_argument("server_momentum_step: models disagree on layer count");
    }
    // Buffer layout: [w1, b1, w2, b2, ...].
    if (buffer.empty()) {
        for (const DenseLayer& layer : previous.layers) {
            buffer.emplace_back(layer.weight.rows(), layer.weight.cols());
            buffer.emplace_back(layer.bias.rows(), 1);
        }
    }
    if (buffer.size() != 2 * L) {
        throw std::invalid_argument("server_momentum_step: buffer does not match the model");
    }

    MlpModel out = previous;
    for (std::size_t l = 0; l < L; ++l) {
        auto update = [&](Matrix& buf, const Matrix& prev, const Matrix& agg, Matrix& dst) {
            if (!buf.same_shape(prev)) {
                throw ShapeError("server_momentum_step: buffer", buf.rows(), buf.cols(),
                                 prev.rows(), prev.cols());
            }
            for (std::size_t k = 0; k < buf.size(); ++k) {
                buf.values()[k] = coeff * buf.values()[k] +
                                  (prev.values()[k] - agg.values()[k]);
                dst.values()[k] = prev.values()[k] - buf.values()[k];
            }
        };
        update(buffer[2 * l], previous.layers[l].weight, aggregated.layers[l].weight,
               out.layers[l].weight);
        update(buffer[2 * l + 1], previous.layers[l].bias, aggregated.layers[l].bias,
               out.layers[l].bias);
    }
    return out;
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

std::vector<std::optional<double>> cosine_alignment(
    const std::vector<std::vector<std::vector<double>>>& client_layer_updates) {
    constexpr double kDegenerate = 1e-12;
    if (client_layer_updates.empty()) return {};
    const std::size_t K = client_layer_updates.size();
    const std::size_t L = client_layer_updates.front().size();
    for (const auto& client : client_layer_updates) {
        if (client.size() != L) {
            throw std::invalid_argument("cosine_alignment: clients disagree on layer count");
        }
    }

    std::vector<std::optional<double>> alignment(L);
    for (std::size_t l = 0; l < L; ++l) {
        const std::size_t n = client_layer_updates.front()[l].size();
        std::vector<double> mean(n, 0.0);
        for (const auto& client : client_layer_updates) {
            if (client[l].size() != n) {
                throw std::invalid_argument("cosine_alignment: layer " + std::to_string(l + 1) +
                                            " updates disagree in length");
            }
            for (std::size_t k = 0; k < n; ++k) mean[k] += client[l][k];
        }
        for (double& v : mean) v /= static_cast<double>(K);

        const double mean_norm = norm(mean);
        if (mean_norm < kDegenerate) continue;  // undefined
        bool ok = true;
        double acc = 0.0;
        for (const auto& client : client_layer_updates) {
            const double client_norm = norm(client[l]);
            if (client_norm < kDegenerate) {
                ok = false;
                break;
            }
            acc += dot(client[l], mean) / (client_norm * mean_norm);
        }
        if (ok) alignment[l] = acc / static_cast<double>(K);
    }
    return alignment;
}

std::set<int> select_fa_layers(const std::vector<std::optional<double>>& alignment,
                               LayerStrategy strategy, int fixed_layer, int count) {
    std::set<int> selected;
    switch (strategy) {
        case LayerStrategy::None:
            return selected;
        case LayerStrategy::Fixed:
            selected.insert(fixed_layer);
            return selected;
        case LayerStrategy::Lowest:
        case LayerStrategy::Highest:
            break;
    }
    std::vector<std::pair<double, int>> defined;  // (z, 1-based layer)
    for (std::size_t l = 0; l < alignment.size(); ++l) {
        if (alignment[l].has_value()) {
            defined.emplace_back(*alignment[l], static_cast<int>(l + 1));
        }
    }
    if (defined.empty()) return selected;  // all undefined: caller logs and skips
    const bool lowest = strategy == LayerStrategy::Lowest;
    std::stable_sort(defined.begin(), defined.end(), [lowest](const auto& a, const auto& b) {
        if (a.first != b.first) return lowest ? a.first < b.first : a.first > b.first;
        return a.second < b.second;  // ties toward the smaller layer index
    });
    const std::size_t take = std::min(defined.size(), static_cast<std::size_t>(count));
    for (std::size_t k = 0; k < take; ++k) selected.insert(defined[k].second);
    return selected;
}

namespace {

double l2_difference(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

LocalOutcome local_train(const Dataset& dataset, const ClientShard& shard,
                         const MlpModel& global, const TrainConfig& cfg,
                         const std::set<int>& fa_layers, double eta,
                         std::uint64_t client_seed,
                         const std::vector<Matrix>* feedback_bank) {
    LocalOutcome outcome;
    outcome.model = global;

    const bool use_feedback = cfg.backward == BackwardKind::FeedbackAlign && !fa_layers.empty();
    FeedbackSet fb;
    if (use_feedback) {
        fb = init_feedback(global, fa_layers, cfg.feedback_mode, nullptr, feedback_bank);
    }

    OptimizerState opt;
    opt.learning_rate = eta;
    opt.momentum = cfg.momentum;
    opt.weight_decay = cfg.weight_decay;

    const std::size_t L = global.layer_count();
    if (cfg.trace_mode) {
        ClientTrace trace;
        trace.client_id = shard.client_id;
        trace.eta = eta;
        trace.mode = cfg.feedback_mode;
        trace.fa_layers = use_feedback ? fa_layers : std::set<int>{};
        for (const DenseLayer& layer : global.layers) {
            trace.global_reference.push_back(layer.weight);
            trace.start_weights.push_back(layer.weight);
        }
        outcome.trace = std::move(trace);
    }

    Rng rng(client_seed);
    bool first_step = true;
    std::vector<Matrix> deltas;

    for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        std::vector<Batch> epoch_batches = batches(dataset, shard, cfg.batch_size, rng.next());
        if (cfg.max_batches_per_epoch > 0 &&
            epoch_batches.size() > static_cast<std::size_t>(cfg.max_batches_per_epoch)) {
            epoch_batches.resize(static_cast<std::size_t>(cfg.max_batches_per_epoch));
        }
        for (const Batch& batch : epoch_batches) {
            const ForwardTrace ftrace = forward(outcome.model, batch.features);
            const CrossEntropyResult ce = cross_entropy(ftrace.output, batch.labels);

            std::vector<Matrix>* capture = cfg.trace_mode ? &deltas : nullptr;
            GradSet grads = use_feedback
                                ? backward_fa(outcome.model, fb, ftrace, ce.dlogits, capture)
                                : backward_bp(outcome.model, ftrace, ce.dlogits, capture);

            // Round-start feedback gradient gap (Assumption-4 sample): the
            // distance between the feedback-aligned gradient and the true
            // gradient on the first local batch.
            if (first_step && use_feedback) {
                const GradSet reference = backward_bp(outcome.model, ftrace, ce.dlogits);
                outcome.g_round_start = l2_difference(flatten(grads), flatten(reference));
            }

            if (cfg.trace_mode) {
                StepTrace step;
                step.layers.resize(L);
                for (std::size_t l = 0; l < L; ++l) {
                    LayerStepTrace& lt = step.layers[l];
                    lt.input = ftrace.inputs[l];
                    lt.fprime = activate_derivative(ftrace.preacts[l],
                                                    outcome.model.layers[l].activation);
                    lt.delta = deltas[l];
                    lt.weight = outcome.model.layers[l].weight;
                    const int layer_index = static_cast<int>(l + 1);
                    if (use_feedback && fb.has(layer_index)) {
                        lt.feedback = fb.feedback_for(layer_index);
                    }
                }
                outcome.trace->steps.push_back(std::move(step));
            }

            // FedProx: pull every parameter gradient toward the round-start
            // global model before the step.
            if (cfg.algorithm == Algorithm::FedProx && cfg.prox_mu != 0.0) {
                for (std::size_t l = 0; l < L; ++l) {
                    grads.weights[l] = axpy(cfg.prox_mu,
                                            sub(outcome.model.layers[l].weight,
                                                global.layers[l].weight),
                                            grads.weights[l]);
                    grads.biases[l] = axpy(cfg.prox_mu,
                                           sub(outcome.model.layers[l].bias,
                                               global.layers[l].bias),
                                           grads.biases[l]);
                }
            }

            sgd_step(outcome.model, grads, opt);
            if (use_feedback) rescale_feedback(fb, outcome.model);

            if (cfg.trace_mode) {
                StepTrace& step = outcome.trace->steps.back();
                for (std::size_t l = 0; l < L; ++l) {
                    step.layers[l].weight_post = outcome.model.layers[l].weight;
                    const int layer_index = static_cast<int>(l + 1);
                    if (use_feedback && fb.has(layer_index)) {
                        step.layers[l].feedback_post = fb.feedback_for(layer_index);
                    }
                }
            }
            first_step = false;
        }
    }

    if (cfg.trace_mode) {
        for (const DenseLayer& layer : outcome.model.layers) {
            outcome.trace->final_weights.push_back(layer.weight);
        }
    }
    outcome.warnings = fb.warnings;
    return outcome;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads.  Results must be
// written to pre-sized slots; the first exception is rethrown on the caller.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    const std::size_t pool = std::min(n, workers <= 0 ? hw : static_cast<std::size_t>(workers));
    if (pool <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    threads.reserve(pool);
    for (std::size_t t = 0; t < pool; ++t) {
        threads.emplace_back([&]() {
            for (;;) {
                const std::size_t i = cursor.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (std::thread& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

RunResult run_training(const TrainConfig& cfg, const Dataset& train, const Dataset& eval,
                       const std::vector<ClientShard>& shards) {
    cfg.validate();
    if (train.size() == 0 || eval.size() == 0) {
        throw std::invalid_argument("run_training: train and eval datasets must be non-empty");
    }
    if (train.dim() != eval.dim() || train.class_count != eval.class_count) {
        throw std::invalid_argument("run_training: train/eval datasets disagree on shape");
    }
    if (shards.empty()) {
        throw std::invalid_argument("run_training: need at least one client shard");
    }

    std::vector<std::size_t> dims;
    dims.push_back(train.dim());
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(static_cast<std::size_t>(train.class_count));

    Rng init_rng(mix_seed(cfg.seed, kInitStream));
    MlpModel global = make_mlp(dims, cfg.activation, init_rng);
    const std::size_t L = global.layer_count();

    if (cfg.layer_strategy == LayerStrategy::Fixed &&
        static_cast<std::size_t>(cfg.fixed_layer) > L) {
        throw std::invalid_argument("TrainConfig: fixed_layer " +
                                    std::to_string(cfg.fixed_layer) +
                                    " exceeds the model's " + std::to_string(L) + " layers");
    }

    // RandomFixed feedback matrices are sampled once per run and shared by
    // every client in every round.
    std::vector<Matrix> feedback_bank;
    const bool uses_bank = cfg.backward == BackwardKind::FeedbackAlign &&
                           cfg.feedback_mode == FeedbackMode::RandomFixed;
    if (uses_bank) {
        Rng fb_rng(mix_seed(cfg.seed, kFeedbackStream));
        feedback_bank = sample_feedback_bank(global, fb_rng);
    }

    RunResult result;
    {
        const EvalResult tr = evaluate(global, train.features, train.labels);
        const EvalResult ev = evaluate(global, eval.features, eval.labels);
        result.initial_train_loss = tr.loss;
        result.initial_eval_loss = ev.loss;
        result.initial_eval_accuracy = ev.accuracy;
    }

    std::vector<Matrix> server_buffer;
    double eta = cfg.learning_rate;

    // Round 0 warm-up: alignment-driven strategies need one round of updates
    // before they can pick a layer, so they start with the empty set.
    std::set<int> fa_layers;
    if (cfg.layer_strategy == LayerStrategy::Fixed) fa_layers.insert(cfg.fixed_layer);

    for (int round = 0; round < cfg.rounds; ++round) {
        Rng select_rng(mix_seed(mix_seed(cfg.seed, kSelectStream),
                                static_cast<std::uint64_t>(round)));
        const std::vector<int> selected =
            select_clients(static_cast<int>(shards.size()), cfg.client_fraction, select_rng);

        std::vector<LocalOutcome> outcomes(selected.size());
        parallel_for(selected.size(), cfg.workers, [&](std::size_t i) {
            const int client_id = selected[i];
            const std::uint64_t client_seed =
                mix_seed(mix_seed(mix_seed(cfg.seed, kClientStream),
                                  static_cast<std::uint64_t>(round)),
                         static_cast<std::uint64_t>(client_id));
            outcomes[i] = local_train(train, shards[static_cast<std::size_t>(client_id)],
                                      global, cfg, fa_layers, eta, client_seed,
                                      uses_bank ? &feedback_bank : nullptr);
        });

        RoundRecord record;
        record.round = round;
        record.selected_clients = selected;
        // Only layers the backward pass actually used count as feedback layers.
        if (cfg.backward == BackwardKind::FeedbackAlign) {
            record.fa_layers.assign(fa_layers.begin(), fa_layers.end());
        }

        // Flattened per-layer updates against the round-start global model.
        for (const LocalOutcome& outcome : outcomes) {
            std::vector<std::vector<double>> layers_flat;
            layers_flat.reserve(L);
            for (std::size_t l = 0; l < L; ++l) {
                std::vector<double> local_flat = flatten_layer(outcome.model.layers[l]);
                const std::vector<double> global_flat = flatten_layer(global.layers[l]);
                for (std::size_t k = 0; k < local_flat.size(); ++k) {
                    local_flat[k] -= global_flat[k];
                }
                layers_flat.push_back(std::move(local_flat));
            }
            record.client_layer_updates.push_back(std::move(layers_flat));
        }

        // Aggregation, weighted by shard size; clients with empty shards did
        // not move and carry no weight.
        std::vector<MlpModel> models;
        std::vector<double> sizes;
        for (std::size_t i = 0; i < outcomes.size(); ++i) {
            const std::size_t size = shards[static_cast<std::size_t>(selected[i])].sample_count();
            if (size == 0) continue;
            models.push_back(outcomes[i].model);
            sizes.push_back(static_cast<double>(size));
        }
        MlpModel next_global =
            models.empty() ? global : aggregate(models, sizes);
        if (cfg.algorithm == Algorithm::FedAvgM) {
            next_global = server_momentum_step(global, next_global, server_buffer,
                                               cfg.server_momentum);
        }

        record.alignment = cosine_alignment(record.client_layer_updates);

        std::vector<std::vector<double>> full_updates;
        full_updates.reserve(record.client_layer_updates.size());
        for (const auto& layers_flat : record.client_layer_updates) {
            std::vector<double> flat;
            for (const auto& layer_flat : layers_flat) {
                flat.insert(flat.end(), layer_flat.begin(), layer_flat.end());
            }
            full_updates.push_back(std::move(flat));
        }
        record.drift = local_drift(full_updates);

        for (const LocalOutcome& outcome : outcomes) {
            record.g_round_start = std::max(record.g_round_start, outcome.g_round_start);
            for (const std::string& w : outcome.warnings) {
                if (result.warnings.size() < 100) result.warnings.push_back(w);
            }
        }

        {
            const EvalResult tr = evaluate(next_global, train.features, train.labels);
            const EvalResult ev = evaluate(next_global, eval.features, eval.labels);
            record.train_loss = tr.loss;
            record.eval_loss = ev.loss;
            record.eval_accuracy = ev.accuracy;
        }

        if (cfg.record_representation && L >= 1) {
            const ForwardTrace trace = forward(next_global, eval.features);
            record.representation = representation_metrics(trace.inputs[L - 1], eval.labels);
        }

        if (cfg.trace_mode) {
            std::vector<ClientTrace> round_traces;
            for (LocalOutcome& outcome : outcomes) {
                if (outcome.trace.has_value()) round_traces.push_back(std::move(*outcome.trace));
            }
            result.traces.push_back(std::move(round_traces));
        }

        // Next round's feedback layers from this round's alignment profile.
        if (cfg.backward == BackwardKind::FeedbackAlign &&
            (cfg.layer_strategy == LayerStrategy::Lowest ||
             cfg.layer_strategy == LayerStrategy::Highest)) {
            fa_layers = select_fa_layers(record.alignment, cfg.layer_strategy,
                                         cfg.fixed_layer, cfg.fa_layer_count);
            if (fa_layers.empty() && result.warnings.size() < 100) {
                result.warnings.push_back("round " + std::to_string(round) +
                                          ": every layer's alignment was undefined; "
                                          "next round runs without feedback layers");
            }
        }

        result.records.push_back(std::move(record));
        global = std::move(next_global);
        eta *= cfg.lr_decay;
    }

    result.final_model = std::move(global);
    return result;
}

}  // namespace fedalign
