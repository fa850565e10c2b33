#include "fedalign/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fedalign/metrics.hpp"
#include "fedalign/model_io.hpp"

namespace fedalign {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Shortest exact decimal form; %.17g round-trips IEEE doubles.
std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Collects the files a command writes so a failure can remove the partial set.
class ArtifactSet {
public:
    explicit ArtifactSet(const fs::path& dir) : dir_(dir) { fs::create_directories(dir_); }

    void write(const std::string& name, const std::string& content) {
        const fs::path path = dir_ / name;
        const fs::path tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
            out << content;
            out.flush();
            if (!out) throw std::runtime_error("failed to write " + tmp.string());
        }
        fs::rename(tmp, path);
        names_.push_back(name);
    }

    void discard_all() noexcept {
        for (const std::string& name : names_) {
            std::error_code ec;
            fs::remove(dir_ / name, ec);
            fs::remove(dir_ / (name + ".tmp"), ec);
        }
        names_.clear();
    }

    const std::vector<std::string>& names() const { return names_; }
    const fs::path& dir() const { return dir_; }

private:
    fs::path dir_;
    std::vector<std::string> names_;
};

// The training loop owns seed/workers/metric toggles; re-plumb them here so
// hand-built RunConfigs behave the same as parsed ones.
TrainConfig effective_train_config(const RunConfig& cfg) {
    TrainConfig t = cfg.train;
    t.seed = cfg.seed;
    t.workers = cfg.workers;
    t.trace_mode = cfg.metrics.trace_mode;
    t.record_representation = cfg.metrics.representation;
    return t;
}

json round_to_json(const RoundRecord& rec) {
    json j;
    j["round"] = rec.round;
    j["selected_clients"] = rec.selected_clients;
    j["fa_layers"] = rec.fa_layers;
    j["drift"] = rec.drift;
    json alignment = json::array();
    for (const std::optional<double>& a : rec.alignment) {
        if (a.has_value()) {
            alignment.push_back(*a);
        } else {
            alignment.push_back(nullptr);
        }
    }
    j["alignment"] = alignment;
    j["train_loss"] = rec.train_loss;
    j["eval_loss"] = rec.eval_loss;
    j["eval_accuracy"] = rec.eval_accuracy;
    j["g_round_start"] = rec.g_round_start;
    if (rec.representation.has_value()) {
        j["representation"] = {{"intra", rec.representation->intra},
                               {"inter", rec.representation->inter},
                               {"separability", rec.representation->separability}};
    }
    return j;
}

std::string rounds_jsonl(const RunResult& result) {
    std::string out;
    for (const RoundRecord& rec : result.records) {
        out += round_to_json(rec).dump();
        out += '\n';
    }
    return out;
}

std::string metrics_csv(const RunResult& result, bool representation) {
    const std::size_t layers =
        result.records.empty() ? 0 : result.records.front().alignment.size();
    std::string out = "round,train_loss,eval_loss,eval_accuracy,drift,g_round_start";
    for (std::size_t l = 1; l <= layers; ++l) out += ",alignment_" + std::to_string(l);
    if (representation) out += ",intra,inter,separability";
    out += '\n';

    for (const RoundRecord& rec : result.records) {
        out += std::to_string(rec.round);
        out += ',' + fmt(rec.train_loss);
        out += ',' + fmt(rec.eval_loss);
        out += ',' + fmt(rec.eval_accuracy);
        out += ',' + fmt(rec.drift);
        out += ',' + fmt(rec.g_round_start);
        for (const std::optional<double>& a : rec.alignment) {
            out += ',';
            if (a.has_value()) out += fmt(*a);
        }
        if (representation) {
            if (rec.representation.has_value()) {
                out += ',' + fmt(rec.representation->intra);
                out += ',' + fmt(rec.representation->inter);
                out += ',' + fmt(rec.representation->separability);
            } else {
                out += ",,,";
            }
        }
        out += '\n';
    }
    return out;
}

json manifest_base(const char* command, const RunConfig& cfg, const std::string& started,
                   const ArtifactSet& artifacts) {
    json m;
    m["command"] = command;
    m["run_id"] = fnv1a_hex(std::string(command) + ":" + run_config_to_json(cfg));
    m["seed"] = cfg.seed;
    m["started_utc"] = started;
    m["finished_utc"] = utc_now();
    m["config"] = json::parse(run_config_to_json(cfg));
    m["artifacts"] = artifacts.names();
    return m;
}

double mean_from(const std::vector<double>& values, std::size_t begin) {
    if (begin >= values.size()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = begin; i < values.size(); ++i) acc += values[i];
    return acc / static_cast<double>(values.size() - begin);
}

double tail_mean_accuracy(const RunResult& result, int tail_rounds) {
    const std::size_t n = result.records.size();
    const std::size_t take = std::min(n, static_cast<std::size_t>(tail_rounds));
    if (take == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = n - take; i < n; ++i) acc += result.records[i].eval_accuracy;
    return acc / static_cast<double>(take);
}

struct Arm {
    std::string name;
    BackwardKind backward;
    FeedbackMode feedback;
};

std::vector<Arm> compare_arms(bool ablations) {
    std::vector<Arm> arms = {
        {"bp", BackwardKind::Backprop, FeedbackMode::GlobalWeights},
        {"flfa", BackwardKind::FeedbackAlign, FeedbackMode::GlobalWeights},
    };
    if (ablations) {
        arms.push_back({"flfa_random", BackwardKind::FeedbackAlign, FeedbackMode::RandomFixed});
        arms.push_back(
            {"flfa_norescale", BackwardKind::FeedbackAlign, FeedbackMode::GlobalNoRescale});
    }
    return arms;
}

}  // namespace

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const std::string started = utc_now();
    ArtifactSet artifacts{fs::path(cfg.output_dir)};
    try {
        cfg.validate();
        const Dataset train = make_train_dataset(cfg);
        const Dataset eval = make_eval_dataset(cfg);
        const std::vector<ClientShard> shards = make_shards(cfg, train);
        const TrainConfig tc = effective_train_config(cfg);

        out << "train: " << shards.size() << " clients, " << tc.rounds << " rounds, seed "
            << cfg.seed << "\n";
        const RunResult result = run_training(tc, train, eval, shards);

        artifacts.write("rounds.jsonl", rounds_jsonl(result));
        artifacts.write("metrics.csv", metrics_csv(result, tc.record_representation));
        artifacts.write("model.json", model_to_json(result.final_model));

        if (cfg.metrics.assumptions) {
            // Estimated at the final model; the feedback set mirrors the last
            // round's active layers so the gradient-gap estimate reflects the
            // run's own configuration.
            FeedbackSet fb;
            if (tc.backward == BackwardKind::FeedbackAlign && !result.records.empty() &&
                !result.records.back().fa_layers.empty()) {
                std::set<int> layers(result.records.back().fa_layers.begin(),
                                     result.records.back().fa_layers.end());
                Rng fb_rng(mix_seed(cfg.seed, kFeedbackStream));
                std::vector<Matrix> bank;
                if (tc.feedback_mode == FeedbackMode::RandomFixed) {
                    bank = sample_feedback_bank(result.final_model, fb_rng);
                }
                fb = init_feedback(result.final_model, layers, tc.feedback_mode, nullptr,
                                   tc.feedback_mode == FeedbackMode::RandomFixed ? &bank
                                                                                 : nullptr);
            }
            AssumptionOptions options;
            options.batch_size = cfg.metrics.assumption_batch_size;
            options.batches_per_client = cfg.metrics.assumption_batches;
            options.seed = cfg.seed;
            const AssumptionEstimates est =
                estimate_assumptions(result.final_model, train, shards, fb, options);
            json a = {{"g_hat", est.g_hat},
                      {"sigma_hat", est.sigma_hat},
                      {"gamma_hat", est.gamma_hat}};
            artifacts.write("assumptions.json", a.dump(2) + "\n");
        }

        json manifest = manifest_base("train", cfg, started, artifacts);
        manifest["initial"] = {{"train_loss", result.initial_train_loss},
                               {"eval_loss", result.initial_eval_loss},
                               {"eval_accuracy", result.initial_eval_accuracy}};
        if (!result.records.empty()) {
            const RoundRecord& last = result.records.back();
            manifest["final"] = {{"train_loss", last.train_loss},
                                 {"eval_loss", last.eval_loss},
                                 {"eval_accuracy", last.eval_accuracy}};
        }
        manifest["warnings"] = result.warnings;
        manifest["artifacts"] = [&] {
            std::vector<std::string> names = artifacts.names();
            names.push_back("manifest.json");
            return names;
        }();
        artifacts.write("manifest.json", manifest.dump(2) + "\n");

        for (const std::string& w : result.warnings) out << "warning: " << w << "\n";
        if (!result.records.empty()) {
            out << "final eval accuracy " << fmt(result.records.back().eval_accuracy)
                << ", train loss " << fmt(result.records.back().train_loss) << "\n";
        }
        out << "artifacts in " << artifacts.dir().string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        artifacts.discard_all();
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const std::string started = utc_now();
    ArtifactSet artifacts{fs::path(cfg.output_dir)};
    try {
        cfg.validate();
        std::vector<std::uint64_t> seeds = cfg.compare.seeds;
        if (seeds.empty()) seeds.push_back(cfg.seed);
        const std::vector<Arm> arms = compare_arms(cfg.compare.ablations);

        // results[seed index][arm index]
        std::vector<std::vector<RunResult>> results(seeds.size());
        for (std::size_t si = 0; si < seeds.size(); ++si) {
            RunConfig seeded = cfg;
            seeded.seed = seeds[si];
            seeded.metrics.trace_mode = false;  // traces are a boundcheck concern
            const Dataset train = make_train_dataset(seeded);
            const Dataset eval = make_eval_dataset(seeded);
            const std::vector<ClientShard> shards = make_shards(seeded, train);

            for (const Arm& arm : arms) {
                TrainConfig tc = effective_train_config(seeded);
                tc.backward = arm.backward;
                tc.feedback_mode = arm.feedback;
                if (arm.backward == BackwardKind::Backprop) {
                    tc.layer_strategy = LayerStrategy::None;
                }
                out << "compare: seed " << seeds[si] << ", arm " << arm.name << "\n";
                results[si].push_back(run_training(tc, train, eval, shards));
            }
        }

        // compare.csv: one row per (seed, round) with per-arm drift/accuracy
        // and the headline paired columns.
        std::string csv = "seed,round";
        for (const Arm& arm : arms) csv += ",drift_" + arm.name + ",accuracy_" + arm.name;
        csv += ",drift_reduction,accuracy_diff\n";

        json per_seed = json::array();
        int positive_drift_seeds = 0;
        std::vector<double> arm_tail_sums(arms.size(), 0.0);

        for (std::size_t si = 0; si < seeds.size(); ++si) {
            const RunResult& bp = results[si][0];
            const RunResult& flfa = results[si][1];
            const DriftComparison cmp = compare_runs(bp.records, flfa.records);

            for (std::size_t r = 0; r < bp.records.size(); ++r) {
                csv += std::to_string(seeds[si]) + ',' + std::to_string(bp.records[r].round);
                for (std::size_t ai = 0; ai < arms.size(); ++ai) {
                    csv += ',' + fmt(results[si][ai].records[r].drift);
                    csv += ',' + fmt(results[si][ai].records[r].eval_accuracy);
                }
                csv += ',' + fmt(cmp.drift_reduction[r]);
                csv += ',' + fmt(cmp.accuracy_diff[r]);
                csv += '\n';
            }

            const double window_mean = mean_from(
                cmp.drift_reduction, static_cast<std::size_t>(cfg.compare.drift_window_start));
            const int sign = window_mean > 0.0 ? 1 : window_mean < 0.0 ? -1 : 0;
            if (sign > 0) ++positive_drift_seeds;

            json arm_stats = json::object();
            for (std::size_t ai = 0; ai < arms.size(); ++ai) {
                const RunResult& rr = results[si][ai];
                const double tail = tail_mean_accuracy(rr, cfg.compare.tail_rounds);
                arm_tail_sums[ai] += tail;
                double g_max = 0.0;
                int g_positive = 0;
                for (const RoundRecord& rec : rr.records) {
                    g_max = std::max(g_max, rec.g_round_start);
                    if (rec.g_round_start > 0.0) ++g_positive;
                }
                arm_stats[arms[ai].name] = {
                    {"tail_accuracy", tail},
                    {"initial_train_loss", rr.initial_train_loss},
                    {"final_train_loss",
                     rr.records.empty() ? 0.0 : rr.records.back().train_loss},
                    {"final_accuracy",
                     rr.records.empty() ? 0.0 : rr.records.back().eval_accuracy},
                    {"g_round_start_max", g_max},
                    {"g_round_start_positive_rounds", g_positive},
                };
            }

            per_seed.push_back({{"seed", seeds[si]},
                                {"mean_drift_reduction", window_mean},
                                {"drift_reduction_sign", sign},
                                {"arms", arm_stats}});
        }

        json summary;
        summary["seeds"] = seeds;
        json arm_names = json::array();
        for (const Arm& arm : arms) arm_names.push_back(arm.name);
        summary["arms"] = arm_names;
        summary["drift_window_start"] = cfg.compare.drift_window_start;
        summary["tail_rounds"] = cfg.compare.tail_rounds;
        summary["per_seed"] = per_seed;
        summary["positive_drift_seeds"] = positive_drift_seeds;
        json mean_tail = json::object();
        for (std::size_t ai = 0; ai < arms.size(); ++ai) {
            mean_tail[arms[ai].name] = arm_tail_sums[ai] / static_cast<double>(seeds.size());
        }
        summary["mean_tail_accuracy"] = mean_tail;

        artifacts.write("compare.csv", csv);
        artifacts.write("summary.json", summary.dump(2) + "\n");
        json manifest = manifest_base("compare", cfg, started, artifacts);
        manifest["artifacts"] = [&] {
            std::vector<std::string> names = artifacts.names();
            names.push_back("manifest.json");
            return names;
        }();
        artifacts.write("manifest.json", manifest.dump(2) + "\n");

        out << "compare: " << positive_drift_seeds << "/" << seeds.size()
            << " seeds show positive mean drift reduction\n";
        out << "artifacts in " << artifacts.dir().string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        artifacts.discard_all();
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_gradcheck(const GradCheckOptions& options, std::ostream& out, std::ostream& err) {
    try {
        const GradCheckReport report = run_gradcheck(options);
        out << "gradient oracle: " << report.cases << " cases, step " << fmt(options.step)
            << ", seed " << options.seed << "\n";
        out << "max relative error (analytic vs finite difference): "
            << fmt(report.max_relative_error) << " (tolerance 1e-06)\n";
        out << "max collapse residual (feedback == weights): "
            << fmt(report.max_collapse_residual) << " (tolerance 1e-12)\n";
        if (report.pass()) {
            out << "PASS\n";
            return 0;
        }
        out << "FAIL\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

namespace {

const char* bound_mode_name(BoundMode mode) {
    switch (mode) {
        case BoundMode::BP: return "bp";
        case BoundMode::FA: return "fa";
        case BoundMode::FARescaled: return "fa_rescaled";
    }
    return "?";
}

}  // namespace

int cmd_boundcheck(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const std::string started = utc_now();
    ArtifactSet artifacts{fs::path(cfg.output_dir)};
    try {
        cfg.validate();
        if (cfg.partition.clients != 2) {
            throw std::invalid_argument(
                "boundcheck: partition.clients must be exactly 2 (got " +
                std::to_string(cfg.partition.clients) + ")");
        }
        if (cfg.train.hidden.empty()) {
            throw std::invalid_argument(
                "boundcheck: the model needs at least one hidden layer so an adjacent "
                "layer pair exists");
        }

        // The derivation assumes plain SGD steps and full participation; force
        // that regime and say so when it overrides the file.
        TrainConfig base = effective_train_config(cfg);
        auto notice = [&](const char* field, double from, double to) {
            out << "notice: boundcheck forces " << field << "=" << fmt(to) << " (config had "
                << fmt(from) << ")\n";
        };
        if (base.momentum != 0.0) notice("train.momentum", base.momentum, 0.0);
        if (base.weight_decay != 0.0) notice("train.weight_decay", base.weight_decay, 0.0);
        if (base.client_fraction != 1.0) {
            notice("train.client_fraction", base.client_fraction, 1.0);
        }
        if (base.algorithm != Algorithm::FedAvg) {
            out << "notice: boundcheck forces train.algorithm=fedavg\n";
        }
        base.momentum = 0.0;
        base.weight_decay = 0.0;
        base.client_fraction = 1.0;
        base.algorithm = Algorithm::FedAvg;
        base.prox_mu = 0.0;
        base.server_momentum = 0.0;
        base.trace_mode = true;
        base.record_representation = false;

        const int top_layer = static_cast<int>(base.hidden.size()) + 1;
        const Dataset train = make_train_dataset(cfg);
        const Dataset eval = make_eval_dataset(cfg);
        const std::vector<ClientShard> shards = make_shards(cfg, train);

        // The bound compares the clients' error signals batch-for-batch, so
        // every compared step must use a full batch; cap the local steps to
        // what the smaller shard can fill.
        std::size_t min_shard = shards.front().sample_count();
        for (const ClientShard& shard : shards) {
            min_shard = std::min(min_shard, shard.sample_count());
        }
        if (static_cast<std::size_t>(base.batch_size) > min_shard) {
            notice("train.batch_size", base.batch_size, static_cast<double>(min_shard));
            base.batch_size = static_cast<int>(min_shard);
        }
        const int full_batches = static_cast<int>(min_shard) / base.batch_size;
        if (base.max_batches_per_epoch == 0 || base.max_batches_per_epoch > full_batches) {
            notice("train.max_batches_per_epoch", base.max_batches_per_epoch,
                   static_cast<double>(full_batches));
            base.max_batches_per_epoch = full_batches;
        }

        struct BoundArm {
            std::string name;
            BackwardKind backward;
            FeedbackMode feedback;
        };
        const std::vector<BoundArm> arms = {
            {"bp", BackwardKind::Backprop, FeedbackMode::GlobalWeights},
            {"flfa", BackwardKind::FeedbackAlign, FeedbackMode::GlobalWeights},
            {"flfa_norescale", BackwardKind::FeedbackAlign, FeedbackMode::GlobalNoRescale},
        };

        std::string csv =
            "arm,round,mode,layer,steps,client_i,client_j,eta,lhs,term_delta,term_weight,"
            "term_alpha,term_fprime,term_input,x_tilde,delta_tilde,rhs,slack,"
            "spectral_fallback\n";
        int total_rows = 0;
        int violations = 0;
        double min_slack = std::numeric_limits<double>::infinity();

        for (const BoundArm& arm : arms) {
            TrainConfig tc = base;
            tc.backward = arm.backward;
            tc.feedback_mode = arm.feedback;
            if (arm.backward == BackwardKind::FeedbackAlign) {
                // Feedback pinned to the top layer: deterministic coverage of
                // the (L-1, L) pair from round 0.
                tc.layer_strategy = LayerStrategy::Fixed;
                tc.fixed_layer = top_layer;
            } else {
                tc.layer_strategy = LayerStrategy::None;
            }

            const RunResult result = run_training(tc, train, eval, shards);
            int arm_rows = 0;
            for (std::size_t r = 0; r < result.traces.size(); ++r) {
                if (result.traces[r].size() != 2) {
                    throw std::runtime_error("boundcheck: round " + std::to_string(r) +
                                             " recorded " +
                                             std::to_string(result.traces[r].size()) +
                                             " traces, expected 2");
                }
                std::vector<BoundRow> rows;
                try {
                    rows = drift_bound_check(result.traces[r][0], result.traces[r][1]);
                } catch (const std::invalid_argument& e) {
                    throw std::runtime_error(
                        std::string(e.what()) +
                        " (set train.max_batches_per_epoch so both clients record the same "
                        "number of steps)");
                }
                for (const BoundRow& row : rows) {
                    csv += arm.name;
                    csv += ',' + std::to_string(r);
                    csv += ',';
                    csv += bound_mode_name(row.mode);
                    csv += ',' + std::to_string(row.layer);
                    csv += ',' + std::to_string(row.steps);
                    csv += ',' + std::to_string(row.client_i);
                    csv += ',' + std::to_string(row.client_j);
                    csv += ',' + fmt(row.eta);
                    csv += ',' + fmt(row.lhs);
                    csv += ',' + fmt(row.term_delta);
                    csv += ',' + fmt(row.term_weight);
                    csv += ',' + fmt(row.term_alpha);
                    csv += ',' + fmt(row.term_fprime);
                    csv += ',' + fmt(row.term_input);
                    csv += ',' + fmt(row.x_tilde);
                    csv += ',' + fmt(row.delta_tilde);
                    csv += ',' + fmt(row.rhs());
                    csv += ',' + fmt(row.slack());
                    csv += ',';
                    csv += row.spectral_fallback ? '1' : '0';
                    csv += '\n';
                    ++arm_rows;
                    ++total_rows;
                    min_slack = std::min(min_slack, row.slack());
                    if (row.lhs > row.rhs()) ++violations;
                }
            }
            out << "boundcheck: arm " << arm.name << ", " << arm_rows << " rows\n";
        }

        artifacts.write("bound_report.csv", csv);
        json manifest = manifest_base("boundcheck", cfg, started, artifacts);
        manifest["rows"] = total_rows;
        manifest["violations"] = violations;
        manifest["min_slack"] = min_slack;
        manifest["artifacts"] = [&] {
            std::vector<std::string> names = artifacts.names();
            names.push_back("manifest.json");
            return names;
        }();
        artifacts.write("manifest.json", manifest.dump(2) + "\n");

        out << "boundcheck: " << total_rows << " rows, min slack " << fmt(min_slack) << "\n";
        if (violations > 0) {
            err << "error: " << violations << " bound violations (see bound_report.csv)\n";
            return 1;
        }
        out << "PASS\n";
        return 0;
    } catch (const std::exception& e) {
        artifacts.discard_all();
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_partition(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    ArtifactSet artifacts{fs::path(cfg.output_dir)};
    try {
        cfg.validate();
        const Dataset train = make_train_dataset(cfg);
        const std::vector<ClientShard> shards = make_shards(cfg, train);

        artifacts.write("partition.json", partition_to_json(shards));

        for (const ClientShard& shard : shards) {
            out << "client " << shard.client_id << ": " << shard.sample_count() << " samples [";
            for (std::size_t c = 0; c < shard.class_histogram.size(); ++c) {
                if (c > 0) out << ' ';
                out << shard.class_histogram[c];
            }
            out << "]\n";
        }
        out << "mean label entropy: " << fmt(mean_label_entropy(shards)) << " nats\n";
        out << "wrote " << (fs::path(cfg.output_dir) / "partition.json").string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        artifacts.discard_all();
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace fedalign
