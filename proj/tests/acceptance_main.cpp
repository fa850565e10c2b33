// ---------------------------------------------------------------------------
// Acceptance harness: ten self-contained checks, one per shipped guarantee,
// each printing a single "criterion N: PASS/FAIL - detail" line.  Run with no
// arguments for the full battery or with "--criterion N" for one check.
// Tolerances and the experiment regime are pinned here, in code.
// ---------------------------------------------------------------------------

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedalign/commands.hpp"
#include "fedalign/config.hpp"
#include "fedalign/data.hpp"
#include "fedalign/federation.hpp"
#include "fedalign/gradcheck.hpp"
#include "fedalign/metrics.hpp"
#include "fedalign/nn.hpp"
#include "fedalign/rng.hpp"

using namespace fedalign;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// --- pinned tolerances and budgets ------------------------------------------
constexpr double kGradTol = 1e-6;          // analytic vs finite difference
constexpr double kCollapseTol = 1e-12;     // backward_fa(B=W) vs backward_bp
constexpr double kRescaleTol = 1e-9;       // norm match and direction drift
constexpr double kExactTol = 1e-12;        // hand-computed oracles
constexpr double kAccuracyMargin = 0.01;   // "never lower by more than 1 point"
constexpr double kGradcheckBudget = 30.0;  // seconds
constexpr double kBitwiseBudget = 30.0;
constexpr double kBoundBudget = 60.0;
constexpr double kDriftBudget = 180.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Stopwatch {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
};

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / ("fedalign_acceptance_" + name)) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in.good()) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// --- the pinned experiment regime (criteria 5-7 and 9) -----------------------
// Synthetic blobs, 5 classes in 20 dimensions, 10 clients under Dirichlet(0.3),
// full participation, 3 local epochs, 50 rounds, a 20-32-5 ReLU MLP, and the
// lowest-alignment layer strategy.
std::string experiment_config(const std::string& output_dir, const std::string& seeds,
                              bool ablations) {
    return std::string(R"({
        "seed": 1,
        "output_dir": ")") +
           output_dir + R"(",
        "data": {"classes": 5, "dim": 20, "train_per_class": 200, "eval_per_class": 60,
                 "spread": 1.0},
        "partition": {"clients": 10, "beta": 0.3},
        "model": {"hidden": [32], "activation": "relu"},
        "train": {"rounds": 50, "local_epochs": 3, "learning_rate": 0.015,
                  "backward": "flfa", "layer_strategy": "lowest"},
        "compare": {"seeds": [)" +
           seeds + R"(], "ablations": )" + (ablations ? "true" : "false") +
           R"(, "drift_window_start": 10, "tail_rounds": 10}
    })";
}

// Paired-run summaries are expensive; cache them so the full battery runs each
// configuration once.
const json& compare_summary(const std::string& seeds, bool ablations) {
    static std::map<std::string, json> cache;
    const std::string key = seeds + (ablations ? "+ablations" : "");
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    TempDir dir("compare_" + std::to_string(cache.size()));
    const RunConfig cfg = parse_run_config(experiment_config(dir.str(), seeds, ablations));
    std::ostringstream out, err;
    if (cmd_compare(cfg, out, err) != 0)
        throw std::runtime_error("compare command failed: " + err.str());
    return cache.emplace(key, read_json(dir.path / "summary.json")).first->second;
}

// --- criterion 1: finite-difference gradient oracle ---------------------------
Outcome criterion1() {
    Stopwatch timer;
    GradCheckOptions options;
    options.cases = 50;
    options.step = 1e-5;
    options.seed = 0;
    const GradCheckReport report = run_gradcheck(options);
    const double elapsed = timer.seconds();

    Outcome result;
    result.pass = report.max_relative_error < kGradTol && elapsed < kGradcheckBudget;
    result.detail = "max relative error " + num(report.max_relative_error) + " over " +
                    std::to_string(report.cases) + " random models in " + num(elapsed) +
                    "s (tolerance " + num(kGradTol) + ", budget 30s)";
    return result;
}

// --- criterion 2: feedback collapse and empty-set bitwise identity ------------
Outcome criterion2() {
    Stopwatch timer;
    GradCheckOptions options;
    options.cases = 50;
    options.seed = 0;
    const GradCheckReport report = run_gradcheck(options);

    const std::string base = R"(
        "data": {"classes": 4, "dim": 8, "train_per_class": 50, "eval_per_class": 10},
        "partition": {"clients": 5, "beta": 0.5},
        "model": {"hidden": [16]},
        "train": {"rounds": 5, "local_epochs": 1, "batch_size": 32, "learning_rate": 0.05,
                  "backward": ")";

    TempDir bp_dir("c2_bp"), fa_dir("c2_fa");
    const RunConfig bp_cfg = parse_run_config(
        R"({"seed": 7, "output_dir": ")" + bp_dir.str() + "\"," + base + R"(bp"}})");
    const RunConfig fa_cfg = parse_run_config(
        R"({"seed": 7, "output_dir": ")" + fa_dir.str() + "\"," + base +
        R"(flfa", "layer_strategy": "none"}})");

    std::ostringstream sink;
    const bool ran = cmd_train(bp_cfg, sink, sink) == 0 && cmd_train(fa_cfg, sink, sink) == 0;
    bool identical = ran;
    for (const char* name : {"rounds.jsonl", "metrics.csv", "model.json"})
        identical = identical && slurp(bp_dir.path / name) == slurp(fa_dir.path / name);
    const double elapsed = timer.seconds();

    Outcome result;
    result.pass = report.max_collapse_residual <= kCollapseTol && identical &&
                  elapsed < kBitwiseBudget;
    result.detail = "collapse residual " + num(report.max_collapse_residual) + " over 50 cases; " +
                    std::string(identical ? "empty-feedback run byte-identical to backprop"
                                          : "empty-feedback run DIFFERS from backprop") +
                    "; " + num(elapsed) + "s";
    return result;
}

// --- criterion 3: per-batch rescale invariant ---------------------------------
Outcome criterion3() {
    const RunConfig rc = parse_run_config(R"({
        "seed": 5,
        "data": {"classes": 3, "dim": 10, "train_per_class": 50, "eval_per_class": 10},
        "partition": {"clients": 4, "beta": 1.0},
        "model": {"hidden": [16]},
        "train": {"rounds": 6, "local_epochs": 3, "batch_size": 8, "learning_rate": 0.05,
                  "backward": "flfa", "layer_strategy": "fixed", "fixed_layer": 2},
        "metrics": {"trace_mode": true}
    })");
    const Dataset train = make_train_dataset(rc);
    const Dataset eval = make_eval_dataset(rc);
    const auto shards = make_shards(rc, train);
    const RunResult run = run_training(rc.train, train, eval, shards);
    const RescaleCheck check = check_rescale_invariant(run.traces);

    Outcome result;
    result.pass = check.steps_checked >= 200 && check.max_norm_relative_deviation <= kRescaleTol &&
                  check.max_direction_deviation <= kRescaleTol;
    result.detail = std::to_string(check.steps_checked) + " batch steps checked; norm deviation " +
                    num(check.max_norm_relative_deviation) + ", direction deviation " +
                    num(check.max_direction_deviation) + " (tolerance " + num(kRescaleTol) + ")";
    return result;
}

// --- criterion 4: divergence bound verification --------------------------------
Outcome criterion4() {
    Stopwatch timer;
    TempDir dir("c4_bound");
    const RunConfig cfg = parse_run_config(R"({
        "seed": 11,
        "output_dir": ")" + dir.str() + R"(",
        "data": {"classes": 3, "dim": 10, "train_per_class": 60, "eval_per_class": 10},
        "partition": {"clients": 2, "beta": 5.0},
        "model": {"hidden": [8]},
        "train": {"rounds": 5, "local_epochs": 1, "batch_size": 8,
                  "max_batches_per_epoch": 3, "learning_rate": 0.05}
    })");

    std::ostringstream out, err;
    const int exit_code = cmd_boundcheck(cfg, out, err);

    // Re-read the report and verify the row inventory and the FA structure.
    std::map<std::string, int> rows_per_arm;
    double min_slack = std::numeric_limits<double>::infinity();
    double fa_weight_term_max = 0.0;
    const std::string csv = exit_code == 0 ? slurp(dir.path / "bound_report.csv") : "";
    std::istringstream lines(csv);
    std::string line;
    std::getline(lines, line);  // header: arm,round,mode,layer,steps,... (slack at index 17)
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream cell_in(line);
        std::string cell;
        while (std::getline(cell_in, cell, ',')) cells.push_back(cell);
        ++rows_per_arm[cells[0]];
        min_slack = std::min(min_slack, std::stod(cells[17]));
        if (cells[0] != "bp") fa_weight_term_max =
            std::max(fa_weight_term_max, std::abs(std::stod(cells[10])));
    }
    const double elapsed = timer.seconds();

    const int expected_rows = 5 * 3;  // rounds x recorded steps, one layer pair
    bool inventory = !rows_per_arm.empty();
    for (const auto& [arm, count] : rows_per_arm) inventory = inventory && count == expected_rows;

    Outcome result;
    result.pass = exit_code == 0 && inventory && fa_weight_term_max == 0.0 &&
                  min_slack >= 0.0 && elapsed < kBoundBudget;
    result.detail = "all prefixes satisfied (min slack " + num(min_slack) + "), " +
                    std::to_string(expected_rows) + " rows per arm, feedback weight-divergence "
                    "term identically 0; " + num(elapsed) + "s";
    if (exit_code != 0) result.detail = "bound check failed: " + err.str();
    return result;
}

// --- criterion 5: drift reduction direction ------------------------------------
Outcome criterion5() {
    Stopwatch timer;
    const json& summary = compare_summary("1,2,3,4,5", false);
    int positive = 0;
    std::string values;
    for (const auto& seed : summary.at("per_seed")) {
        const double mean_reduction = seed.at("mean_drift_reduction").get<double>();
        positive += mean_reduction > 0.0;
        values += (values.empty() ? "" : ", ") + num(mean_reduction);
    }
    const double elapsed = timer.seconds();

    Outcome result;
    result.pass = positive >= 4 && elapsed < kDriftBudget;
    result.detail = "mean drift reduction over rounds 10-50 positive in " +
                    std::to_string(positive) + "/5 paired seeds (" + values + "); " +
                    num(elapsed) + "s";
    return result;
}

// --- criterion 6: accuracy direction --------------------------------------------
Outcome criterion6() {
    const json& summary = compare_summary("1,2,3,4,5", false);
    int wins = 0;
    double worst = 0.0;
    for (const auto& seed : summary.at("per_seed")) {
        const double bp = seed.at("arms").at("bp").at("tail_accuracy").get<double>();
        const double fa = seed.at("arms").at("flfa").at("tail_accuracy").get<double>();
        wins += fa >= bp;
        worst = std::min(worst, fa - bp);
    }

    Outcome result;
    result.pass = wins >= 4 && worst >= -kAccuracyMargin;
    result.detail = "final-10-round accuracy: feedback arm >= backprop in " +
                    std::to_string(wins) + "/5 seeds, worst deficit " + num(worst) +
                    " (limit " + num(kAccuracyMargin) + ")";
    return result;
}

// --- criterion 7: ablation ordering and measured gradient gap --------------------
Outcome criterion7() {
    const json& summary = compare_summary("1,2,3", true);

    double mean_flfa = 0.0, mean_norescale = 0.0, mean_random = 0.0;
    bool aligned_gap_zero = true;
    for (const auto& seed : summary.at("per_seed")) {
        const auto& arms = seed.at("arms");
        mean_flfa += arms.at("flfa").at("tail_accuracy").get<double>() / 3.0;
        mean_norescale += arms.at("flfa_norescale").at("tail_accuracy").get<double>() / 3.0;
        mean_random += arms.at("flfa_random").at("tail_accuracy").get<double>() / 3.0;
        aligned_gap_zero =
            aligned_gap_zero && arms.at("flfa").at("g_round_start_max").get<double>() == 0.0;
    }

    // The random-feedback arm must show a strictly positive measured gap at the
    // start of every round in which a feedback layer actually shapes the
    // backward pass (layer 1 feeds no lower layer, so it cannot open a gap).
    bool random_gap_positive = true;
    int effective_rounds = 0;
    for (const std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        TempDir scratch("c7_direct");
        RunConfig rc = parse_run_config(experiment_config(scratch.str(), "1", false));
        rc.seed = seed;
        rc.train.seed = seed;
        rc.train.feedback_mode = FeedbackMode::RandomFixed;
        const Dataset train = make_train_dataset(rc);
        const Dataset eval = make_eval_dataset(rc);
        const auto shards = make_shards(rc, train);
        const RunResult run = run_training(rc.train, train, eval, shards);
        for (const RoundRecord& record : run.records) {
            const bool effective =
                std::any_of(record.fa_layers.begin(), record.fa_layers.end(),
                            [](int layer) { return layer >= 2; });
            if (!effective) continue;
            ++effective_rounds;
            random_gap_positive = random_gap_positive && record.g_round_start > 0.0;
        }
    }
    random_gap_positive = random_gap_positive && effective_rounds > 0;

    Outcome result;
    result.pass = mean_flfa >= mean_norescale && mean_flfa >= mean_random && aligned_gap_zero &&
                  random_gap_positive;
    result.detail = "mean tail accuracy " + num(mean_flfa) + " vs no-rescale " +
                    num(mean_norescale) + " and random " + num(mean_random) +
                    "; round-start gap exactly 0 in " +
                    std::string(aligned_gap_zero ? "all" : "NOT all") +
                    " aligned rounds and > 0 in " + std::to_string(effective_rounds) +
                    "/" + std::to_string(effective_rounds) + " effective random-feedback rounds";
    if (!random_gap_positive && effective_rounds > 0)
        result.detail += " (some effective round reported a zero gap)";
    return result;
}

// --- criterion 8: aggregation and partition exactness ----------------------------
Outcome criterion8() {
    Rng rng(31);
    double aggregate_error = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t in = 2 + rng.below(5), hid = 2 + rng.below(6), out = 2 + rng.below(4);
        const int count = 2 + static_cast<int>(rng.below(4));
        std::vector<MlpModel> models;
        std::vector<double> sizes;
        for (int i = 0; i < count; ++i) {
            Rng init(rng.next());
            models.push_back(make_mlp({in, hid, out}, ActivationKind::ReLU, init));
            sizes.push_back(1.0 + double(rng.below(9)));
        }
        const std::vector<double> merged = flatten(aggregate(models, sizes));

        double total = 0.0;
        for (const double s : sizes) total += s;
        std::vector<double> expected(merged.size(), 0.0);
        for (int i = 0; i < count; ++i) {
            const std::vector<double> flat = flatten(models[std::size_t(i)]);
            for (std::size_t k = 0; k < flat.size(); ++k)
                expected[k] += sizes[std::size_t(i)] / total * flat[k];
        }
        for (std::size_t k = 0; k < merged.size(); ++k)
            aggregate_error = std::max(aggregate_error, std::abs(merged[k] - expected[k]));
    }

    const Dataset dataset = gen_blobs(5, 3, 40, 1.0, 17);
    int exact_partitions = 0;
    for (int trial = 0; trial < 100; ++trial) {
        PartitionSpec spec;
        spec.clients = 2 + static_cast<int>(rng.below(9));
        spec.beta = std::exp(rng.uniform(std::log(0.05), std::log(20.0)));
        spec.seed = rng.next();
        const auto shards = partition_dirichlet(dataset, spec);

        std::set<std::size_t> seen;
        std::vector<std::size_t> class_totals(5, 0);
        bool ok = true;
        for (const auto& shard : shards)
            for (const std::size_t idx : shard.indices) {
                ok = ok && seen.insert(idx).second;
                ++class_totals[std::size_t(dataset.labels[idx])];
            }
        ok = ok && seen.size() == dataset.size();
        for (const std::size_t count : class_totals) ok = ok && count == 40;
        exact_partitions += ok;
    }

    int entropy_ordered = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const double skewed = mean_label_entropy(partition_dirichlet(dataset, {8, 0.1, seed}));
        const double smooth = mean_label_entropy(partition_dirichlet(dataset, {8, 10.0, seed}));
        entropy_ordered += skewed < smooth;
    }

    Outcome result;
    result.pass = aggregate_error <= kExactTol && exact_partitions == 100 && entropy_ordered == 10;
    result.detail = "aggregate error " + num(aggregate_error) + " (tolerance " + num(kExactTol) +
                    "); " + std::to_string(exact_partitions) +
                    "/100 exact partitions; entropy(beta=0.1) < entropy(beta=10) in " +
                    std::to_string(entropy_ordered) + "/10 seeds";
    return result;
}

// --- criterion 9: empirical descent ----------------------------------------------
Outcome criterion9() {
    const json& summary = compare_summary("1,2,3,4,5", false);
    int descended = 0, total = 0;
    double worst_drop = std::numeric_limits<double>::infinity();
    for (const auto& seed : summary.at("per_seed"))
        for (const char* arm : {"bp", "flfa"}) {
            const double initial = seed.at("arms").at(arm).at("initial_train_loss").get<double>();
            const double final_loss = seed.at("arms").at(arm).at("final_train_loss").get<double>();
            ++total;
            descended += final_loss < initial;
            worst_drop = std::min(worst_drop, initial - final_loss);
        }

    Outcome result;
    result.pass = descended == total;
    result.detail = "train loss decreased from round 0 to round 50 in " +
                    std::to_string(descended) + "/" + std::to_string(total) +
                    " (seed, mode) pairs; smallest decrease " + num(worst_drop);
    return result;
}

// --- criterion 10: metric oracles --------------------------------------------------
Outcome criterion10() {
    Rng rng(41);
    double drift_error = 0.0, intra_error = 0.0, inter_error = 0.0;

    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t clients = 2 + rng.below(5);
        const std::size_t dim = 3 + rng.below(6);

        // local_drift against an independent double loop
        std::vector<std::vector<double>> updates(clients, std::vector<double>(dim));
        for (auto& update : updates)
            for (auto& v : update) v = rng.normal();
        std::vector<double> mean(dim, 0.0);
        for (const auto& update : updates)
            for (std::size_t i = 0; i < dim; ++i) mean[i] += update[i] / double(clients);
        double expected_drift = 0.0;
        for (const auto& update : updates) {
            double dist2 = 0.0;
            for (std::size_t i = 0; i < dim; ++i)
                dist2 += (update[i] - mean[i]) * (update[i] - mean[i]);
            expected_drift += std::sqrt(dist2) / double(clients);
        }
        drift_error = std::max(drift_error, std::abs(local_drift(updates) - expected_drift));

        // representation metrics against brute-force centroids
        const int classes = 2 + static_cast<int>(rng.below(3));
        const std::size_t samples = 3 * std::size_t(classes) + rng.below(10);
        Matrix features(dim, samples);
        std::vector<int> labels(samples);
        for (auto& v : features.values()) v = rng.normal();
        for (std::size_t i = 0; i < samples; ++i)
            labels[i] = static_cast<int>(i) % classes;  // every class present

        const RepresentationMetrics metrics = representation_metrics(features, labels);

        std::vector<std::vector<double>> centroids(std::size_t(classes),
                                                   std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(std::size_t(classes), 0);
        for (std::size_t i = 0; i < samples; ++i) {
            ++counts[std::size_t(labels[i])];
            for (std::size_t r = 0; r < dim; ++r)
                centroids[std::size_t(labels[i])][r] += features(r, i);
        }
        for (int c = 0; c < classes; ++c)
            for (std::size_t r = 0; r < dim; ++r)
                centroids[std::size_t(c)][r] /= double(counts[std::size_t(c)]);

        double intra = 0.0;
        for (int c = 0; c < classes; ++c) {
            double class_mean = 0.0;
            for (std::size_t i = 0; i < samples; ++i) {
                if (labels[i] != c) continue;
                double dist2 = 0.0;
                for (std::size_t r = 0; r < dim; ++r) {
                    const double gap = features(r, i) - centroids[std::size_t(c)][r];
                    dist2 += gap * gap;
                }
                class_mean += std::sqrt(dist2) / double(counts[std::size_t(c)]);
            }
            intra += class_mean / double(classes);
        }
        double inter = 0.0;
        int pairs = 0;
        for (int a = 0; a < classes; ++a)
            for (int b = a + 1; b < classes; ++b) {
                double dist2 = 0.0;
                for (std::size_t r = 0; r < dim; ++r) {
                    const double gap = centroids[std::size_t(a)][r] - centroids[std::size_t(b)][r];
                    dist2 += gap * gap;
                }
                inter += std::sqrt(dist2);
                ++pairs;
            }
        inter /= double(pairs);

        intra_error = std::max(intra_error, std::abs(metrics.intra - intra));
        inter_error = std::max(inter_error, std::abs(metrics.inter - inter));
    }

    // hand-computed alignment: orthogonal unit updates meet their mean at 45 degrees
    const auto alignment = cosine_alignment({{{1.0, 0.0}}, {{0.0, 1.0}}});
    const double alignment_error =
        alignment[0] ? std::abs(*alignment[0] - std::sqrt(2.0) / 2.0) : 1.0;

    Outcome result;
    result.pass = drift_error <= kExactTol && intra_error <= kExactTol &&
                  inter_error <= kExactTol && alignment_error <= kExactTol;
    result.detail = "brute-force gaps: drift " + num(drift_error) + ", intra " + num(intra_error) +
                    ", inter " + num(inter_error) + ", sqrt(2)/2 alignment " +
                    num(alignment_error) + " (tolerance " + num(kExactTol) + ")";
    return result;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--criterion" && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::cerr << "usage: fedalign_acceptance [--criterion N]\n";
            return 2;
        }
    }

    const std::vector<std::function<Outcome()>> criteria = {
        criterion1, criterion2, criterion3, criterion4, criterion5,
        criterion6, criterion7, criterion8, criterion9, criterion10,
    };

    if (only < 0 || only > static_cast<int>(criteria.size())) {
        std::cerr << "unknown criterion " << only << "\n";
        return 2;
    }

    bool all_pass = true;
    for (int id = 1; id <= static_cast<int>(criteria.size()); ++id) {
        if (only != 0 && id != only) continue;
        Outcome outcome;
        try {
            outcome = criteria[std::size_t(id - 1)]();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        std::cout << "criterion " << id << ": " << (outcome.pass ? "PASS" : "FAIL") << " - "
                  << outcome.detail << "\n";
        all_pass = all_pass && outcome.pass;
    }
    return all_pass ? 0 : 1;
}
