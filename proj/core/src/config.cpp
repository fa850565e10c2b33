#include "fedalign/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fedalign/model_io.hpp"
#include "fedalign/rng.hpp"

namespace fedalign {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& why) {
    throw std::invalid_argument("config: " + path + " " + why);
}

void require_object(const json& j, const std::string& path) {
    if (!j.is_object()) fail(path, "must be an object");
}

// Rejects keys outside the allowed set, reporting the dotted path.
void check_keys(const json& obj, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            const std::string path = prefix.empty() ? item.key() : prefix + "." + item.key();
            fail(path, "is not a recognized key");
        }
    }
}

template <typename T>
void read_number(const json& obj, const std::string& prefix, const char* key, T& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number()) fail(prefix + key, "must be a number");
    out = v.get<T>();
}

void read_u64(const json& obj, const std::string& prefix, const char* key, std::uint64_t& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<std::int64_t>() < 0)) {
        fail(prefix + key, "must be a non-negative integer");
    }
    out = v.get<std::uint64_t>();
}

void read_int(const json& obj, const std::string& prefix, const char* key, int& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail(prefix + key, "must be an integer");
    out = v.get<int>();
}

void read_bool(const json& obj, const std::string& prefix, const char* key, bool& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_boolean()) fail(prefix + key, "must be a boolean");
    out = v.get<bool>();
}

void read_string(const json& obj, const std::string& prefix, const char* key, std::string& out) {
    if (!obj.contains(key)) return;
    const json& v = obj.at(key);
    if (!v.is_string()) fail(prefix + key, "must be a string");
    out = v.get<std::string>();
}

std::string read_choice(const json& obj, const std::string& prefix, const char* key,
                        const std::string& fallback) {
    std::string value = fallback;
    read_string(obj, prefix, key, value);
    return value;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
    }
    require_object(root, "(root)");
    check_keys(root, "", {"seed", "output_dir", "workers", "data", "partition", "model",
                          "train", "metrics", "compare"});

    RunConfig cfg;
    read_u64(root, "", "seed", cfg.seed);
    read_string(root, "", "output_dir", cfg.output_dir);
    read_int(root, "", "workers", cfg.workers);

    if (root.contains("data")) {
        const json& d = root.at("data");
        require_object(d, "data");
        check_keys(d, "data", {"source", "classes", "dim", "train_per_class", "eval_per_class",
                               "spread", "train_csv", "eval_csv"});
        const std::string source = read_choice(d, "data.", "source", "blobs");
        if (source == "blobs") {
            cfg.data.source = DataSource::Blobs;
        } else if (source == "csv") {
            cfg.data.source = DataSource::Csv;
        } else {
            fail("data.source", "must be \"blobs\" or \"csv\"");
        }
        read_int(d, "data.", "classes", cfg.data.classes);
        read_int(d, "data.", "dim", cfg.data.dim);
        read_int(d, "data.", "train_per_class", cfg.data.train_per_class);
        read_int(d, "data.", "eval_per_class", cfg.data.eval_per_class);
        read_number(d, "data.", "spread", cfg.data.spread);
        read_string(d, "data.", "train_csv", cfg.data.train_csv);
        read_string(d, "data.", "eval_csv", cfg.data.eval_csv);
    }

    if (root.contains("partition")) {
        const json& p = root.at("partition");
        require_object(p, "partition");
        check_keys(p, "partition", {"clients", "beta"});
        read_int(p, "partition.", "clients", cfg.partition.clients);
        read_number(p, "partition.", "beta", cfg.partition.beta);
    }

    if (root.contains("model")) {
        const json& m = root.at("model");
        require_object(m, "model");
        check_keys(m, "model", {"hidden", "activation"});
        if (m.contains("hidden")) {
            const json& h = m.at("hidden");
            if (!h.is_array()) fail("model.hidden", "must be an array of widths");
            cfg.train.hidden.clear();
            for (const json& v : h) {
                if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
                    fail("model.hidden", "entries must be positive integers");
                }
                cfg.train.hidden.push_back(v.get<std::size_t>());
            }
        }
        if (m.contains("activation")) {
            std::string name;
            read_string(m, "model.", "activation", name);
            try {
                cfg.train.activation = activation_from_name(name);
            } catch (const std::exception&) {
                fail("model.activation", "must be \"relu\", \"tanh\", or \"identity\"");
            }
        }
    }

    if (root.contains("train")) {
        const json& t = root.at("train");
        require_object(t, "train");
        check_keys(t, "train",
                   {"rounds", "local_epochs", "batch_size", "max_batches_per_epoch",
                    "learning_rate", "momentum", "weight_decay", "lr_decay", "client_fraction",
                    "backward", "feedback_mode", "algorithm", "prox_mu", "server_momentum",
                    "layer_strategy", "fixed_layer", "fa_layer_count"});
        read_int(t, "train.", "rounds", cfg.train.rounds);
        read_int(t, "train.", "local_epochs", cfg.train.local_epochs);
        read_int(t, "train.", "batch_size", cfg.train.batch_size);
        read_int(t, "train.", "max_batches_per_epoch", cfg.train.max_batches_per_epoch);
        read_number(t, "train.", "learning_rate", cfg.train.learning_rate);
        read_number(t, "train.", "momentum", cfg.train.momentum);
        read_number(t, "train.", "weight_decay", cfg.train.weight_decay);
        read_number(t, "train.", "lr_decay", cfg.train.lr_decay);
        read_number(t, "train.", "client_fraction", cfg.train.client_fraction);
        read_number(t, "train.", "prox_mu", cfg.train.prox_mu);
        read_number(t, "train.", "server_momentum", cfg.train.server_momentum);
        read_int(t, "train.", "fixed_layer", cfg.train.fixed_layer);
        read_int(t, "train.", "fa_layer_count", cfg.train.fa_layer_count);

        const std::string backward = read_choice(t, "train.", "backward", "bp");
        if (backward == "bp") {
            cfg.train.backward = BackwardKind::Backprop;
        } else if (backward == "flfa") {
            cfg.train.backward = BackwardKind::FeedbackAlign;
        } else {
            fail("train.backward", "must be \"bp\" or \"flfa\"");
        }

        const std::string fb = read_choice(t, "train.", "feedback_mode", "global");
        if (fb == "global") {
            cfg.train.feedback_mode = FeedbackMode::GlobalWeights;
        } else if (fb == "global_norescale") {
            cfg.train.feedback_mode = FeedbackMode::GlobalNoRescale;
        } else if (fb == "random_fixed") {
            cfg.train.feedback_mode = FeedbackMode::RandomFixed;
        } else {
            fail("train.feedback_mode",
                 "must be \"global\", \"global_norescale\", or \"random_fixed\"");
        }

        const std::string algo = read_choice(t, "train.", "algorithm", "fedavg");
        if (algo == "fedavg") {
            cfg.train.algorithm = Algorithm::FedAvg;
        } else if (algo == "fedprox") {
            cfg.train.algorithm = Algorithm::FedProx;
        } else if (algo == "fedavgm") {
            cfg.train.algorithm = Algorithm::FedAvgM;
        } else {
            fail("train.algorithm", "must be \"fedavg\", \"fedprox\", or \"fedavgm\"");
        }

        const std::string strategy = read_choice(t, "train.", "layer_strategy", "none");
        if (strategy == "none") {
            cfg.train.layer_strategy = LayerStrategy::None;
        } else if (strategy == "lowest") {
            cfg.train.layer_strategy = LayerStrategy::Lowest;
        } else if (strategy == "highest") {
            cfg.train.layer_strategy = LayerStrategy::Highest;
        } else if (strategy == "fixed") {
            cfg.train.layer_strategy = LayerStrategy::Fixed;
        } else {
            fail("train.layer_strategy",
                 "must be \"none\", \"lowest\", \"highest\", or \"fixed\"");
        }
    }

    if (root.contains("metrics")) {
        const json& m = root.at("metrics");
        require_object(m, "metrics");
        check_keys(m, "metrics", {"trace_mode", "representation", "assumptions",
                                  "assumption_batch_size", "assumption_batches"});
        read_bool(m, "metrics.", "trace_mode", cfg.metrics.trace_mode);
        read_bool(m, "metrics.", "representation", cfg.metrics.representation);
        read_bool(m, "metrics.", "assumptions", cfg.metrics.assumptions);
        read_int(m, "metrics.", "assumption_batch_size", cfg.metrics.assumption_batch_size);
        read_int(m, "metrics.", "assumption_batches", cfg.metrics.assumption_batches);
    }

    if (root.contains("compare")) {
        const json& c = root.at("compare");
        require_object(c, "compare");
        check_keys(c, "compare", {"seeds", "ablations", "drift_window_start", "tail_rounds"});
        if (c.contains("seeds")) {
            const json& s = c.at("seeds");
            if (!s.is_array()) fail("compare.seeds", "must be an array of seeds");
            cfg.compare.seeds.clear();
            for (const json& v : s) {
                if (!v.is_number_integer() || (!v.is_number_unsigned() &&
                                               v.get<std::int64_t>() < 0)) {
                    fail("compare.seeds", "entries must be non-negative integers");
                }
                cfg.compare.seeds.push_back(v.get<std::uint64_t>());
            }
        }
        read_bool(c, "compare.", "ablations", cfg.compare.ablations);
        read_int(c, "compare.", "drift_window_start", cfg.compare.drift_window_start);
        read_int(c, "compare.", "tail_rounds", cfg.compare.tail_rounds);
    }

    // Cross-section plumbing: the training loop owns these knobs.
    cfg.train.seed = cfg.seed;
    cfg.train.workers = cfg.workers;
    cfg.train.trace_mode = cfg.metrics.trace_mode;
    cfg.train.record_representation = cfg.metrics.representation;

    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    if (output_dir.empty()) fail("output_dir", "must not be empty");
    if (workers < 0) fail("workers", "must be >= 0");

    if (data.source == DataSource::Blobs) {
        if (data.classes < 2) fail("data.classes", "must be >= 2");
        if (data.dim < 1) fail("data.dim", "must be >= 1");
        if (data.train_per_class < 1) fail("data.train_per_class", "must be >= 1");
        if (data.eval_per_class < 1) fail("data.eval_per_class", "must be >= 1");
        if (!(data.spread > 0.0)) fail("data.spread", "must be positive");
    } else {
        if (data.train_csv.empty()) fail("data.train_csv", "is required for the csv source");
        if (data.eval_csv.empty()) fail("data.eval_csv", "is required for the csv source");
    }

    if (partition.clients < 1) fail("partition.clients", "must be >= 1");
    if (!(partition.beta > 0.0)) fail("partition.beta", "must be positive");

    if (metrics.assumption_batch_size < 1) {
        fail("metrics.assumption_batch_size", "must be >= 1");
    }
    if (metrics.assumption_batches < 1) fail("metrics.assumption_batches", "must be >= 1");

    if (compare.drift_window_start < 0) fail("compare.drift_window_start", "must be >= 0");
    if (compare.tail_rounds < 1) fail("compare.tail_rounds", "must be >= 1");

    try {
        train.validate();
    } catch (const std::invalid_argument& e) {
        //  TrainConfig reports "TrainConfig: <field> ..."; rebadge as train.<field>.
        std::string message = e.what();
        const std::string prefix = "TrainConfig: ";
        if (message.rfind(prefix, 0) == 0) message = message.substr(prefix.size());
        throw std::invalid_argument("config: train." + message);
    }
}

namespace {

// Applies one "dotted.path=value" override to the JSON tree.  The value is
// parsed as JSON when possible (numbers, booleans, arrays) and used as a
// plain string otherwise, so "train.rounds=3" and "data.source=csv" both work.
void apply_override(json& root, const std::string& entry) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw std::invalid_argument("config: override \"" + entry +
                                    "\" must look like path.to.key=value");
    }
    const std::string path = entry.substr(0, eq);
    const std::string raw = entry.substr(eq + 1);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;  // unquoted string
    }

    json* node = &root;
    std::size_t start = 0;
    for (;;) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot - start);
        if (key.empty()) {
            throw std::invalid_argument("config: override path \"" + path +
                                        "\" has an empty segment");
        }
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        if (!node->contains(key)) (*node)[key] = json::object();
        node = &(*node)[key];
        if (!node->is_object()) {
            throw std::invalid_argument("config: override path \"" + path +
                                        "\" descends into a non-object");
        }
        start = dot + 1;
    }
}

}  // namespace

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
    json root = json::object();
    if (!path.empty()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw std::invalid_argument("config: cannot read \"" + path + "\"");
        }
        std::ostringstream buffer;
        buffer << in.rdbuf();
        try {
            root = json::parse(buffer.str());
        } catch (const json::parse_error& e) {
            throw std::invalid_argument("config: \"" + path + "\" is not valid JSON: " +
                                        e.what());
        }
        require_object(root, "(root)");
    }

    if (const char* seed_env = std::getenv("FEDALIGN_SEED")) {
        const std::string text(seed_env);
        std::size_t used = 0;
        std::uint64_t seed = 0;
        try {
            seed = std::stoull(text, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != text.size() || text.empty()) {
            throw std::invalid_argument("config: FEDALIGN_SEED=\"" + text +
                                        "\" is not a non-negative integer");
        }
        root["seed"] = seed;
    }
    if (const char* dir_env = std::getenv("FEDALIGN_OUTPUT_DIR")) {
        root["output_dir"] = std::string(dir_env);
    }

    for (const std::string& entry : overrides) apply_override(root, entry);

    return parse_run_config(root.dump());
}

Dataset make_train_dataset(const RunConfig& cfg) {
    if (cfg.data.source == DataSource::Csv) return load_csv(cfg.data.train_csv);
    return gen_blobs(cfg.data.classes, cfg.data.dim, cfg.data.train_per_class, cfg.data.spread,
                     mix_seed(cfg.seed, kDataStream));
}

Dataset make_eval_dataset(const RunConfig& cfg) {
    if (cfg.data.source == DataSource::Csv) return load_csv(cfg.data.eval_csv);
    return gen_blobs(cfg.data.classes, cfg.data.dim, cfg.data.eval_per_class, cfg.data.spread,
                     mix_seed(cfg.seed, kEvalDataStream));
}

std::vector<ClientShard> make_shards(const RunConfig& cfg, const Dataset& train) {
    PartitionSpec spec;
    spec.clients = cfg.partition.clients;
    spec.beta = cfg.partition.beta;
    spec.seed = cfg.seed;
    return partition_dirichlet_nonempty(train, spec);
}

std::string run_config_to_json(const RunConfig& cfg) {
    json root;
    root["seed"] = cfg.seed;
    root["output_dir"] = cfg.output_dir;
    root["workers"] = cfg.workers;

    json d;
    d["source"] = cfg.data.source == DataSource::Blobs ? "blobs" : "csv";
    if (cfg.data.source == DataSource::Blobs) {
        d["classes"] = cfg.data.classes;
        d["dim"] = cfg.data.dim;
        d["train_per_class"] = cfg.data.train_per_class;
        d["eval_per_class"] = cfg.data.eval_per_class;
        d["spread"] = cfg.data.spread;
    } else {
        d["train_csv"] = cfg.data.train_csv;
        d["eval_csv"] = cfg.data.eval_csv;
    }
    root["data"] = d;

    root["partition"] = {{"clients", cfg.partition.clients}, {"beta", cfg.partition.beta}};

    json m;
    m["hidden"] = cfg.train.hidden;
    m["activation"] = activation_name(cfg.train.activation);
    root["model"] = m;

    json t;
    t["rounds"] = cfg.train.rounds;
    t["local_epochs"] = cfg.train.local_epochs;
    t["batch_size"] = cfg.train.batch_size;
    t["max_batches_per_epoch"] = cfg.train.max_batches_per_epoch;
    t["learning_rate"] = cfg.train.learning_rate;
    t["momentum"] = cfg.train.momentum;
    t["weight_decay"] = cfg.train.weight_decay;
    t["lr_decay"] = cfg.train.lr_decay;
    t["client_fraction"] = cfg.train.client_fraction;
    t["backward"] = cfg.train.backward == BackwardKind::Backprop ? "bp" : "flfa";
    switch (cfg.train.feedback_mode) {
        case FeedbackMode::GlobalWeights: t["feedback_mode"] = "global"; break;
        case FeedbackMode::GlobalNoRescale: t["feedback_mode"] = "global_norescale"; break;
        case FeedbackMode::RandomFixed: t["feedback_mode"] = "random_fixed"; break;
    }
    switch (cfg.train.algorithm) {
        case Algorithm::FedAvg: t["algorithm"] = "fedavg"; break;
        case Algorithm::FedProx: t["algorithm"] = "fedprox"; break;
        case Algorithm::FedAvgM: t["algorithm"] = "fedavgm"; break;
    }
    t["prox_mu"] = cfg.train.prox_mu;
    t["server_momentum"] = cfg.train.server_momentum;
    switch (cfg.train.layer_strategy) {
        case LayerStrategy::None: t["layer_strategy"] = "none"; break;
        case LayerStrategy::Lowest: t["layer_strategy"] = "lowest"; break;
        case LayerStrategy::Highest: t["layer_strategy"] = "highest"; break;
        case LayerStrategy::Fixed: t["layer_strategy"] = "fixed"; break;
    }
    t["fixed_layer"] = cfg.train.fixed_layer;
    t["fa_layer_count"] = cfg.train.fa_layer_count;
    root["train"] = t;

    json mm;
    mm["trace_mode"] = cfg.metrics.trace_mode;
    mm["representation"] = cfg.metrics.representation;
    mm["assumptions"] = cfg.metrics.assumptions;
    mm["assumption_batch_size"] = cfg.metrics.assumption_batch_size;
    mm["assumption_batches"] = cfg.metrics.assumption_batches;
    root["metrics"] = mm;

    json c;
    c["seeds"] = cfg.compare.seeds;
    c["ablations"] = cfg.compare.ablations;
    c["drift_window_start"] = cfg.compare.drift_window_start;
    c["tail_rounds"] = cfg.compare.tail_rounds;
    root["compare"] = c;

    return root.dump(2);
}

}  // namespace fedalign
