#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "fedalign/federation.hpp"

using namespace fedalign;

namespace {

Dataset tiny_dataset(std::uint64_t seed = 21) { return gen_blobs(3, 4, 30, 1.0, seed); }

std::vector<ClientShard> tiny_shards(const Dataset& ds, int clients, std::uint64_t seed = 31) {
    PartitionSpec spec;
    spec.clients = clients;
    spec.beta = 0.5;
    spec.seed = seed;
    return partition_dirichlet_nonempty(ds, spec);
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.rounds = 2;
    cfg.local_epochs = 1;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.05;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.001;
    cfg.hidden = {6};
    cfg.activation = ActivationKind::ReLU;
    cfg.seed = 7;
    return cfg;
}

MlpModel tiny_model(std::uint64_t seed = 3) {
    Rng rng(seed);
    return make_mlp({4, 6, 3}, ActivationKind::ReLU, rng);
}

bool records_equal(const RoundRecord& a, const RoundRecord& b) {
    return a.round == b.round && a.selected_clients == b.selected_clients &&
           a.client_layer_updates == b.client_layer_updates && a.drift == b.drift &&
           a.alignment == b.alignment && a.fa_layers == b.fa_layers &&
           a.train_loss == b.train_loss && a.eval_loss == b.eval_loss &&
           a.eval_accuracy == b.eval_accuracy && a.g_round_start == b.g_round_start;
}

}  // namespace

TEST_SUITE("federation") {

TEST_CASE("train config validation names the offending field") {
    TrainConfig cfg = tiny_config();
    cfg.rounds = 0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("rounds"), std::invalid_argument);

    cfg = tiny_config();
    cfg.client_fraction = 0.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("client_fraction"),
                         std::invalid_argument);

    cfg = tiny_config();
    cfg.learning_rate = -1.0;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("learning_rate"),
                         std::invalid_argument);

    cfg = tiny_config();
    cfg.hidden = {0};
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("hidden"), std::invalid_argument);

    CHECK_NOTHROW(tiny_config().validate());
}

TEST_CASE("client selection") {
    Rng rng(1);
    CHECK(select_clients(5, 1.0, rng) == std::vector<int>{0, 1, 2, 3, 4});

    Rng rng2(2);
    const auto picked = select_clients(100, 0.1, rng2);
    CHECK(picked.size() == 10);
    CHECK(std::set<int>(picked.begin(), picked.end()).size() == 10);
    CHECK(std::is_sorted(picked.begin(), picked.end()));
    for (const int id : picked) {
        CHECK(id >= 0);
        CHECK(id < 100);
    }

    Rng a(3), b(3);
    CHECK(select_clients(20, 0.35, a) == select_clients(20, 0.35, b));

    Rng c(4);
    CHECK(select_clients(9, 0.01, c).size() == 1);  // at least one client
}

TEST_CASE("zero local work returns the global model") {
    const Dataset ds = tiny_dataset();
    const auto shards = tiny_shards(ds, 2);
    const MlpModel global = tiny_model();

    TrainConfig cfg = tiny_config();
    cfg.local_epochs = 0;
    const LocalOutcome out = local_train(ds, shards[0], global, cfg, {}, cfg.learning_rate, 5,
                                         nullptr);
    CHECK(flatten(out.model) == flatten(global));
    CHECK(out.g_round_start == 0.0);
}

TEST_CASE("empty feedback set trains exactly like backprop") {
    const Dataset ds = tiny_dataset();
    const auto shards = tiny_shards(ds, 2);
    const MlpModel global = tiny_model();

    TrainConfig bp_cfg = tiny_config();
    bp_cfg.backward = BackwardKind::Backprop;
    TrainConfig fa_cfg = tiny_config();
    fa_cfg.backward = BackwardKind::FeedbackAlign;

    const LocalOutcome bp = local_train(ds, shards[0], global, bp_cfg, {}, 0.05, 5, nullptr);
    const LocalOutcome fa = local_train(ds, shards[0], global, fa_cfg, {}, 0.05, 5, nullptr);
    CHECK(flatten(bp.model) == flatten(fa.model));
    CHECK(fa.g_round_start == 0.0);
}

TEST_CASE("fedprox with zero mu collapses to fedavg") {
    const Dataset ds = tiny_dataset();
    const auto shards = tiny_shards(ds, 2);
    const MlpModel global = tiny_model();

    TrainConfig avg_cfg = tiny_config();
    TrainConfig prox_cfg = tiny_config();
    prox_cfg.algorithm = Algorithm::FedProx;
    prox_cfg.prox_mu = 0.0;

    const LocalOutcome avg = local_train(ds, shards[0], global, avg_cfg, {}, 0.05, 5, nullptr);
    const LocalOutcome prox = local_train(ds, shards[0], global, prox_cfg, {}, 0.05, 5, nullptr);
    CHECK(flatten(avg.model) == flatten(prox.model));

    // a positive mu pulls the iterate back toward the global model
    prox_cfg.prox_mu = 10.0;
    const LocalOutcome pulled = local_train(ds, shards[0], global, prox_cfg, {}, 0.05, 5, nullptr);
    CHECK(flatten(pulled.model) != flatten(avg.model));
}

TEST_CASE("feedback training reports a positive gradient gap for random feedback") {
    const Dataset ds = tiny_dataset();
    const auto shards = tiny_shards(ds, 2);
    const MlpModel global = tiny_model();

    TrainConfig cfg = tiny_config();
    cfg.backward = BackwardKind::FeedbackAlign;
    cfg.feedback_mode = FeedbackMode::RandomFixed;
    Rng bank_rng(9);
    const auto bank = sample_feedback_bank(global, bank_rng);

    const LocalOutcome out = local_train(ds, shards[0], global, cfg, {2}, 0.05, 5, &bank);
    CHECK(out.g_round_start > 0.0);

    // Global-weights feedback starts at B == W, so the first-step gap is zero.
    cfg.feedback_mode = FeedbackMode::GlobalWeights;
    const LocalOutcome aligned = local_train(ds, shards[0], global, cfg, {2}, 0.05, 5, nullptr);
    CHECK(aligned.g_round_start == 0.0);
}

TEST_CASE("aggregate weighted means") {
    const MlpModel single = tiny_model(1);
    CHECK(flatten(aggregate({single}, {4.0})) == flatten(single));

    const MlpModel a = tiny_model(1);
    const MlpModel b = tiny_model(2);

    const MlpModel mean = aggregate({a, b}, {3.0, 3.0});
    const std::vector<double> fa = flatten(a), fb = flatten(b), fm = flatten(mean);
    for (std::size_t i = 0; i < fm.size(); ++i)
        CHECK(fm[i] == doctest::Approx(0.5 * fa[i] + 0.5 * fb[i]).epsilon(1e-15));

    const MlpModel skew = aggregate({a, b}, {1.0, 3.0});
    const std::vector<double> fs = flatten(skew);
    for (std::size_t i = 0; i < fs.size(); ++i)
        CHECK(fs[i] == doctest::Approx(0.25 * fa[i] + 0.75 * fb[i]).epsilon(1e-15));

    CHECK_THROWS_AS(aggregate({}, {}), std::invalid_argument);
    CHECK_THROWS_AS(aggregate({a, b}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(aggregate({a, b}, {1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("server momentum step") {
    const MlpModel prev = tiny_model(1);
    const MlpModel agg = tiny_model(2);

    std::vector<Matrix> buffer;
    const MlpModel plain = server_momentum_step(prev, agg, buffer, 0.0);
    // previous - (previous - aggregated) round-trips through subtraction
    const std::vector<double> got = flatten(plain), want = flatten(agg);
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    // fixed point: aggregated == previous keeps the model still and decays the buffer
    std::vector<Matrix> buf2;
    MlpModel held = server_momentum_step(prev, prev, buf2, 0.5);
    CHECK(flatten(held) == flatten(prev));

    // two rounds against the hand-unrolled recurrence
    std::vector<Matrix> buf3;
    const MlpModel r1 = server_momentum_step(prev, agg, buf3, 0.9);
    const MlpModel r2 = server_momentum_step(r1, agg, buf3, 0.9);
    const std::vector<double> fp = flatten(prev), fa2 = flatten(agg);
    std::vector<double> v(fp.size(), 0.0);
    std::vector<double> w = fp;
    for (int round = 0; round < 2; ++round) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = 0.9 * v[i] + (w[i] - fa2[i]);
            w[i] = w[i] - v[i];
        }
    }
    const std::vector<double> fr2 = flatten(r2);
    CHECK(flatten(r1).size() == fr2.size());
    for (std::size_t i = 0; i < fr2.size(); ++i)
        CHECK(fr2[i] == doctest::Approx(w[i]).epsilon(1e-12));
}

TEST_CASE("cosine alignment examples") {
    // all clients identical and nonzero: z = 1 for every layer
    const std::vector<std::vector<std::vector<double>>> same = {
        {{1.0, 2.0}, {0.5}}, {{1.0, 2.0}, {0.5}}};
    const auto z_same = cosine_alignment(same);
    REQUIRE(z_same.size() == 2);
    CHECK(*z_same[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*z_same[1] == doctest::Approx(1.0).epsilon(1e-12));

    // orthogonal pair: mean at 45 degrees, both cosines sqrt(2)/2
    const std::vector<std::vector<std::vector<double>>> orth = {{{1.0, 0.0}}, {{0.0, 1.0}}};
    const auto z_orth = cosine_alignment(orth);
    REQUIRE(z_orth.size() == 1);
    CHECK(*z_orth[0] == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-12));

    // exact cancellation: the mean vanishes, alignment undefined
    const std::vector<std::vector<std::vector<double>>> cancel = {{{1.0, 0.0}}, {{-1.0, 0.0}}};
    CHECK_FALSE(cosine_alignment(cancel)[0].has_value());
}

TEST_CASE("layer strategy selection") {
    const std::vector<std::optional<double>> z = {0.9, 0.2, 0.5};
    CHECK(select_fa_layers(z, LayerStrategy::Lowest, 1, 1) == std::set<int>{2});
    CHECK(select_fa_layers(z, LayerStrategy::Highest, 1, 1) == std::set<int>{1});
    CHECK(select_fa_layers(z, LayerStrategy::Lowest, 1, 2) == std::set<int>{2, 3});
    CHECK(select_fa_layers(z, LayerStrategy::Fixed, 3, 1) == std::set<int>{3});
    CHECK(select_fa_layers(z, LayerStrategy::None, 1, 1).empty());

    const std::vector<std::optional<double>> tie = {0.5, 0.5};
    CHECK(select_fa_layers(tie, LayerStrategy::Lowest, 1, 1) == std::set<int>{1});

    const std::vector<std::optional<double>> undefined = {std::nullopt, std::nullopt};
    CHECK(select_fa_layers(undefined, LayerStrategy::Lowest, 1, 1).empty());

    // undefined entries are skipped, defined ones still compete
    const std::vector<std::optional<double>> partial = {std::nullopt, 0.4, 0.1};
    CHECK(select_fa_layers(partial, LayerStrategy::Lowest, 1, 1) == std::set<int>{3});
}

TEST_CASE("round zero warms up with an empty feedback set") {
    const Dataset train = tiny_dataset(21);
    const Dataset eval = gen_blobs(3, 4, 10, 1.0, 22);
    const auto shards = tiny_shards(train, 3);

    TrainConfig bp_cfg = tiny_config();
    bp_cfg.rounds = 1;
    TrainConfig fa_cfg = bp_cfg;
    fa_cfg.backward = BackwardKind::FeedbackAlign;
    fa_cfg.layer_strategy = LayerStrategy::Lowest;

    const RunResult bp = run_training(bp_cfg, train, eval, shards);
    const RunResult fa = run_training(fa_cfg, train, eval, shards);
    REQUIRE(bp.records.size() == 1);
    REQUIRE(fa.records.size() == 1);
    CHECK(fa.records[0].fa_layers.empty());
    CHECK(records_equal(bp.records[0], fa.records[0]));
    CHECK(flatten(bp.final_model) == flatten(fa.final_model));
}

TEST_CASE("one full-batch local step aggregates to the centralized step") {
    const Dataset train = tiny_dataset(33);
    const auto shards = tiny_shards(train, 3, 34);

    TrainConfig cfg = tiny_config();
    cfg.rounds = 1;
    cfg.local_epochs = 1;
    cfg.batch_size = static_cast<int>(train.size());  // one batch per shard
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    cfg.learning_rate = 0.1;
    cfg.seed = 40;

    const RunResult run = run_training(cfg, train, train, shards);

    // centralized full-batch step from the same initialization
    Rng init(mix_seed(cfg.seed, kInitStream));
    MlpModel model = make_mlp({4, 6, 3}, cfg.activation, init);
    const ForwardTrace trace = forward(model, train.features);
    const CrossEntropyResult ce = cross_entropy(trace.output, train.labels);
    GradSet grads = backward_bp(model, trace, ce.dlogits);

    // weight the per-shard means like the aggregator does
    OptimizerState opt;
    opt.learning_rate = 0.1;
    opt.momentum = 0.0;
    opt.weight_decay = 0.0;
    sgd_step(model, grads, opt);

    const std::vector<double> fed = flatten(run.final_model);
    const std::vector<double> central = flatten(model);
    REQUIRE(fed.size() == central.size());
    double gap = 0.0;
    for (std::size_t i = 0; i < fed.size(); ++i) gap = std::max(gap, std::abs(fed[i] - central[i]));
    CHECK(gap <= 1e-10);
}

TEST_CASE("training is deterministic and worker-count invariant") {
    const Dataset train = tiny_dataset(50);
    const Dataset eval = gen_blobs(3, 4, 10, 1.0, 51);
    const auto shards = tiny_shards(train, 3, 52);

    TrainConfig cfg = tiny_config();
    cfg.rounds = 3;
    cfg.backward = BackwardKind::FeedbackAlign;
    cfg.layer_strategy = LayerStrategy::Lowest;
    cfg.client_fraction = 0.7;

    const RunResult a = run_training(cfg, train, eval, shards);
    const RunResult b = run_training(cfg, train, eval, shards);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t r = 0; r < a.records.size(); ++r)
        CHECK(records_equal(a.records[r], b.records[r]));
    CHECK(flatten(a.final_model) == flatten(b.final_model));

    TrainConfig pooled = cfg;
    pooled.workers = 3;
    const RunResult c = run_training(pooled, train, eval, shards);
    for (std::size_t r = 0; r < a.records.size(); ++r)
        CHECK(records_equal(a.records[r], c.records[r]));
    CHECK(flatten(a.final_model) == flatten(c.final_model));
}

TEST_CASE("trace mode records every local step") {
    const Dataset train = tiny_dataset(60);
    const auto shards = tiny_shards(train, 2, 61);

    TrainConfig cfg = tiny_config();
    cfg.rounds = 2;
    cfg.local_epochs = 2;
    cfg.batch_size = 32;
    cfg.max_batches_per_epoch = 2;
    cfg.trace_mode = true;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    cfg.lr_decay = 1.0;  // keep eta constant so every round records the same rate

    const RunResult run = run_training(cfg, train, train, shards);
    REQUIRE(run.traces.size() == 2);
    for (const auto& round : run.traces) {
        REQUIRE(round.size() == 2);
        for (const auto& trace : round) {
            const std::size_t shard_size =
                shards[static_cast<std::size_t>(trace.client_id)].sample_count();
            const std::size_t per_epoch = std::min<std::size_t>(2, (shard_size + 31) / 32);
            CHECK(trace.steps.size() == 2 * per_epoch);
            CHECK(trace.eta == cfg.learning_rate);
            for (const auto& step : trace.steps) {
                CHECK(step.layers.size() == 2);
                CHECK(step.layers[0].weight_post.rows() == 6);
            }
        }
    }
}

}  // TEST_SUITE
