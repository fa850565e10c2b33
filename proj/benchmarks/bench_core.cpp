// Microbenchmarks for the hot paths: dense matmul, forward/backward, and one
// full local training round.
#include <benchmark/benchmark.h>

#include "fedalign/data.hpp"
#include "fedalign/federation.hpp"
#include "fedalign/nn.hpp"
#include "fedalign/rng.hpp"

namespace {

using namespace fedalign;

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t k = 0; k < m.size(); ++k) m.values()[k] = rng.normal();
    return m;
}

void BM_Matmul(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Rng rng(7);
    const Matrix a = random_matrix(n, n, rng);
    const Matrix b = random_matrix(n, n, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(matmul(a, b));
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_ForwardBackward(benchmark::State& state) {
    const std::size_t batch = static_cast<std::size_t>(state.range(0));
    Rng rng(7);
    MlpModel model = make_mlp({20, 32, 5}, ActivationKind::ReLU, rng);
    const Matrix features = random_matrix(20, batch, rng);
    std::vector<int> labels;
    for (std::size_t s = 0; s < batch; ++s) {
        labels.push_back(static_cast<int>(rng.below(5)));
    }
    for (auto _ : state) {
        const ForwardTrace trace = forward(model, features);
        const CrossEntropyResult ce = cross_entropy(trace.output, labels);
        benchmark::DoNotOptimize(backward_bp(model, trace, ce.dlogits));
    }
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(64)->Arg(256);

void BM_LocalRound(benchmark::State& state) {
    const Dataset dataset = gen_blobs(5, 20, 200, 1.0, 11);
    PartitionSpec spec;
    spec.clients = 10;
    spec.beta = 0.3;
    spec.seed = 11;
    const std::vector<ClientShard> shards = partition_dirichlet_nonempty(dataset, spec);

    Rng rng(7);
    const MlpModel global = make_mlp({20, 32, 5}, ActivationKind::ReLU, rng);
    TrainConfig cfg;
    cfg.hidden = {32};
    cfg.local_epochs = 3;
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            local_train(dataset, shards[0], global, cfg, {}, cfg.learning_rate, 99, nullptr));
    }
}
BENCHMARK(BM_LocalRound);

}  // namespace

BENCHMARK_MAIN();
