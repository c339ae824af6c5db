// Serial reference vs OpenMP kernels. Pass --benchmark_filter=knn etc. to narrow.

#include <benchmark/benchmark.h>

#include <numeric>
#include <random>

#include "cellscout/bench.hpp"
#include "cellscout/kernels.hpp"
#include "cellscout/loss.hpp"
#include "cellscout/moe_model.hpp"

using namespace cellscout;

namespace {

std::vector<double> random_points(std::size_t n) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> d(0, 1);
    std::vector<double> pts(2 * n);
    for (double& v : pts) v = d(rng);
    return pts;
}

template <class Fn>
void run_points(benchmark::State& state, Fn fn) {
    const auto pts = random_points(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(fn(kernels::PointView{pts, 2}));
    state.SetComplexityN(state.range(0));
}

void BM_pairwise_serial(benchmark::State& s) { run_points(s, kernels::serial::pairwise_sq_distances); }
void BM_pairwise_omp(benchmark::State& s) { run_points(s, kernels::pairwise_sq_distances); }
void BM_knn_serial(benchmark::State& s) {
    run_points(s, [](kernels::PointView v) { return kernels::serial::knn_indices(v, 5); });
}
void BM_knn_omp(benchmark::State& s) {
    run_points(s, [](kernels::PointView v) { return kernels::knn_indices(v, 5); });
}
void BM_delta_serial(benchmark::State& s) {
    run_points(s, [](kernels::PointView v) { return kernels::serial::mean_knn_distance(v, 5); });
}
void BM_delta_omp(benchmark::State& s) {
    run_points(s, [](kernels::PointView v) { return kernels::mean_knn_distance(v, 5); });
}
void BM_radius_serial(benchmark::State& s) {
    run_points(s, [](kernels::PointView v) { return kernels::serial::radius_neighbors(v, 0.05); });
}
void BM_radius_omp(benchmark::State& s) {
    run_points(s, [](kernels::PointView v) { return kernels::radius_neighbors(v, 0.05); });
}

struct ModelFixture {
    ExpressionMatrix matrix;
    MinerConfig config;
    MoEModel model;
    std::vector<std::size_t> cells;

    explicit ModelFixture(std::size_t n_cells)
        : matrix(normalize(generate_synthetic({3, n_cells / 3, 200, 8, 3.0, 1.0, 7}).matrix)),
          config(make_config()),
          model(matrix.n_genes(), config) {
        Rng rng(1);
        model.initialize(rng);
        cells.resize(matrix.n_cells());
        std::iota(cells.begin(), cells.end(), std::size_t{0});
    }

    static MinerConfig make_config() {
        MinerConfig c;
        c.k = 8;
        return c;
    }
};

template <bool Serial>
void BM_forward_backward(benchmark::State& state) {
    ModelFixture f(static_cast<std::size_t>(state.range(0)));
    const auto ctx = LossContext::build(f.matrix, f.config);
    for (auto _ : state) {
        Rng rng(2);
        auto out = Serial ? f.model.forward_serial(f.matrix, f.cells, 0.5, Mode::train, &rng)
                          : f.model.forward(f.matrix, f.cells, 0.5, Mode::train, &rng);
        const auto loss = compute_loss(out, f.matrix, ctx, {});
        benchmark::DoNotOptimize(Serial ? f.model.backward_serial(f.matrix, out, loss.grads)
                                        : f.model.backward(f.matrix, out, loss.grads));
    }
}

}  // namespace

BENCHMARK(BM_pairwise_serial)->RangeMultiplier(4)->Range(256, 4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_pairwise_omp)->RangeMultiplier(4)->Range(256, 4096)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_knn_serial)->RangeMultiplier(4)->Range(256, 4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_knn_omp)->RangeMultiplier(4)->Range(256, 4096)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_delta_serial)->RangeMultiplier(4)->Range(256, 4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_delta_omp)->RangeMultiplier(4)->Range(256, 4096)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_radius_serial)->RangeMultiplier(4)->Range(256, 4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_radius_omp)->RangeMultiplier(4)->Range(256, 4096)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_forward_backward<true>)->Name("BM_forward_backward_serial")->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_forward_backward<false>)
    ->Name("BM_forward_backward_omp")
    ->Arg(256)
    ->Arg(1024)
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

BENCHMARK_MAIN();
