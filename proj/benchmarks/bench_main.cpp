#include "counterlens/ensemble.hpp"
#include "counterlens/mvtb.hpp"
#include "counterlens/regressors.hpp"
#include "counterlens/synth.hpp"
#include "counterlens/tree.hpp"

#include <benchmark/benchmark.h>

using namespace counterlens;

namespace {

const SynthResult& data() {
    static const SynthResult d = [] {
        SynthRecipe r;
        r.seed = 7;
        return generate(r.with_construction(Construction::hinge));
    }();
    return d;
}

void BM_GrowTree(benchmark::State& state) {
    const auto x = data().dataset.predictors();
    const Vector y = data().dataset.metric("runtime");
    const SortedColumns sorted(x.values);
    std::vector<double> w(static_cast<std::size_t>(x.rows()), 1.0), gain;
    TreeParams params;
    params.max_depth = static_cast<int>(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(grow_tree(x.values, sorted, y, w, params, nullptr, gain));
}
BENCHMARK(BM_GrowTree)->Arg(3)->Arg(0);

void BM_Fit(benchmark::State& state) {
    const auto method = static_cast<Method>(state.range(0));
    state.SetLabel(std::string(to_string(method)));
    const auto x = data().dataset.predictors();
    const Vector y = data().dataset.metric("runtime");
    for (auto _ : state)
        benchmark::DoNotOptimize(fit({method, {}, 1, {}}, x, y));
}
BENCHMARK(BM_Fit)->DenseRange(0, 9)->Unit(benchmark::kMillisecond);

void BM_Nnls(benchmark::State& state) {
    Rng rng(1);
    Matrix a(400, 10);
    Vector b(400);
    for (Index i = 0; i < 400; ++i) {
        b[i] = rng.normal();
        for (Index j = 0; j < 10; ++j)
            a(i, j) = b[i] + rng.normal();
    }
    for (auto _ : state)
        benchmark::DoNotOptimize(nnls(a, b));
}
BENCHMARK(BM_Nnls);

void BM_Mvtb(benchmark::State& state) {
    const auto x = data().dataset.predictors();
    MvtbOptions o;
    o.n_trees = static_cast<int>(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(
            fit_mvtb(x, data().dataset.metrics(), {kMetricNames.begin(), kMetricNames.end()}, o));
}
BENCHMARK(BM_Mvtb)->Arg(1000)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
