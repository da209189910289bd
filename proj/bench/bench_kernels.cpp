// Serial reference vs OpenMP paths of the tree kernels, plus whole-forest training.
//
//   ./bench_kernels --benchmark_filter=Gini
//
// Arg(0) is the serial path, Arg(1) the parallel one.

#include <numeric>

#include <benchmark/benchmark.h>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "c2al/kernels.hpp"
#include "c2al/learners.hpp"
#include "c2al/rng.hpp"

using namespace c2al;
using kernels::Exec;

namespace {

struct Problem {
  Matrix x;
  std::vector<Label> y;
  std::vector<double> grad;
  std::vector<double> hess;
  std::vector<std::size_t> rows;
  std::vector<std::size_t> features;
};

const Problem& problem() {
  static const Problem p = [] {
    constexpr std::size_t n = 20000;
    constexpr std::size_t m = 20;
    Rng rng(1);
    Problem out{Matrix(n, m), std::vector<Label>(n), std::vector<double>(n), std::vector<double>(n), {}, {}};
    for (std::size_t r = 0; r < n; ++r) {
      out.y[r] = static_cast<Label>(r % 2);
      for (std::size_t c = 0; c < m; ++c) out.x(r, c) = rng.normal() + (out.y[r] && c < 5 ? 0.7 : 0.0);
      out.grad[r] = rng.normal();
      out.hess[r] = rng.uniform(0.05, 0.25);
    }
    out.rows.resize(n);
    std::iota(out.rows.begin(), out.rows.end(), std::size_t{0});
    out.features.resize(m);
    std::iota(out.features.begin(), out.features.end(), std::size_t{0});
    return out;
  }();
  return p;
}

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::parallel : Exec::serial; }

void BM_GiniSplit(benchmark::State& state) {
  const auto& p = problem();
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::best_gini_split(p.x, p.y, p.rows, p.features, 1, exec_of(state)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.rows.size() * p.features.size()));
}

void BM_GradientSplit(benchmark::State& state) {
  const auto& p = problem();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        kernels::best_gradient_split(p.x, p.grad, p.hess, p.rows, p.features, 1.0, 1, exec_of(state)));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.rows.size() * p.features.size()));
}

void BM_SumTrees(benchmark::State& state) {
  const auto& p = problem();
  auto kind = LearnerKind::defaults(LearnerTag::gbm);
  kind.n_trees = 100;
  const auto model = train(kind, p.x, p.y, 1);
  const auto& trees = std::get<BoostParams>(model.params).trees;
  std::vector<double> out(p.x.rows());
  for (auto _ : state) {
    kernels::sum_tree_predictions(trees, p.x, out, exec_of(state));
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.x.rows() * trees.size()));
}

void BM_ForestTraining(benchmark::State& state) {
  const auto& p = problem();
  auto kind = LearnerKind::defaults(LearnerTag::random_forest);
  kind.n_trees = 20;
#ifdef _OPENMP
  const int saved = omp_get_max_threads();
  omp_set_num_threads(state.range(0) ? saved : 1);
#endif
  for (auto _ : state) benchmark::DoNotOptimize(train(kind, p.x, p.y, 1));
#ifdef _OPENMP
  omp_set_num_threads(saved);
#endif
}

}  // namespace

BENCHMARK(BM_GiniSplit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GradientSplit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SumTrees)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForestTraining)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
