// Serial reference kernels against the OpenMP kernels used by the pipeline.

#include <benchmark/benchmark.h>

#include <omp.h>

#include "hfcloud/edgeprob.hpp"
#include "hfcloud/forest.hpp"
#include "hfcloud/nn_kernels.hpp"
#include "hfcloud/nn_reference.hpp"
#include "hfcloud/rng.hpp"
#include "hfcloud/synthgen.hpp"

using namespace hfcloud;

namespace {

Tensor<float> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo, double hi) {
  Tensor<float> t(n, c, h, w);
  Rng rng(seed);
  for (auto& v : t.data) v = static_cast<float>(uniform(rng, lo, hi));
  return t;
}

struct ConvInputs {
  nn::ConvSpec spec{32, 32, 5, 2};
  Tensor<float> x = random_tensor(16, 32, 16, 16, 1, 0, 1);
  std::vector<float> w = random_tensor(1, 1, 1, 32 * 32 * 25, 2, -0.05, 0.05).data;
  std::vector<float> b = std::vector<float>(32, 0.01f);
};

void BM_conv_reference(benchmark::State& state) {
  ConvInputs in;
  for (auto _ : state) benchmark::DoNotOptimize(nn::reference::conv2d<float>(in.x, in.w, in.b, in.spec));
}

void BM_conv_openmp(benchmark::State& state) {
  ConvInputs in;
  omp_set_num_threads(static_cast<int>(state.range(0)));
  Tensor<float> out;
  for (auto _ : state) {
    nn::conv2d_forward<float>(in.x, in.w, in.b, in.spec, out);
    benchmark::DoNotOptimize(out.data.data());
  }
}

MultiBandImage bench_tile() {
  SceneParams p;
  p.seed = 3;
  return generate_tile(p).image;
}

void BM_edges_reference(benchmark::State& state) {
  const auto img = bench_tile();
  for (auto _ : state) benchmark::DoNotOptimize(reference::gradient_multiscale(img));
}

void BM_edges_openmp(benchmark::State& state) {
  const auto img = bench_tile();
  omp_set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(edge_probability(img));
}

struct ForestInputs {
  FeatureMatrix x{2000, 64};
  std::vector<int> y;
  Forest forest;
  ForestInputs() {
    Rng rng(5);
    for (std::size_t i = 0; i < x.rows; ++i) {
      for (auto& v : x.row(i)) v = static_cast<float>(uniform01(rng));
      y.push_back(static_cast<int>(x.row(i)[0] * 4));
    }
    ForestConfig c;
    c.n_trees = 100;
    c.seed = 1;
    forest = train_forest(x, y, 4, c);
  }
};

void BM_forest_reference(benchmark::State& state) {
  ForestInputs in;
  std::vector<double> out(in.x.rows * 4);
  for (auto _ : state) {
    for (std::size_t i = 0; i < in.x.rows; ++i) in.forest.predict_proba(in.x.row(i), std::span<double>(out.data() + i * 4, 4));
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_forest_openmp(benchmark::State& state) {
  ForestInputs in;
  omp_set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(in.forest.predict_proba(in.x));
}

void thread_counts(benchmark::internal::Benchmark* b) {
  for (int t = 1; t <= omp_get_num_procs(); t *= 2) b->Arg(t);
}

}  // namespace

BENCHMARK(BM_conv_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_conv_openmp)->Apply(thread_counts)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_edges_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_edges_openmp)->Apply(thread_counts)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_forest_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_forest_openmp)->Apply(thread_counts)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
