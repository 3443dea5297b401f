#include <benchmark/benchmark.h>
#include <omp.h>

#include "sanet/dagrnn.hpp"
#include "sanet/layers.hpp"
#include "sanet/model.hpp"
#include "sanet/serial.hpp"

using namespace sanet;

namespace {

Tensor<float> random_tensor(Shape shape, Rng& rng) {
  Tensor<float> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

Conv2dParams<float> conv_params(Rng& rng) {
  return {random_tensor(Shape{5, 5, 16, 32}, rng), random_tensor(Shape{32}, rng), 1, 2};
}

void BM_Conv2dSerial(benchmark::State& state) {
  Rng rng(1);
  const auto x = random_tensor(Shape{48, 48, 16}, rng);
  const auto p = conv_params(rng);
  for (auto _ : state) benchmark::DoNotOptimize(serial::conv2d_forward(x, p));
}

void BM_Conv2dParallel(benchmark::State& state) {
  Rng rng(1);
  const auto x = random_tensor(Shape{48, 48, 16}, rng);
  const auto p = conv_params(rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, p));
}

struct DagRnnCase {
  Tensor<float> x;
  std::array<LatticeDag, 4> dags;
  DagRnnParams<float> params;

  explicit DagRnnCase(std::size_t side) : x(Shape{side, side, 16}) {
    Rng rng(2);
    x = random_tensor(Shape{side, side, 16}, rng);
    dags = build_lattice_dags(side, side, Connectivity::eight);
    params = init_dagrnn_params<float>(16, 32, 16, Connectivity::eight, rng);
  }
};

void BM_DagRnnSerial(benchmark::State& state) {
  const DagRnnCase c(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(serial::dagrnn_forward<float>(c.x, c.dags, c.params));
}

void BM_DagRnnParallel(benchmark::State& state) {
  const DagRnnCase c(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(dagrnn_forward<float>(c.x, c.dags, c.params));
}

// Candidate scoring with a fixed number of OpenMP threads; 1 is the serial baseline.
void BM_ScoreCandidates(benchmark::State& state) {
  const auto net = build_network<float>(SanetConfig::tiny(), 3);
  Rng rng(4);
  std::vector<Tensor<float>> patches;
  for (int i = 0; i < 64; ++i) patches.push_back(random_tensor(Shape{35, 35, 3}, rng));
  const int before = omp_get_max_threads();
  omp_set_num_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward_scores(net, patches, 0));
  omp_set_num_threads(before);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(patches.size()));
}

}  // namespace

BENCHMARK(BM_Conv2dSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv2dParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DagRnnSerial)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DagRnnParallel)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScoreCandidates)->DenseRange(1, 4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
