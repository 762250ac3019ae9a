#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "ktune/baselines.hpp"
#include "ktune/batch.hpp"

namespace {

using namespace ktune;

struct Fixture {
  Model model = Model::two_layer_tanh(8);
  Readout readout = Readout::canonical(1, 8);
  Ensemble ensemble;
  ControlSignal u;
  std::vector<Index> indices;

  explicit Fixture(Index q)
      : ensemble(generate_ball_dataset({q, 1, 0.1, 2.0})),
        u(initial_control(model, 10, 1.0, 0.1, 3)),
        indices(static_cast<std::size_t>(q)) {
    std::iota(indices.begin(), indices.end(), Index{1});
  }
};

template <auto Kernel>
void run(benchmark::State& state) {
  const Fixture f(state.range(0));
  for (auto _ : state) {
    auto result = Kernel(f.model, f.u, f.ensemble, f.indices, f.readout);
    benchmark::DoNotOptimize(result);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void sizes(benchmark::internal::Benchmark* b) {
  for (int q : {16, 64, 256, 1024}) b->Arg(q);
  b->Unit(benchmark::kMicrosecond)->UseRealTime();
}

}  // namespace

BENCHMARK(run<serial::linearize_samples>)->Name("linearize/serial")->Apply(sizes);
BENCHMARK(run<parallel::linearize_samples>)->Name("linearize/parallel")->Apply(sizes);
BENCHMARK(run<serial::gradient_sum>)->Name("gradient_sum/serial")->Apply(sizes);
BENCHMARK(run<parallel::gradient_sum>)->Name("gradient_sum/parallel")->Apply(sizes);

BENCHMARK_MAIN();
