#include <benchmark/benchmark.h>

#include "gim/oracle_sim.hpp"
#include "gim/qnet.hpp"
#include "gim/trainer.hpp"

namespace {

const gim::Dataset& season() {
  static const gim::Dataset ds = [] {
    gim::sim::SimSpec spec;
    return gim::ingest_games(gim::sim::season_games(gim::sim::simulate_season(spec, 8, 11)),
                             gim::ActionVocabulary::default_hockey());
  }();
  return ds;
}

gim::NetworkParams network(std::size_t width) {
  gim::NetworkConfig net;
  net.input_width = gim::encoded_width(season().vocabulary.size());
  net.lstm_hidden = width;
  net.dense_widths = {width, width};
  return gim::init_params(net, 1, season().scaler, season().vocabulary);
}

// A full-length window from the middle of the first long possession.
std::span<const gim::EncodedStep> window(int length) {
  for (const auto& s : season().sequences)
    for (std::size_t t = 0; t < s.size(); ++t)
      if (s.trace_lengths[t] >= length) return s.window(t).last(static_cast<std::size_t>(length));
  return {};
}

void BM_Forward(benchmark::State& state) {
  const auto params = network(static_cast<std::size_t>(state.range(0)));
  const auto w = window(static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(gim::forward(params, w));
}
BENCHMARK(BM_Forward)->ArgsProduct({{32, 64, 128}, {1, 10}});

void BM_Backward(benchmark::State& state) {
  const auto params = network(static_cast<std::size_t>(state.range(0)));
  const auto w = window(static_cast<int>(state.range(1)));
  gim::ForwardCache cache;
  gim::forward(params, w, &cache);
  std::vector<double> grad(params.size());
  const gim::QOutput upstream{0.1, -0.2, 0.1};
  for (auto _ : state) {
    gim::backward(params, cache, upstream, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(BM_Backward)->ArgsProduct({{32, 64, 128}, {1, 10}});

void BM_TrainStep(benchmark::State& state) {
  auto params = network(static_cast<std::size_t>(state.range(0)));
  gim::TrainConfig config;
  config.batch_size = 32;
  config.learning_rate = 1e-3;
  config.threads = static_cast<unsigned>(state.range(1));
  const auto transitions = gim::make_transitions(season().sequences);
  std::vector<gim::Transition> batch(transitions.begin(), transitions.begin() + 32);
  gim::TrainWorkspace ws;
  for (auto _ : state) benchmark::DoNotOptimize(gim::train_step(params, season().sequences, batch, config, ws));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_TrainStep)->ArgsProduct({{64}, {1, 4}})->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
