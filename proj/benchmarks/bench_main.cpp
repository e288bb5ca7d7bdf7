#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "alea/diffnet.hpp"
#include "alea/losses.hpp"
#include "alea/synth_data.hpp"

namespace {

using namespace alea;

std::vector<double> random_batch(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

void run_forward(benchmark::State& state, const nn::NetworkSpec& spec) {
  const nn::Network net(spec);
  const auto params = net.init_params(1);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto in = random_batch(batch * net.input_size(), 2);
  for (auto _ : state) {
    auto out = net.forward(params, in, batch);
    benchmark::DoNotOptimize(out.values.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void run_step(benchmark::State& state, const nn::NetworkSpec& spec) {
  const nn::Network net(spec);
  auto params = net.init_params(1);
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto in = random_batch(batch * net.input_size(), 2);
  nn::ForwardCache cache;
  for (auto _ : state) {
    const auto out = net.forward(params, in, batch, &cache);
    std::vector<double> g(out.values.size(), 1.0 / static_cast<double>(batch));
    net.backward(params, cache, g);
    benchmark::DoNotOptimize(params.grads.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_MlpForward(benchmark::State& state) { run_forward(state, nn::build_mlp_0d(nn::mve_heads())); }
void BM_MlpForwardBackward(benchmark::State& state) { run_step(state, nn::build_mlp_0d(nn::mve_heads())); }
void BM_CnnForward(benchmark::State& state) { run_forward(state, nn::build_cnn_2d(nn::der_heads())); }
void BM_CnnForwardBackward(benchmark::State& state) { run_step(state, nn::build_cnn_2d(nn::der_heads())); }

BENCHMARK(BM_MlpForward)->Arg(128)->Arg(512);
BENCHMARK(BM_MlpForwardBackward)->Arg(128);
BENCHMARK(BM_CnnForward)->Arg(32);
BENCHMARK(BM_CnnForwardBackward)->Arg(32);

void BM_StLogPdf(benchmark::State& state) {
  const loss::NIGHead h{0.3, 1.5, 2.5, 0.7};
  double y = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(loss::st_log_pdf(y, h));
    y += 1e-3;
  }
}
BENCHMARK(BM_StLogPdf);

void BM_RenderSersic(benchmark::State& state) {
  const data::SersicParams p{0.008, 5.0, 0.4};
  for (auto _ : state) {
    auto img = data::render_sersic(p);
    benchmark::DoNotOptimize(img.data());
  }
}
BENCHMARK(BM_RenderSersic);

}  // namespace

BENCHMARK_MAIN();
