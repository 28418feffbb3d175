#include <benchmark/benchmark.h>

#include <random>

#include "closer/encoder.hpp"
#include "closer/ib.hpp"
#include "closer/losses.hpp"
#include "closer/metrics.hpp"
#include "closer/protocol.hpp"

using namespace closer;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = n(rng);
  return Tensor::matrix(rows, cols, std::move(v));
}

std::vector<int> cyclic_labels(std::size_t n, int classes) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i) % classes;
  return y;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_EmbedForward(benchmark::State& state) {
  const auto p = init_params({32, 128, 128, 16}, 3);
  const Tensor x = random_matrix(static_cast<std::size_t>(state.range(0)), 32, 4);
  for (auto _ : state) benchmark::DoNotOptimize(embed(p, x));
}
BENCHMARK(BM_EmbedForward)->Arg(64)->Arg(256);

void BM_EmbedForwardBackward(benchmark::State& state) {
  const auto p = init_params({32, 128, 128, 16}, 3);
  const Tensor x = random_matrix(64, 32, 4);
  for (auto _ : state) {
    Tape tape;
    const auto bound = p.net.bind(tape, true);
    tape.backward(sum(embed(p, bound, tape.constant(x))));
    benchmark::DoNotOptimize(tape.grad(bound.params[0]));
  }
}
BENCHMARK(BM_EmbedForwardBackward);

void BM_TotalLoss(benchmark::State& state) {
  const std::size_t b = 64, d = 16;
  const Tensor z = random_matrix(b, d, 5), v = random_matrix(b, d, 6), w = random_matrix(20, d, 7);
  const auto y = cyclic_labels(b, 20);
  const LossConfig cfg{.tau = 1.0 / 32.0, .lambda_ssc = 0.1, .lambda_inter = 1.0};
  for (auto _ : state) {
    Tape tape;
    const Var zv = tape.leaf(z), vv = tape.leaf(v), wv = tape.leaf(w);
    auto loss = total_loss(LossBatch{zv, y, wv, vv}, cfg);
    tape.backward(loss.value);
    benchmark::DoNotOptimize(tape.grad(zv));
  }
}
BENCHMARK(BM_TotalLoss);

void BM_Transferability(benchmark::State& state) {
  const Tensor z = random_matrix(400, 16, 8), protos = random_matrix(20, 16, 9);
  for (auto _ : state) benchmark::DoNotOptimize(transferability(z, protos));
}
BENCHMARK(BM_Transferability);

void BM_MineIterations(benchmark::State& state) {
  const Tensor a = random_matrix(1024, 16, 10), b = random_matrix(1024, 16, 11);
  const MineConfig cfg{.hidden = static_cast<std::size_t>(state.range(0)), .iterations = 20};
  for (auto _ : state) benchmark::DoNotOptimize(mine_estimate(a, b, cfg));
  state.SetItemsProcessed(state.iterations() * 20);
}
BENCHMARK(BM_MineIterations)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
