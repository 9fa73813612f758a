#include <benchmark/benchmark.h>

#include <random>

#include "mose/kernels.hpp"

namespace {

mose::Matrix random_matrix(std::size_t rows, std::size_t cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  mose::Matrix m(rows, cols);
  for (auto& v : m.values()) v = normal(rng);
  return m;
}

// Arguments: batch rows, input width, output width.
void configure(benchmark::internal::Benchmark* b) {
  b->Args({20, 32, 64})->Args({128, 64, 64})->Args({512, 128, 128})->Args({1000, 64, 10});
}

template <void (*Forward)(const mose::Matrix&, const mose::Matrix&, const mose::Matrix&, mose::Matrix&)>
void BM_forward(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto in_w = static_cast<std::size_t>(state.range(1));
  const auto out_w = static_cast<std::size_t>(state.range(2));
  const auto in = random_matrix(rows, in_w, 1);
  const auto w = random_matrix(out_w, in_w, 2);
  const auto bias = random_matrix(1, out_w, 3);
  mose::Matrix out;
  for (auto _ : state) {
    Forward(in, w, bias, out);
    benchmark::DoNotOptimize(out.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(rows * in_w * out_w));
}

template <void (*Backward)(const mose::Matrix&, const mose::Matrix&, mose::Matrix&, mose::Matrix&)>
void BM_backward_params(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto in_w = static_cast<std::size_t>(state.range(1));
  const auto out_w = static_cast<std::size_t>(state.range(2));
  const auto gout = random_matrix(rows, out_w, 4);
  const auto in = random_matrix(rows, in_w, 5);
  mose::Matrix gw(out_w, in_w), gb(1, out_w);
  for (auto _ : state) {
    Backward(gout, in, gw, gb);
    benchmark::DoNotOptimize(gw.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(rows * in_w * out_w));
}

template <void (*Backward)(const mose::Matrix&, const mose::Matrix&, mose::Matrix&)>
void BM_backward_input(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto in_w = static_cast<std::size_t>(state.range(1));
  const auto out_w = static_cast<std::size_t>(state.range(2));
  const auto gout = random_matrix(rows, out_w, 6);
  const auto w = random_matrix(out_w, in_w, 7);
  mose::Matrix gin;
  for (auto _ : state) {
    Backward(gout, w, gin);
    benchmark::DoNotOptimize(gin.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(rows * in_w * out_w));
}

}  // namespace

BENCHMARK(BM_forward<mose::kernels::serial::linear_forward>)->Name("forward/serial")->Apply(configure);
BENCHMARK(BM_forward<mose::kernels::parallel::linear_forward>)->Name("forward/parallel")->Apply(configure);
BENCHMARK(BM_backward_params<mose::kernels::serial::linear_backward_params>)
    ->Name("backward_params/serial")
    ->Apply(configure);
BENCHMARK(BM_backward_params<mose::kernels::parallel::linear_backward_params>)
    ->Name("backward_params/parallel")
    ->Apply(configure);
BENCHMARK(BM_backward_input<mose::kernels::serial::linear_backward_input>)
    ->Name("backward_input/serial")
    ->Apply(configure);
BENCHMARK(BM_backward_input<mose::kernels::parallel::linear_backward_input>)
    ->Name("backward_input/parallel")
    ->Apply(configure);

BENCHMARK_MAIN();
