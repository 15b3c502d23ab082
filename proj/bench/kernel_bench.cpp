// Serial reference loops against the OpenMP kernels on pipeline-sized inputs.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <vector>

#include "magr/kernels.hpp"
#include "magr/rng.hpp"
#include "magr/tensor.hpp"

namespace {

magr::DenseMatrix random_dense(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  magr::SeededRng rng(seed);
  magr::DenseMatrix m(rows, cols);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

magr::SparseRowMatrix random_sparse(std::size_t n, std::size_t per_row, std::uint64_t seed) {
  magr::SeededRng rng(seed);
  std::vector<std::size_t> offsets{0}, indices;
  std::vector<double> values;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> cols;
    while (cols.size() < per_row) {
      const std::size_t j = rng.uniform_index(n);
      bool dup = false;
      for (std::size_t c : cols) dup = dup || c == j;
      if (!dup) cols.push_back(j);
    }
    std::sort(cols.begin(), cols.end());
    for (std::size_t c : cols) {
      indices.push_back(c);
      values.push_back(1.0 / static_cast<double>(per_row));
    }
    offsets.push_back(indices.size());
  }
  return {n, n, std::move(offsets), std::move(indices), std::move(values)};
}

constexpr std::size_t kNodes = 20000;
constexpr std::size_t kDim = 64;

void BM_SpmmSerial(benchmark::State& state) {
  const auto a = random_sparse(kNodes, static_cast<std::size_t>(state.range(0)), 1);
  const auto b = random_dense(kNodes, kDim, 2);
  for (auto _ : state) benchmark::DoNotOptimize(magr::serial::spmm(a, b));
}
void BM_SpmmParallel(benchmark::State& state) {
  const auto a = random_sparse(kNodes, static_cast<std::size_t>(state.range(0)), 1);
  const auto b = random_dense(kNodes, kDim, 2);
  for (auto _ : state) benchmark::DoNotOptimize(magr::spmm(a, b));
}
BENCHMARK(BM_SpmmSerial)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SpmmParallel)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_NormalizeSerial(benchmark::State& state) {
  const auto m = random_dense(kNodes, kDim, 3);
  for (auto _ : state) benchmark::DoNotOptimize(magr::serial::l2_normalize_rows(m));
}
void BM_NormalizeParallel(benchmark::State& state) {
  const auto m = random_dense(kNodes, kDim, 3);
  for (auto _ : state) benchmark::DoNotOptimize(magr::l2_normalize_rows(m));
}
BENCHMARK(BM_NormalizeSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NormalizeParallel)->Unit(benchmark::kMillisecond);

void BM_SoftmaxSerial(benchmark::State& state) {
  const auto a = random_sparse(kNodes, 32, 4);
  const auto logits = random_dense(1, a.nnz(), 5).data();
  for (auto _ : state)
    benchmark::DoNotOptimize(magr::serial::row_softmax_grouped(logits, a.offsets()));
}
void BM_SoftmaxParallel(benchmark::State& state) {
  const auto a = random_sparse(kNodes, 32, 4);
  const auto logits = random_dense(1, a.nnz(), 5).data();
  for (auto _ : state) benchmark::DoNotOptimize(magr::row_softmax_grouped(logits, a.offsets()));
}
BENCHMARK(BM_SoftmaxSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SoftmaxParallel)->Unit(benchmark::kMillisecond);

void BM_MatmulNtSerial(benchmark::State& state) {
  const auto a = random_dense(2000, kDim, 6);
  const auto b = random_dense(2000, kDim, 7);
  for (auto _ : state) benchmark::DoNotOptimize(magr::serial::matmul_nt(a, b));
}
void BM_MatmulNtParallel(benchmark::State& state) {
  const auto a = random_dense(2000, kDim, 6);
  const auto b = random_dense(2000, kDim, 7);
  for (auto _ : state) benchmark::DoNotOptimize(magr::matmul_nt(a, b));
}
BENCHMARK(BM_MatmulNtSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MatmulNtParallel)->Unit(benchmark::kMillisecond);

void BM_TopKSerial(benchmark::State& state) {
  const auto m = random_dense(2000, kDim, 8);
  for (auto _ : state) benchmark::DoNotOptimize(magr::serial::top_k_cosine(m, m, 10, true));
}
void BM_TopKParallel(benchmark::State& state) {
  const auto m = random_dense(2000, kDim, 8);
  for (auto _ : state) benchmark::DoNotOptimize(magr::top_k_cosine(m, m, 10, true));
}
BENCHMARK(BM_TopKSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TopKParallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
