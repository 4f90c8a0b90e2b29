#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "belx/contrast.hpp"
#include "belx/encoder.hpp"
#include "belx/random.hpp"
#include "belx/retrieval.hpp"

namespace {

using namespace belx;

std::vector<float> random_unit(std::mt19937_64& rng, std::size_t d) {
  std::vector<float> v(d);
  double n = 0.0;
  for (auto& x : v) {
    x = static_cast<float>(uniform01(rng) * 2.0 - 1.0);
    n += static_cast<double>(x) * x;
  }
  for (auto& x : v) x = static_cast<float>(x / std::sqrt(n));
  return v;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (auto& x : m.data()) x = uniform01(rng) * 2.0 - 1.0;
  return m;
}

std::vector<std::int64_t> pair_labels(std::size_t n) {
  std::vector<std::int64_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::int64_t>(i / 2);
  return labels;
}

void BM_ExactSearch(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 64;
  std::mt19937_64 rng(7);
  std::vector<float> matrix;
  std::vector<IndexedAlias> records;
  for (std::size_t i = 0; i < rows; ++i) {
    const auto v = random_unit(rng, d);
    matrix.insert(matrix.end(), v.begin(), v.end());
    records.push_back({"a" + std::to_string(i), "C" + std::to_string(i), "en", i});
  }
  const auto index = VectorIndex::from_rows(d, std::move(matrix), std::move(records));
  const auto q = random_unit(rng, d);
  for (auto _ : state) benchmark::DoNotOptimize(index.search(q, 64));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}
BENCHMARK(BM_ExactSearch)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_MsLossGrad(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(11);
  const auto raw = random_matrix(rng, n, 64);
  const auto labels = pair_labels(n);
  const auto sets = build_index_sets(labels);
  const MSLossParams params;
  for (auto _ : state) benchmark::DoNotOptimize(ms_loss_grad(raw, sets, params));
}
BENCHMARK(BM_MsLossGrad)->Arg(32)->Arg(64)->Arg(256);

void BM_HardMining(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(13);
  const auto unit = normalize_rows(random_matrix(rng, n, 64));
  const auto labels = pair_labels(n);
  for (auto _ : state) benchmark::DoNotOptimize(mine_hard_triplets(unit, labels, 0.2));
}
BENCHMARK(BM_HardMining)->Arg(32)->Arg(64)->Arg(256);

void BM_HashedFeatures(benchmark::State& state) {
  const EncoderConfig config;
  const std::string s = "chronic obstructive pulmonary disease";
  for (auto _ : state) benchmark::DoNotOptimize(hashed_ngram_features(s, config));
}
BENCHMARK(BM_HashedFeatures);

}  // namespace
BENCHMARK_MAIN();
