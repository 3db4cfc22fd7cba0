#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "tailret/embed.hpp"
#include "tailret/invert.hpp"
#include "tailret/lexical.hpp"
#include "tailret/train.hpp"

namespace {

using namespace tailret;

std::string random_text(std::mt19937_64& rng, std::size_t words, std::size_t vocab) {
  std::string text;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) text += ' ';
    text += "term" + std::to_string(rng() % vocab);
  }
  return text;
}

PassageStore make_store(std::size_t n) {
  std::mt19937_64 rng(1);
  std::vector<Passage> passages;
  for (std::size_t i = 0; i < n; ++i) {
    passages.push_back({static_cast<PassageId>(i), "title " + std::to_string(i), random_text(rng, 30, 5000)});
  }
  return PassageStore(std::move(passages), {});
}

const FeatureSpace kSpace{1u << 16, 0x7a11u};

void BM_Featurize(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const auto text = random_text(rng, static_cast<std::size_t>(state.range(0)), 5000);
  for (auto _ : state) benchmark::DoNotOptimize(featurize(text, kSpace));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Featurize)->Arg(8)->Arg(64);

void BM_Encode(benchmark::State& state) {
  const auto params = EncoderParams::random(static_cast<std::uint32_t>(state.range(0)), kSpace, true, 3);
  std::mt19937_64 rng(4);
  const auto f = featurize(random_text(rng, 30, 5000), kSpace);
  for (auto _ : state) benchmark::DoNotOptimize(encode(params, f));
}
BENCHMARK(BM_Encode)->Arg(32)->Arg(64);

void BM_SparseTopK(benchmark::State& state) {
  const auto store = make_store(static_cast<std::size_t>(state.range(0)));
  const auto index = build_sparse_index(store);
  std::mt19937_64 rng(5);
  const auto query = tokenize(random_text(rng, 6, 5000));
  for (auto _ : state) benchmark::DoNotOptimize(sparse_top_k(index, query, 10));
}
BENCHMARK(BM_SparseTopK)->Arg(2000)->Arg(20000);

void BM_DenseTopK(benchmark::State& state) {
  const auto store = make_store(static_cast<std::size_t>(state.range(0)));
  const auto params = EncoderParams::random(64, kSpace, true, 6);
  const auto index = build_dense_index(params, store);
  const auto q = encode_text(params, "who was term12 employed by");
  for (auto _ : state) benchmark::DoNotOptimize(dense_top_k(index, q, 10));
}
BENCHMARK(BM_DenseTopK)->Arg(2000)->Arg(20000);

void BM_LossGradient(benchmark::State& state) {
  const auto store = make_store(500);
  const FeatureCache cache(store, kSpace);
  const auto params = EncoderParams::random(64, kSpace, true, 7);
  std::mt19937_64 rng(8);
  std::vector<TrainingExample> batch;
  for (int i = 0; i < 32; ++i) {
    TrainingExample ex{random_text(rng, 6, 5000), static_cast<PassageId>(rng() % 500), {}};
    while (ex.negatives.size() < 4) {
      const auto n = static_cast<PassageId>(rng() % 500);
      if (n != ex.positive && std::find(ex.negatives.begin(), ex.negatives.end(), n) == ex.negatives.end()) {
        ex.negatives.push_back(n);
      }
    }
    batch.push_back(ex);
  }
  const bool in_batch = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(loss_gradient(params, batch, cache, in_batch));
}
BENCHMARK(BM_LossGradient)->Arg(0)->Arg(1);

void BM_Invert(benchmark::State& state) {
  const auto params = EncoderParams::random(32, kSpace, true, 9);
  std::mt19937_64 rng(10);
  std::vector<std::string> texts;
  for (int i = 0; i < 500; ++i) texts.push_back(random_text(rng, 8, 2000));
  InverseConfig config;
  config.epochs = 2;
  const auto model = train_inverse(params, texts, config).model;
  const Inverter inverter(model, params);
  const auto e = encode_text(params, texts[0]);
  for (auto _ : state) benchmark::DoNotOptimize(inverter.invert(e));
}
BENCHMARK(BM_Invert);

}  // namespace

BENCHMARK_MAIN();
