#include <benchmark/benchmark.h>

#include <memory>
#include <random>

#include "colberter/index.hpp"
#include "colberter/retrieve.hpp"
#include "colberter/score.hpp"
#include "colberter/synth.hpp"
#include "colberter/tokenizer.hpp"
#include "colberter/train.hpp"

using namespace colberter;

namespace {

struct Corpus {
  synth::Collection collection;
  std::unique_ptr<IndexSet> index;
};

// Built once per size; the first benchmark touching a size pays for it.
const Corpus& corpus(std::size_t docs) {
  static std::map<std::size_t, Corpus> cache;
  auto it = cache.find(docs);
  if (it != cache.end()) return it->second;
  synth::Options so;
  so.seed = 7;
  so.docs = docs;
  so.queries = 64;
  Corpus c{synth::make_collection(so), nullptr};
  IndexConfig config;
  config.exact_match = true;
  const auto heads = ReductionHeads::initialize({64, 32, 8, 0}, 7);
  c.index = std::make_unique<IndexSet>(IndexSet::build(c.collection.docs, c.collection.vocab, heads, config,
                                                       ReferenceEncoderConfig{7, 64, 2}));
  return cache.emplace(docs, std::move(c)).first->second;
}

}  // namespace

static void BM_Tokenize(benchmark::State& state) {
  const auto& c = corpus(1000);
  std::size_t i = 0, bytes = 0;
  for (auto _ : state) {
    const auto& text = c.collection.docs[i++ % c.collection.docs.size()].text;
    benchmark::DoNotOptimize(tokenize(text, c.collection.vocab, true));
    bytes += text.size();
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(bytes));
}
BENCHMARK(BM_Tokenize);

static void BM_EncodeQuery(benchmark::State& state) {
  const auto& c = corpus(1000);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(c.index->encode_query(c.collection.queries[i++ % c.collection.queries.size()].text));
  }
}
BENCHMARK(BM_EncodeQuery);

static void BM_BuildIndex(benchmark::State& state) {
  const auto& c = corpus(static_cast<std::size_t>(state.range(0)));
  IndexConfig config;
  config.exact_match = true;
  config.threads = 1;
  const auto& heads = c.index->heads();
  for (auto _ : state) {
    benchmark::DoNotOptimize(IndexSet::build(c.collection.docs, c.collection.vocab, heads, config,
                                             ReferenceEncoderConfig{7, 64, 2}));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildIndex)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_ScorePair(benchmark::State& state) {
  const auto& c = corpus(1000);
  const auto q = c.index->encode_query(c.collection.queries[0].text);
  const auto p = c.index->passage(0);
  const bool em = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(score_pair(q, p, c.index->heads(), em));
}
BENCHMARK(BM_ScorePair)->Arg(0)->Arg(1);

static void BM_DenseTopk(benchmark::State& state) {
  const auto& c = corpus(static_cast<std::size_t>(state.range(0)));
  const auto q = c.index->encode_query(c.collection.queries[0].text);
  for (auto _ : state) benchmark::DoNotOptimize(c.index->dense_topk(q.cls, 100));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DenseTopk)->Arg(1000)->Arg(10000);

static void BM_SparseTopk(benchmark::State& state) {
  const auto& c = corpus(static_cast<std::size_t>(state.range(0)));
  const auto q = c.index->encode_query(c.collection.queries[0].text);
  for (auto _ : state) benchmark::DoNotOptimize(c.index->sparse_topk(q, 100));
}
BENCHMARK(BM_SparseTopk)->Arg(1000)->Arg(10000);

static void BM_Search(benchmark::State& state) {
  const auto& c = corpus(10000);
  const auto w = static_cast<Workflow>(state.range(0));
  state.SetLabel(std::string(workflow_name(w)));
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& q = c.collection.queries[i++ % c.collection.queries.size()];
    benchmark::DoNotOptimize(search(*c.index, q.text, SearchOptions{w, 10, 1000}));
  }
}
BENCHMARK(BM_Search)->DenseRange(0, 4)->Unit(benchmark::kMicrosecond);

static void BM_TrainStep(benchmark::State& state) {
  const auto& c = corpus(1000);
  const ReferenceEncoder encoder({7, 64, 2});
  std::vector<PreparedTriple> batch;
  for (const auto& t : synth::make_triples(c.collection, static_cast<std::size_t>(state.range(0)), 7)) {
    batch.push_back(prepare_triple(t, c.collection.vocab, encoder, true));
  }
  auto heads = ReductionHeads::initialize({64, 32, 8, 0}, 7);
  TrainOptions options;
  options.weights = {1, 0.1, 0.05};
  for (auto _ : state) benchmark::DoNotOptimize(train_step(batch, heads, options, 1e-4));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_WordHash(benchmark::State& state) {
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(word_hash("doxycycline" + std::to_string(i++)));
}
BENCHMARK(BM_WordHash);

BENCHMARK_MAIN();
