#pragma once

#include "colberter/synth.hpp"
#include "colberter/train.hpp"

namespace colberter::fixtures {

struct TrainFixture {
  synth::Collection collection;
  std::vector<PreparedTriple> batch;
  ReductionHeads heads;
};

inline TrainFixture make_train_fixture(std::uint64_t seed, std::size_t triples, HeadDims dims) {
  synth::Options so;
  so.seed = seed;
  so.docs = 30;
  so.content_words = 40;
  so.min_doc_words = 4;
  so.max_doc_words = 10;
  so.queries = 10;
  auto collection = synth::make_collection(so);
  const ReferenceEncoder encoder({seed, dims.encoder, 2});
  std::vector<PreparedTriple> batch;
  for (const auto& t : synth::make_triples(collection, triples, seed)) {
    batch.push_back(prepare_triple(t, collection.vocab, encoder, true));
  }
  return {std::move(collection), std::move(batch), ReductionHeads::initialize(dims, seed)};
}

}  // namespace colberter::fixtures
