#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "colberter/evaluation.hpp"
#include "colberter/tokenizer.hpp"
#include "colberter/train.hpp"

namespace colberter::synth {

/// Deterministic toy collections for tests, benchmarks and smoke runs.
struct Options {
  std::uint64_t seed = 1;
  std::size_t content_words = 400;
  std::size_t docs = 500;
  std::size_t min_doc_words = 12;
  std::size_t max_doc_words = 40;
  std::size_t queries = 50;
  std::size_t query_words = 3;
};

struct Query {
  std::string id;
  std::string text;
};

struct Collection {
  Vocabulary vocab;
  std::vector<std::string> content_words;
  std::vector<Document> docs;
  std::vector<Query> queries;
  Qrels qrels;
};

/// Function words that the stopword gate is expected to learn to drop.
const std::vector<std::string>& function_words();

Collection make_collection(const Options& options);

/// Triples (query, source doc, other doc) with a lexical-overlap teacher.
std::vector<TrainTriple> make_triples(const Collection& collection, std::size_t count,
                                      std::uint64_t seed);

/// Fraction of query words that occur in the passage, scaled to [0, 10].
double overlap_teacher(std::string_view query, std::string_view passage);

/// "qid\ttext" lines.
void write_queries(const std::filesystem::path& path, const std::vector<Query>& queries);
std::vector<Query> read_queries(const std::filesystem::path& path);

}  // namespace colberter::synth
