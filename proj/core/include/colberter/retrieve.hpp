#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "colberter/index.hpp"
#include "colberter/score.hpp"

namespace colberter {

/// Query-time workflows. Numeral aliases: HYBRID=1, DENSE_THEN_TOKEN=2,
/// SPARSE_THEN_CLS=3, DENSE_ONLY=4, SPARSE_ONLY=5.
enum class Workflow { hybrid, sparse_then_cls, dense_then_token, dense_only, sparse_only };

std::string_view workflow_name(Workflow w);
int workflow_numeral(Workflow w);
/// Accepts canonical names (case-insensitive) or the numeral alias.
std::optional<Workflow> parse_workflow(std::string_view text);
bool requires_exact_match(Workflow w);

struct RankedEntry {
  std::uint32_t ordinal = 0;
  std::string doc_id;
  ScoreBreakdown breakdown;
};

struct RankedList {
  Workflow workflow = Workflow::dense_then_token;
  std::size_t candidate_count = 0;
  std::vector<RankedEntry> entries;
};

std::size_t default_candidate_count(std::size_t k);

struct SearchOptions {
  Workflow workflow = Workflow::dense_then_token;
  std::size_t k = 10;
  std::optional<std::size_t> k_cand;  // default_candidate_count(k) when unset
};

RankedList search(const IndexSet& index, const EncodedText& query, const SearchOptions& options);
RankedList search(const IndexSet& index, std::string_view query_text, const SearchOptions& options);

/// Scores the union of both candidate lists on both components, filling the
/// missing one from the id-keyed stores, and keeps the top k.
RankedList merge_hybrid(const IndexSet& index, const EncodedText& query,
                        std::span<const ScoredDoc> dense, std::span<const ScoredDoc> sparse,
                        std::size_t k);

}  // namespace colberter
