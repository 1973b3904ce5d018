#include "colberter/retrieve.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

#include "colberter/error.hpp"

namespace colberter {

namespace {

struct WorkflowInfo {
  Workflow workflow;
  std::string_view name;
  int numeral;
};

constexpr std::array<WorkflowInfo, 5> kWorkflows{{
    {Workflow::hybrid, "HYBRID", 1},
    {Workflow::dense_then_token, "DENSE_THEN_TOKEN", 2},
    {Workflow::sparse_then_cls, "SPARSE_THEN_CLS", 3},
    {Workflow::dense_only, "DENSE_ONLY", 4},
    {Workflow::sparse_only, "SPARSE_ONLY", 5},
}};

const WorkflowInfo& info(Workflow w) {
  for (const auto& i : kWorkflows) {
    if (i.workflow == w) return i;
  }
  throw Error("unknown workflow");
}

bool entry_before(const RankedEntry& a, const RankedEntry& b) {
  if (a.breakdown.s_total != b.breakdown.s_total) return a.breakdown.s_total > b.breakdown.s_total;
  return a.ordinal < b.ordinal;
}

RankedEntry full_score(const IndexSet& index, const EncodedText& query, std::uint32_t ordinal) {
  const EncodedText passage = index.passage(ordinal);
  return {ordinal, index.doc_id(ordinal),
          score_pair(query, passage, index.heads(), index.manifest().em_enabled)};
}

RankedList rescore(const IndexSet& index, const EncodedText& query,
                   std::span<const std::uint32_t> candidates, std::size_t k, Workflow workflow) {
  RankedList out;
  out.workflow = workflow;
  out.candidate_count = candidates.size();
  out.entries.reserve(candidates.size());
  for (const auto ordinal : candidates) out.entries.push_back(full_score(index, query, ordinal));
  std::sort(out.entries.begin(), out.entries.end(), entry_before);
  if (out.entries.size() > k) out.entries.resize(k);
  return out;
}

std::vector<std::uint32_t> ordinals(std::span<const ScoredDoc> docs) {
  std::vector<std::uint32_t> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(d.ordinal);
  return out;
}

}  // namespace

std::string_view workflow_name(Workflow w) { return info(w).name; }
int workflow_numeral(Workflow w) { return info(w).numeral; }

std::optional<Workflow> parse_workflow(std::string_view text) {
  std::string upper;
  for (const char c : text) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  for (const auto& i : kWorkflows) {
    if (upper == i.name || upper == std::to_string(i.numeral)) return i.workflow;
  }
  return std::nullopt;
}

bool requires_exact_match(Workflow w) {
  return w == Workflow::sparse_then_cls || w == Workflow::sparse_only || w == Workflow::hybrid;
}

std::size_t default_candidate_count(std::size_t k) { return std::max<std::size_t>(1000, 10 * k); }

RankedList merge_hybrid(const IndexSet& index, const EncodedText& query,
                        std::span<const ScoredDoc> dense, std::span<const ScoredDoc> sparse,
                        std::size_t k) {
  std::vector<std::uint32_t> pool;
  std::unordered_set<std::uint32_t> seen;
  for (const auto* list : {&dense, &sparse}) {
    for (const auto& d : *list) {
      if (seen.insert(d.ordinal).second) pool.push_back(d.ordinal);
    }
  }
  return rescore(index, query, pool, k, Workflow::hybrid);
}

RankedList search(const IndexSet& index, const EncodedText& query, const SearchOptions& options) {
  const std::size_t k = options.k;
  const std::size_t k_cand = options.k_cand.value_or(default_candidate_count(k));
  if (k == 0) throw Error("k must be >= 1");
  if (k > k_cand) throw Error("k must not exceed k_cand");
  if (requires_exact_match(options.workflow) && !index.manifest().em_enabled) {
    throw CapabilityError("sparse retrieval requires exact-match build");
  }

  switch (options.workflow) {
    case Workflow::dense_then_token: {
      const auto cands = ordinals(index.dense_topk(query.cls, k_cand));
      return rescore(index, query, cands, k, options.workflow);
    }
    case Workflow::sparse_then_cls: {
      const auto cands = ordinals(index.sparse_topk(query, k_cand));
      return rescore(index, query, cands, k, options.workflow);
    }
    case Workflow::hybrid: {
      const auto dense = index.dense_topk(query.cls, k_cand);
      const auto sparse = index.sparse_topk(query, k_cand);
      return merge_hybrid(index, query, dense, sparse, k);
    }
    case Workflow::dense_only: {
      RankedList out;
      out.workflow = options.workflow;
      const auto hits = index.dense_topk(query.cls, k);
      out.candidate_count = hits.size();
      const double sigma = sigmoid(index.heads().gamma);
      for (const auto& h : hits) {
        ScoreBreakdown b;
        b.s_cls = h.score;
        b.s_total = h.score;
        b.sigma_gamma = sigma;
        out.entries.push_back({h.ordinal, index.doc_id(h.ordinal), std::move(b)});
      }
      return out;
    }
    case Workflow::sparse_only: {
      RankedList out;
      out.workflow = options.workflow;
      const auto hits = index.sparse_topk(query, k);
      out.candidate_count = hits.size();
      const double sigma = sigmoid(index.heads().gamma);
      for (const auto& h : hits) {
        ScoreBreakdown b;
        b.s_token = h.score;
        b.s_total = h.score;
        b.sigma_gamma = sigma;
        b.attributions = score_tokens_exact_match(query, index.passage(h.ordinal)).attributions;
        out.entries.push_back({h.ordinal, index.doc_id(h.ordinal), std::move(b)});
      }
      return out;
    }
  }
  throw Error("unknown workflow");
}

RankedList search(const IndexSet& index, std::string_view query_text, const SearchOptions& options) {
  return search(index, index.encode_query(query_text), options);
}

}  // namespace colberter
