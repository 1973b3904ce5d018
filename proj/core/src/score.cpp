#include "colberter/score.hpp"

#include <cmath>

#include "colberter/error.hpp"

namespace colberter {

namespace {

template <typename Eligible>
TokenScore max_sum(const EncodedText& query, const EncodedText& passage, Eligible eligible) {
  TokenScore result;
  result.attributions.reserve(query.words.size());
  for (const auto& q : query.words) {
    Attribution attr{q.stem, std::nullopt, std::nullopt, 0.0};
    for (std::size_t i = 0; i < passage.words.size(); ++i) {
      const auto& p = passage.words[i];
      if (!eligible(q, p)) continue;
      if (p.vector.size() != q.vector.size()) {
        throw Error("token scoring: query words have width " + std::to_string(q.vector.size()) +
                    ", passage words " + std::to_string(p.vector.size()));
      }
      const double s = dot(q.vector, p.vector);
      if (!attr.passage_index || s > attr.contribution) {
        attr.contribution = s;
        attr.passage_index = i;
      }
    }
    if (attr.passage_index) {
      attr.passage_stem = passage.words[*attr.passage_index].stem;
      result.score += attr.contribution;
    }
    result.attributions.push_back(std::move(attr));
  }
  return result;
}

}  // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double score_cls(const EncodedText& query, const EncodedText& passage) {
  if (query.cls.size() != passage.cls.size()) {
    throw Error("score_cls: query CLS width " + std::to_string(query.cls.size()) +
                " != passage CLS width " + std::to_string(passage.cls.size()));
  }
  return dot(query.cls, passage.cls);
}

TokenScore score_tokens_maxsum(const EncodedText& query, const EncodedText& passage) {
  return max_sum(query, passage, [](const WordEntry&, const WordEntry&) { return true; });
}

TokenScore score_tokens_exact_match(const EncodedText& query, const EncodedText& passage) {
  return max_sum(query, passage,
                 [](const WordEntry& q, const WordEntry& p) { return q.hash == p.hash; });
}

AggregateScore aggregate_score(double s_cls, double s_token, double gamma) {
  const double sigma = sigmoid(gamma);
  return {sigma * s_cls + (1.0 - sigma) * s_token, sigma};
}

ScoreBreakdown score_pair(const EncodedText& query, const EncodedText& passage,
                          const ReductionHeads& heads, bool exact_match) {
  if (query.kind != TextKind::query || passage.kind != TextKind::passage) {
    throw Error("score_pair: expects (query, passage)");
  }
  ScoreBreakdown b;
  b.s_cls = score_cls(query, passage);
  auto tokens = exact_match ? score_tokens_exact_match(query, passage)
                            : score_tokens_maxsum(query, passage);
  b.s_token = tokens.score;
  b.attributions = std::move(tokens.attributions);
  const auto agg = aggregate_score(b.s_cls, b.s_token, heads.gamma);
  b.s_total = agg.s_total;
  b.sigma_gamma = agg.sigma_gamma;
  return b;
}

}  // namespace colberter
