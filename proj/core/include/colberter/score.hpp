#pragma once

#include <optional>
#include <string>
#include <vector>

#include "colberter/reduce.hpp"

namespace colberter {

struct Attribution {
  std::string query_stem;
  std::optional<std::string> passage_stem;  // argmax word, none if no match
  std::optional<std::size_t> passage_index;
  double contribution = 0.0;
};

struct TokenScore {
  double score = 0.0;
  std::vector<Attribution> attributions;  // one per query word
};

struct ScoreBreakdown {
  double s_cls = 0.0;
  double s_token = 0.0;
  double sigma_gamma = 0.5;
  double s_total = 0.0;
  std::vector<Attribution> attributions;
};

double sigmoid(double x);

double score_cls(const EncodedText& query, const EncodedText& passage);

/// Sum over query words of the max dot product over passage words. Ties in
/// the max resolve to the lowest passage index.
TokenScore score_tokens_maxsum(const EncodedText& query, const EncodedText& passage);

/// As score_tokens_maxsum, restricted to passage words with an equal hash.
TokenScore score_tokens_exact_match(const EncodedText& query, const EncodedText& passage);

struct AggregateScore {
  double s_total;
  double sigma_gamma;
};

AggregateScore aggregate_score(double s_cls, double s_token, double gamma);

ScoreBreakdown score_pair(const EncodedText& query, const EncodedText& passage,
                          const ReductionHeads& heads, bool exact_match);

}  // namespace colberter
