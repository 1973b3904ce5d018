#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace colberter {

inline constexpr int kDefaultBinarization = 2;

/// qid -> docid -> grade
struct Qrels {
  std::map<std::string, std::map<std::string, int>, std::less<>> judgments;
  std::optional<int> grade(const std::string& qid, const std::string& docid) const;
  bool judged(const std::string& qid, const std::string& docid) const;
};

struct RunEntry {
  std::string doc_id;
  std::size_t rank = 0;
  double score = 0.0;
  std::string tag;
  bool operator==(const RunEntry&) const = default;
};

/// qid -> entries ordered by rank
using Run = std::map<std::string, std::vector<RunEntry>, std::less<>>;

Qrels parse_qrels(std::istream& in);
Qrels parse_qrels(const std::filesystem::path& path);
Run parse_run(std::istream& in);
Run parse_run(const std::filesystem::path& path);
void write_run(const Run& run, std::ostream& out);
void write_run(const Run& run, const std::filesystem::path& path);

struct MetricOptions {
  std::size_t k_ndcg = 10;
  std::size_t k_mrr = 10;
  std::size_t k_recall = 1000;
  int binarization = kDefaultBinarization;
};

struct QueryMetrics {
  std::string qid;
  std::optional<double> ndcg;    // absent when the query has no positive grade
  std::optional<double> mrr;     // absent when the query has no relevant doc
  std::optional<double> recall;
};

struct MetricsReport {
  std::vector<QueryMetrics> per_query;
  double ndcg = 0.0;
  double mrr = 0.0;
  double recall = 0.0;
  std::size_t ndcg_queries = 0;
  std::size_t relevance_queries = 0;
  std::vector<std::string> skipped_unjudged_queries;  // in the run but not in the qrels
  std::vector<std::string> excluded_no_relevant;
  nlohmann::json to_json(const MetricOptions& options) const;
};

MetricsReport compute_metrics(const Run& run, const Qrels& qrels, const MetricOptions& options = {});

/// Drops unjudged documents and renumbers ranks from 1, keeping order.
Run condense_judged_only(const Run& run, const Qrels& qrels);

struct StudyEffect {
  std::string name;
  std::size_t n_treatment = 0;
  std::size_t n_control = 0;
  double d = 0.0;
  double v = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

inline constexpr double kNormalQuantile95 = 1.96;

/// Hedges-corrected standardized mean difference; positive favors treatment.
StudyEffect smd_effect(std::span<const double> treatment, std::span<const double> control,
                       std::string name);
/// A study given directly by effect and variance.
StudyEffect study_from_effect(std::string name, double d, double v);

struct ForestRow {
  std::string name;
  double d = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double weight_pct = 0.0;
};

struct MetaResult {
  double tau2 = 0.0;
  double q = 0.0;
  std::vector<double> weights;  // random-effects, sum to 1
  double summary = 0.0;
  double summary_se = 0.0;
  double summary_lo = 0.0;
  double summary_hi = 0.0;
  std::vector<ForestRow> rows;
  nlohmann::json to_json() const;
};

/// DerSimonian-Laird random-effects model.
MetaResult dl_random_effects(std::span<const StudyEffect> studies);

/// Reads [{name, treatment: [...], control: [...]} | {name, d, v}, ...] or
/// {"studies": [...]}.
std::vector<StudyEffect> studies_from_json(const nlohmann::json& j);

}  // namespace colberter
