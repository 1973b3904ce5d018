#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "colberter/encoder.hpp"
#include "colberter/reduce.hpp"
#include "colberter/tokenizer.hpp"

namespace colberter {

struct TrainTriple {
  std::string query;
  std::string positive;
  std::string negative;
  double teacher_margin = 0.0;  // teacher(pos) - teacher(neg)
};

/// {"q": ..., "pos": ..., "neg": ..., "t_margin": ...} per line.
std::vector<TrainTriple> read_triples(const std::filesystem::path& path);
void write_triples(const std::filesystem::path& path, std::span<const TrainTriple> triples);

struct LossWeights {
  double bow = 1.0;   // alpha_b, on the aggregated score
  double cls = 0.1;   // alpha_CLS
  double cs = 0.75;   // alpha_CS, L1 on the stopword gates
  void validate() const;
};

enum class ParamGroup { cls, token, gate, gamma, uni };

std::optional<ParamGroup> parse_param_group(std::string_view name);

struct TrainOptions {
  LossWeights weights;
  bool exact_match = false;
  bool gating = true;
  bool uni_nonneg = false;
  bool cs_per_word = false;  // divide each passage's gate sum by its word count
  std::set<ParamGroup> frozen;
};

/// A text reduced to what the trainable heads see: the frozen encoder's CLS
/// vector and per-unique-stem mean of its raw token vectors. Projection and
/// mean commute, so this is equivalent to projecting first.
struct PreparedText {
  Vector cls_raw;
  std::vector<Vector> word_raw;
  std::vector<std::string> stems;
  std::vector<std::uint32_t> hashes;
};

struct PreparedTriple {
  PreparedText query;
  PreparedText positive;
  PreparedText negative;
  double teacher_margin = 0.0;
};

PreparedText prepare_text(std::string_view text, const Vocabulary& vocab, const Encoder& encoder,
                          bool stemming);
PreparedTriple prepare_triple(const TrainTriple& triple, const Vocabulary& vocab,
                              const Encoder& encoder, bool stemming);

/// ((s_pos - s_neg) - teacher_margin)^2
double margin_mse(double s_pos, double s_neg, double teacher_margin);
/// Mean over the batch.
double margin_mse(std::span<const double> s_pos, std::span<const double> s_neg,
                  std::span<const double> teacher_margins);

struct LossTerms {
  double total = 0.0;
  double bow = 0.0;  // L_b
  double cls = 0.0;  // L_CLS
  double cs = 0.0;   // L_CS
  double gate_sum = 0.0;        // sum of all passage gates in the batch, unnormalized
  std::size_t gate_count = 0;   // number of passage words
  std::size_t zero_gates = 0;   // passage words with gate 0
};

/// Discrete decisions taken by a forward pass (ReLU sides, argmax choices),
/// plus the distance to the nearest decision boundary.
struct ActivationPattern {
  std::vector<int> decisions;
  double min_abs_gate_preactivation = std::numeric_limits<double>::infinity();
  double min_max_margin = std::numeric_limits<double>::infinity();
  bool operator==(const ActivationPattern& o) const { return decisions == o.decisions; }
};

/// Batch loss L = a_b L_b + a_CLS L_CLS + a_CS L_CS. When `gradient` is given
/// it receives dL/dparams with the same layout as the heads (frozen groups
/// zeroed).
LossTerms total_loss(std::span<const PreparedTriple> batch, const ReductionHeads& heads,
                     const TrainOptions& options, ReductionHeads* gradient = nullptr,
                     ActivationPattern* pattern = nullptr);

struct TrainRecord {
  LossTerms loss;  // before the update
  double gradient_norm = 0.0;
};

/// One step of plain gradient descent. Throws on a non-finite loss.
TrainRecord train_step(std::span<const PreparedTriple> batch, ReductionHeads& heads,
                       const TrainOptions& options, double lr);

struct GradCheckEntry {
  std::string parameter;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t passed = 0;
  std::vector<GradCheckEntry> failures;
  std::vector<std::string> excluded;  // kink points
  bool ok() const { return failures.empty(); }
};

GradCheckReport grad_check(const ReductionHeads& heads, std::span<const PreparedTriple> batch,
                           const TrainOptions& options, double eps = 1e-4, double tol = 1e-3);

/// Visits every trainable scalar as (group, name, reference).
void for_each_parameter(ReductionHeads& heads,
                        const std::function<void(ParamGroup, const std::string&, double&)>& fn);

}  // namespace colberter
