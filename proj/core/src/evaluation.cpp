#include "colberter/evaluation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "colberter/error.hpp"

namespace colberter {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string field;
  while (in >> field) out.push_back(std::move(field));
  return out;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

template <typename T>
bool parse_number(const std::string& text, T& value) {
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc() && ptr == end;
}

std::string shortest(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::ifstream open(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace

std::optional<int> Qrels::grade(const std::string& qid, const std::string& docid) const {
  const auto q = judgments.find(qid);
  if (q == judgments.end()) return std::nullopt;
  const auto d = q->second.find(docid);
  if (d == q->second.end()) return std::nullopt;
  return d->second;
}

bool Qrels::judged(const std::string& qid, const std::string& docid) const {
  return grade(qid, docid).has_value();
}

Qrels parse_qrels(std::istream& in) {
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto fields = split_fields(line);
    int grade = 0;
    if (fields.size() != 4 || !parse_number(fields[3], grade)) {
      throw FormatError("qrels line " + std::to_string(line_no) + ": expected 'qid 0 docid grade'");
    }
    if (grade < 0) {
      spdlog::warn("qrels line {}: negative grade {} read as 0", line_no, grade);
      grade = 0;
    }
    auto& docs = qrels.judgments[fields[0]];
    const auto [it, inserted] = docs.try_emplace(fields[2], grade);
    if (!inserted) {
      spdlog::warn("qrels line {}: duplicate judgment for ({}, {}), keeping the last", line_no,
                   fields[0], fields[2]);
      it->second = grade;
    }
  }
  return qrels;
}

Qrels parse_qrels(const std::filesystem::path& path) {
  auto in = open(path);
  return parse_qrels(in);
}

Run parse_run(std::istream& in) {
  Run run;
  std::map<std::string, std::set<std::string>, std::less<>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto fields = split_fields(line);
    const auto where = "run line " + std::to_string(line_no) + ": ";
    RunEntry entry;
    if (fields.size() != 6 || !parse_number(fields[3], entry.rank) ||
        !parse_number(fields[4], entry.score)) {
      throw FormatError(where + "expected 'qid Q0 docid rank score tag'");
    }
    entry.doc_id = fields[2];
    entry.tag = fields[5];
    auto& list = run[fields[0]];
    if (entry.rank != list.size() + 1) {
      throw FormatError(where + "rank " + fields[3] + " for query " + fields[0] + ", expected " +
                        std::to_string(list.size() + 1));
    }
    if (!seen[fields[0]].insert(entry.doc_id).second) {
      throw FormatError(where + "duplicate doc " + entry.doc_id + " for query " + fields[0]);
    }
    list.push_back(std::move(entry));
  }
  return run;
}

Run parse_run(const std::filesystem::path& path) {
  auto in = open(path);
  return parse_run(in);
}

void write_run(const Run& run, std::ostream& out) {
  for (const auto& [qid, entries] : run) {
    for (const auto& e : entries) {
      out << qid << " Q0 " << e.doc_id << ' ' << e.rank << ' ' << shortest(e.score) << ' '
          << (e.tag.empty() ? "colberter" : e.tag) << '\n';
    }
  }
}

void write_run(const Run& run, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_run(run, out);
}

// ---- metrics -------------------------------------------------------------

MetricsReport compute_metrics(const Run& run, const Qrels& qrels, const MetricOptions& options) {
  MetricsReport report;
  double ndcg_sum = 0.0, mrr_sum = 0.0, recall_sum = 0.0;
  for (const auto& [qid, entries] : run) {
    const auto judged = qrels.judgments.find(qid);
    if (judged == qrels.judgments.end()) {
      spdlog::warn("query {} has no judgments, skipped", qid);
      report.skipped_unjudged_queries.push_back(qid);
      continue;
    }
    const auto& grades = judged->second;
    const auto grade_of = [&](const std::string& doc) {
      const auto it = grades.find(doc);
      return it == grades.end() ? 0 : it->second;
    };
    QueryMetrics m{qid, {}, {}, {}};

    std::vector<int> ideal;
    std::size_t relevant = 0;
    for (const auto& [doc, g] : grades) {
      if (g > 0) ideal.push_back(g);
      if (g >= options.binarization) ++relevant;
    }
    std::sort(ideal.rbegin(), ideal.rend());
    double idcg = 0.0;
    for (std::size_t i = 0; i < ideal.size() && i < options.k_ndcg; ++i) {
      idcg += (std::exp2(ideal[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    if (idcg > 0.0) {
      double dcg = 0.0;
      for (std::size_t i = 0; i < entries.size() && i < options.k_ndcg; ++i) {
        dcg += (std::exp2(grade_of(entries[i].doc_id)) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
      }
      m.ndcg = dcg / idcg;
      ndcg_sum += *m.ndcg;
      ++report.ndcg_queries;
    }
    if (relevant > 0) {
      double rr = 0.0;
      for (std::size_t i = 0; i < entries.size() && i < options.k_mrr; ++i) {
        if (grade_of(entries[i].doc_id) >= options.binarization) {
          rr = 1.0 / static_cast<double>(i + 1);
          break;
        }
      }
      std::size_t found = 0;
      for (std::size_t i = 0; i < entries.size() && i < options.k_recall; ++i) {
        if (grade_of(entries[i].doc_id) >= options.binarization) ++found;
      }
      m.mrr = rr;
      m.recall = static_cast<double>(found) / static_cast<double>(relevant);
      mrr_sum += rr;
      recall_sum += *m.recall;
      ++report.relevance_queries;
    } else {
      report.excluded_no_relevant.push_back(qid);
    }
    report.per_query.push_back(std::move(m));
  }
  if (report.ndcg_queries) report.ndcg = ndcg_sum / static_cast<double>(report.ndcg_queries);
  if (report.relevance_queries) {
    report.mrr = mrr_sum / static_cast<double>(report.relevance_queries);
    report.recall = recall_sum / static_cast<double>(report.relevance_queries);
  }
  return report;
}

nlohmann::json MetricsReport::to_json(const MetricOptions& options) const {
  const auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json queries = nlohmann::json::array();
  for (const auto& q : per_query) {
    queries.push_back({{"qid", q.qid}, {"ndcg@" + std::to_string(options.k_ndcg), opt(q.ndcg)},
                       {"mrr@" + std::to_string(options.k_mrr), opt(q.mrr)},
                       {"recall@" + std::to_string(options.k_recall), opt(q.recall)}});
  }
  return {{"ndcg@" + std::to_string(options.k_ndcg), ndcg},
          {"mrr@" + std::to_string(options.k_mrr), mrr},
          {"recall@" + std::to_string(options.k_recall), recall},
          {"binarization", options.binarization},
          {"ndcg_queries", ndcg_queries},
          {"relevance_queries", relevance_queries},
          {"skipped_unjudged_queries", skipped_unjudged_queries},
          {"excluded_no_relevant", excluded_no_relevant},
          {"per_query", queries}};
}

Run condense_judged_only(const Run& run, const Qrels& qrels) {
  Run out;
  for (const auto& [qid, entries] : run) {
    auto& kept = out[qid];
    for (const auto& e : entries) {
      if (!qrels.judged(qid, e.doc_id)) continue;
      kept.push_back(e);
      kept.back().rank = kept.size();
    }
  }
  return out;
}

// ---- meta-analysis -------------------------------------------------------

namespace {

double mean(std::span<const double> xs) {
  double s = 0.0;
  for (const double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sum_squared_deviation(std::span<const double> xs, double m) {
  double s = 0.0;
  for (const double x : xs) s += (x - m) * (x - m);
  return s;
}

void set_interval(StudyEffect& s) {
  const double half = kNormalQuantile95 * std::sqrt(s.v);
  s.ci_low = s.d - half;
  s.ci_high = s.d + half;
}

}  // namespace

StudyEffect smd_effect(std::span<const double> treatment, std::span<const double> control,
                       std::string name) {
  if (treatment.size() < 2 || control.size() < 2) {
    throw Error("study " + name + ": need at least 2 values per group");
  }
  const double nt = static_cast<double>(treatment.size());
  const double nc = static_cast<double>(control.size());
  const double mt = mean(treatment);
  const double mc = mean(control);
  const double pooled_var =
      (sum_squared_deviation(treatment, mt) + sum_squared_deviation(control, mc)) / (nt + nc - 2.0);
  if (!(pooled_var > 0.0)) throw Error("degenerate study: " + name);
  const double j = 1.0 - 3.0 / (4.0 * (nt + nc - 2.0) - 1.0);
  StudyEffect s;
  s.name = std::move(name);
  s.n_treatment = treatment.size();
  s.n_control = control.size();
  s.d = j * (mt - mc) / std::sqrt(pooled_var);
  s.v = (nt + nc) / (nt * nc) + s.d * s.d / (2.0 * (nt + nc));
  set_interval(s);
  return s;
}

StudyEffect study_from_effect(std::string name, double d, double v) {
  if (!std::isfinite(d) || !(v > 0.0) || !std::isfinite(v)) {
    throw Error("study " + name + ": need finite d and v > 0");
  }
  StudyEffect s;
  s.name = std::move(name);
  s.d = d;
  s.v = v;
  set_interval(s);
  return s;
}

MetaResult dl_random_effects(std::span<const StudyEffect> studies) {
  if (studies.size() < 2) throw Error("meta-analysis needs at least 2 studies");
  double sw = 0.0, sw2 = 0.0, swd = 0.0;
  for (const auto& s : studies) {
    if (!(s.v > 0.0)) throw Error("study " + s.name + ": variance must be > 0");
    const double w = 1.0 / s.v;
    sw += w;
    sw2 += w * w;
    swd += w * s.d;
  }
  const double fixed = swd / sw;
  MetaResult r;
  for (const auto& s : studies) r.q += (s.d - fixed) * (s.d - fixed) / s.v;
  const double df = static_cast<double>(studies.size() - 1);
  r.tau2 = std::max(0.0, (r.q - df) / (sw - sw2 / sw));

  double sw_re = 0.0, swd_re = 0.0;
  for (const auto& s : studies) {
    const double w = 1.0 / (s.v + r.tau2);
    r.weights.push_back(w);
    sw_re += w;
    swd_re += w * s.d;
  }
  for (double& w : r.weights) w /= sw_re;
  r.summary = swd_re / sw_re;
  r.summary_se = std::sqrt(1.0 / sw_re);
  r.summary_lo = r.summary - kNormalQuantile95 * r.summary_se;
  r.summary_hi = r.summary + kNormalQuantile95 * r.summary_se;
  for (std::size_t i = 0; i < studies.size(); ++i) {
    r.rows.push_back({studies[i].name, studies[i].d, studies[i].ci_low, studies[i].ci_high,
                      100.0 * r.weights[i]});
  }
  return r;
}

nlohmann::json MetaResult::to_json() const {
  nlohmann::json studies = nlohmann::json::array();
  for (const auto& row : rows) {
    studies.push_back({{"name", row.name},
                       {"d", row.d},
                       {"ci", {row.lo, row.hi}},
                       {"lo", row.lo},
                       {"hi", row.hi},
                       {"weight_pct", row.weight_pct}});
  }
  return {{"studies", studies},
          {"tau2", tau2},
          {"summary", summary},
          {"summary_ci", {summary_lo, summary_hi}}};
}

std::vector<StudyEffect> studies_from_json(const nlohmann::json& j) {
  const auto& list = j.is_object() && j.contains("studies") ? j.at("studies") : j;
  if (!list.is_array()) throw FormatError("studies: expected an array");
  std::vector<StudyEffect> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& s = list[i];
    try {
      const auto name = s.value("name", "study " + std::to_string(i + 1));
      if (s.contains("treatment")) {
        const auto t = s.at("treatment").get<std::vector<double>>();
        const auto c = s.at("control").get<std::vector<double>>();
        out.push_back(smd_effect(t, c, name));
      } else {
        out.push_back(study_from_effect(name, s.at("d").get<double>(), s.at("v").get<double>()));
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("studies[" + std::to_string(i) + "]: " + e.what());
    }
  }
  return out;
}

}  // namespace colberter
