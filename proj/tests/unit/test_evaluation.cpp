#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "colberter/error.hpp"
#include "colberter/evaluation.hpp"
#include "test_helpers.hpp"

using namespace colberter;

namespace {

/// "tag qid ndcg mrr recall" and "tag mean_x value" rows.
struct Expected {
  std::map<std::string, std::vector<std::optional<double>>> per_query;
  std::map<std::string, double> means;
};

std::map<std::string, Expected> load_expected() {
  std::ifstream in(fixtures::data_path("metrics_fixture.expected"));
  std::map<std::string, Expected> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag, key;
    ss >> tag >> key;
    std::vector<std::optional<double>> values;
    std::string v;
    while (ss >> v) values.push_back(v == "nan" ? std::nullopt : std::optional<double>(std::stod(v)));
    if (key.rfind("mean_", 0) == 0) {
      out[tag].means[key.substr(5)] = *values[0];
    } else {
      out[tag].per_query[key] = values;
    }
  }
  return out;
}

Run parse_run_text(const std::string& text) {
  std::istringstream in(text);
  return parse_run(in);
}

Qrels parse_qrels_text(const std::string& text) {
  std::istringstream in(text);
  return parse_qrels(in);
}

void check_against(const MetricsReport& r, const Expected& e) {
  EXPECT_NEAR(r.ndcg, e.means.at("ndcg"), 1e-9);
  EXPECT_NEAR(r.mrr, e.means.at("mrr"), 1e-9);
  EXPECT_NEAR(r.recall, e.means.at("recall"), 1e-9);
  ASSERT_EQ(r.per_query.size(), e.per_query.size());
  for (const auto& q : r.per_query) {
    const auto& v = e.per_query.at(q.qid);
    const std::optional<double> got[] = {q.ndcg, q.mrr, q.recall};
    for (int i = 0; i < 3; ++i) {
      ASSERT_EQ(got[i].has_value(), v[i].has_value()) << q.qid << " " << i;
      if (got[i]) EXPECT_NEAR(*got[i], *v[i], 1e-9) << q.qid << " " << i;
    }
  }
}

}  // namespace

TEST(Qrels, ParsesGrades) {
  const auto q = parse_qrels_text("q1 0 d7 2\n\nq1 0 d8 0\n");
  EXPECT_EQ(q.grade("q1", "d7"), 2);
  EXPECT_EQ(q.grade("q1", "d8"), 0);
  EXPECT_FALSE(q.grade("q1", "d9").has_value());
  EXPECT_FALSE(q.judged("q2", "d7"));
}

TEST(Qrels, DuplicateKeepsLast) {
  const auto q = parse_qrels_text("q1 0 d7 2\nq1 0 d7 1\n");
  EXPECT_EQ(q.grade("q1", "d7"), 1);
}

TEST(Qrels, MalformedLineNamesLineNumber) {
  try {
    parse_qrels_text("q1 0 d7 2\nq1 0 d8\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_qrels_text("q1 0 d7 x\n"), FormatError);
}

TEST(RunFile, RoundTripIsLossless) {
  colberter::Run run;
  run["q1"] = {{"d1", 1, 0.1, "t"}, {"d2", 2, -1e-300, "t"}, {"d3", 3, 1.0 / 3.0, "t"}};
  run["q2"] = {{"x", 1, 12345.678901234567, "t"}};
  std::ostringstream out;
  write_run(run, out);
  EXPECT_EQ(parse_run_text(out.str()), run);
}

TEST(RunFile, StrictRanks) {
  EXPECT_THROW(parse_run_text("q Q0 a 1 1 t\nq Q0 b 3 0.5 t\n"), FormatError);
  EXPECT_THROW(parse_run_text("q Q0 a 1 1 t\nq Q0 a 2 0.5 t\n"), FormatError);
  try {
    parse_run_text("q Q0 a 1 1 t\nq Q0 b 2\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Metrics, SingleRelevantAtTop) {
  const auto r = compute_metrics(parse_run_text("q Q0 d 1 1 t\nq Q0 e 2 0 t\n"), parse_qrels_text("q 0 d 2\n"));
  EXPECT_DOUBLE_EQ(r.ndcg, 1.0);
  EXPECT_DOUBLE_EQ(r.mrr, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
}

TEST(Metrics, RelevantAtRankTwo) {
  const auto r = compute_metrics(parse_run_text("q Q0 e 1 1 t\nq Q0 d 2 0 t\n"), parse_qrels_text("q 0 d 2\n"));
  EXPECT_DOUBLE_EQ(r.mrr, 0.5);
}

TEST(Metrics, GradedFixtureMatchesOracle) {
  const auto expected = load_expected();
  const auto run = parse_run(fixtures::data_path("metrics_fixture.run"));
  const auto qrels = parse_qrels(fixtures::data_path("metrics_fixture.qrels"));
  const auto raw = compute_metrics(run, qrels);
  check_against(raw, expected.at("raw"));
  EXPECT_EQ(raw.skipped_unjudged_queries, (std::vector<std::string>{"q4"}));
  EXPECT_EQ(raw.excluded_no_relevant, (std::vector<std::string>{"q3"}));
  check_against(compute_metrics(condense_judged_only(run, qrels), qrels), expected.at("condensed"));
}

TEST(Metrics, RangeProperties) {
  const auto run = parse_run(fixtures::data_path("metrics_fixture.run"));
  const auto qrels = parse_qrels(fixtures::data_path("metrics_fixture.qrels"));
  for (const auto& q : compute_metrics(run, qrels).per_query) {
    if (q.ndcg) EXPECT_TRUE(*q.ndcg >= 0 && *q.ndcg <= 1);
    if (q.mrr) EXPECT_TRUE(*q.mrr == 0 || (*q.mrr >= 0.1 && *q.mrr <= 1));
  }
}

TEST(Condense, Definition) {
  const auto qrels = parse_qrels_text("q 0 a 1\nq 0 c 0\n");
  const auto run = parse_run_text("q Q0 a 1 3 t\nq Q0 b 2 2 t\nq Q0 c 3 1 t\n");
  const auto c = condense_judged_only(run, qrels);
  ASSERT_EQ(c.at("q").size(), 2u);
  EXPECT_EQ(c.at("q")[0].doc_id, "a");
  EXPECT_EQ(c.at("q")[1].doc_id, "c");
  EXPECT_EQ(c.at("q")[1].rank, 2u);
  EXPECT_EQ(c.at("q")[1].score, 1.0);
  EXPECT_EQ(condense_judged_only(c, qrels), c);
  const auto all_judged = parse_run_text("q Q0 a 1 3 t\nq Q0 c 2 1 t\n");
  EXPECT_EQ(condense_judged_only(all_judged, qrels), all_judged);
}

TEST(Condense, HelpsWhenUnjudgedDocsLead) {
  const auto qrels = parse_qrels_text("q 0 r 2\n");
  const auto run = parse_run_text("q Q0 u1 1 3 t\nq Q0 u2 2 2 t\nq Q0 r 3 1 t\n");
  const auto raw = compute_metrics(run, qrels);
  const auto cond = compute_metrics(condense_judged_only(run, qrels), qrels);
  EXPECT_GE(cond.ndcg, raw.ndcg);
  EXPECT_GE(cond.mrr, raw.mrr);
  EXPECT_DOUBLE_EQ(cond.mrr, 1.0);
}

TEST(Smd, IdenticalGroups) {
  const std::vector<double> a = {0.1, 0.4, 0.3};
  const auto s = smd_effect(a, a, "same");
  EXPECT_EQ(s.d, 0.0);
  EXPECT_DOUBLE_EQ(s.ci_low, -s.ci_high);
}

TEST(Smd, OnePooledSdApart) {
  // Both groups have sample SD 1; means differ by 1.
  const std::vector<double> t = {1, 2, 3}, c = {0, 1, 2};
  const auto s = smd_effect(t, c, "x");
  const double j = 1 - 3.0 / (4 * (3 + 3 - 2) - 1);
  EXPECT_NEAR(s.d, j, 1e-15);
  EXPECT_NEAR(s.v, 6.0 / 9.0 + s.d * s.d / 12.0, 1e-15);
}

TEST(Smd, Errors) {
  const std::vector<double> flat = {1, 1, 1}, one = {1};
  EXPECT_THROW(smd_effect(flat, flat, "flat"), Error);
  EXPECT_THROW(smd_effect(one, flat, "small"), Error);
  try {
    smd_effect(flat, flat, "flat");
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate study"), std::string::npos);
  }
}

TEST(Smd, SignConventionAndSignificance) {
  const std::vector<double> t = {0.5, 0.7, 0.9, 0.6}, c = {0.2, 0.4, 0.3, 0.35};
  const auto a = smd_effect(t, c, "a"), b = smd_effect(c, t, "b");
  EXPECT_EQ(a.d, -b.d);
  EXPECT_EQ(a.ci_low, -b.ci_high);
  EXPECT_EQ((a.ci_low > 0 || a.ci_high < 0), std::abs(a.d) > 1.96 * std::sqrt(a.v));
}

TEST(Meta, MatchesStatsPackageOracle) {
  const auto spec = nlohmann::json::parse(fixtures::read_text(fixtures::data_path("meta_fixture.json")));
  const auto expected =
      nlohmann::json::parse(fixtures::read_text(fixtures::data_path("meta_fixture.expected.json")));
  const auto studies = studies_from_json(spec);
  const auto r = dl_random_effects(studies);
  EXPECT_NEAR(r.tau2, expected["tau2"].get<double>(), 1e-6);
  EXPECT_NEAR(r.summary, expected["summary"].get<double>(), 1e-6);
  EXPECT_NEAR(r.summary_lo, expected["summary_lo"].get<double>(), 1e-6);
  EXPECT_NEAR(r.summary_hi, expected["summary_hi"].get<double>(), 1e-6);
  double total = 0;
  for (std::size_t i = 0; i < studies.size(); ++i) {
    const auto& e = expected["studies"][i];
    EXPECT_NEAR(studies[i].d, e["d"].get<double>(), 1e-6);
    EXPECT_NEAR(studies[i].v, e["v"].get<double>(), 1e-6);
    EXPECT_NEAR(r.rows[i].lo, e["lo"].get<double>(), 1e-6);
    EXPECT_NEAR(r.rows[i].hi, e["hi"].get<double>(), 1e-6);
    EXPECT_NEAR(r.rows[i].weight_pct, e["weight_pct"].get<double>(), 1e-6);
    total += r.weights[i];
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR(r.summary - r.summary_lo, r.summary_hi - r.summary, 1e-12);
}

TEST(Meta, IdenticalStudies) {
  const std::vector<StudyEffect> s = {study_from_effect("a", 0.4, 0.1), study_from_effect("b", 0.4, 0.1),
                                      study_from_effect("c", 0.4, 0.1)};
  const auto r = dl_random_effects(s);
  EXPECT_EQ(r.tau2, 0.0);
  EXPECT_DOUBLE_EQ(r.summary, 0.4);
}

TEST(Meta, LargeHeterogeneityEqualizesWeights) {
  // tau^2 = 100 needs Q - df = 100 * (sum w - sum w^2 / sum w).
  const double v1 = 0.01, v2 = 1.0;
  const double w1 = 1 / v1, w2 = 1 / v2;
  const double c = w1 + w2 - (w1 * w1 + w2 * w2) / (w1 + w2);
  const double q = 100 * c + 1;
  // Q = w1 w2 / (w1 + w2) * (d1 - d2)^2 for two studies.
  const double gap = std::sqrt(q * (w1 + w2) / (w1 * w2));
  const auto r = dl_random_effects(std::vector<StudyEffect>{study_from_effect("a", 0, v1), study_from_effect("b", gap, v2)});
  EXPECT_NEAR(r.tau2, 100, 1e-9);
  EXPECT_NEAR(r.weights[0] / r.weights[1], 1.0, 0.01);
}

TEST(Meta, SwappingArmsNegatesEverything) {
  const auto spec = nlohmann::json::parse(fixtures::read_text(fixtures::data_path("meta_fixture.json")));
  auto swapped = spec;
  for (auto& s : swapped["studies"]) std::swap(s["treatment"], s["control"]);
  const auto a = dl_random_effects(studies_from_json(spec));
  const auto b = dl_random_effects(studies_from_json(swapped));
  EXPECT_EQ(a.summary, -b.summary);
  EXPECT_EQ(a.tau2, b.tau2);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].d, -b.rows[i].d);
    EXPECT_EQ(a.rows[i].lo, -b.rows[i].hi);
    EXPECT_EQ(a.rows[i].weight_pct, b.rows[i].weight_pct);
  }
}

TEST(Meta, NeedsTwoStudiesAndJsonShape) {
  EXPECT_THROW(dl_random_effects(std::vector<StudyEffect>{study_from_effect("a", 0, 1)}), Error);
  const auto j = dl_random_effects(std::vector<StudyEffect>{study_from_effect("a", 0.1, 0.2),
                                                           study_from_effect("b", 0.3, 0.1)})
                     .to_json();
  for (const char* key : {"studies", "tau2", "summary", "summary_ci"}) EXPECT_TRUE(j.contains(key));
  for (const char* key : {"name", "d", "ci", "lo", "hi", "weight_pct"}) EXPECT_TRUE(j["studies"][0].contains(key));
}
