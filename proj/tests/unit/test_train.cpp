#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "colberter/error.hpp"
#include "colberter/score.hpp"
#include "colberter/train.hpp"
#include "test_helpers.hpp"
#include "train_fixture.hpp"

using namespace colberter;

namespace {

TrainOptions weights(double b, double cls, double cs) {
  TrainOptions o;
  o.weights = {b, cls, cs};
  return o;
}

}  // namespace

TEST(MarginMse, Scalar) {
  EXPECT_EQ(margin_mse(3.0, 1.0, 2.0), 0.0);
  EXPECT_EQ(margin_mse(2.0, 1.0, 3.0), 4.0);
}

TEST(MarginMse, BatchMean) {
  const std::vector<double> pos = {1.0, 5.0}, neg = {0.0, 1.0}, t = {3.0, 1.0};
  EXPECT_DOUBLE_EQ(margin_mse(pos, neg, t), ((1.0 - 3.0) * (1.0 - 3.0) + (4.0 - 1.0) * (4.0 - 1.0)) / 2.0);
  EXPECT_THROW(margin_mse(pos, neg, std::vector<double>{1.0}), Error);
}

TEST(LossWeights, Validation) {
  EXPECT_THROW((LossWeights{0, 0, 0}.validate()), Error);
  EXPECT_THROW((LossWeights{-1, 0, 1}.validate()), Error);
  EXPECT_NO_THROW((LossWeights{0, 0, 1}.validate()));
}

TEST(TotalLoss, WeightedCombination) {
  auto f = fixtures::make_train_fixture(1, 6, {12, 6, 4, 0});
  const auto terms = total_loss(f.batch, f.heads, weights(1, 0.1, 0.75));
  EXPECT_NEAR(terms.total, terms.bow + 0.1 * terms.cls + 0.75 * terms.cs, 1e-12);
  EXPECT_GE(terms.total, 0.0);
  EXPECT_GT(terms.cs, 0.0);
  // Gates start at b_s = 0.5 for every passage word.
  EXPECT_NEAR(terms.gate_sum, 0.5 * terms.gate_count, 1e-12);
  EXPECT_NEAR(terms.cs, terms.gate_sum / f.batch.size(), 1e-12);
}

TEST(TotalLoss, BowTermMatchesScorePair) {
  auto f = fixtures::make_train_fixture(2, 4, {12, 6, 4, 0});
  f.heads.gamma = 0.3;
  auto o = weights(1, 0, 0);
  o.exact_match = true;
  const auto terms = total_loss(f.batch, f.heads, o);
  // Independent path: encode through the inference pipeline pieces.
  double sum = 0;
  for (const auto& t : f.batch) {
    const auto encode = [&](const PreparedText& p, bool passage) {
      EncodedText e;
      e.kind = passage ? TextKind::passage : TextKind::query;
      const auto cls = row_times(p.cls_raw, f.heads.w_cls);
      e.cls.assign(cls.begin(), cls.end());
      for (std::size_t j = 0; j < p.word_raw.size(); ++j) {
        auto v = row_times(p.word_raw[j], f.heads.w_token);
        double gate = 1.0;
        if (passage) gate = std::max(0.0, dot(v, f.heads.w_gate) + f.heads.b_gate);
        if (gate <= 0) continue;
        std::vector<float> fv;
        for (double x : v) fv.push_back(float(x * gate));
        e.words.push_back({p.hashes[j], p.stems[j], fv, float(gate)});
      }
      return e;
    };
    const auto q = encode(t.query, false);
    const double sp = score_pair(q, encode(t.positive, true), f.heads, true).s_total;
    const double sn = score_pair(q, encode(t.negative, true), f.heads, true).s_total;
    sum += margin_mse(sp, sn, t.teacher_margin);
  }
  EXPECT_NEAR(terms.bow, sum / f.batch.size(), 1e-5 * std::max(1.0, terms.bow));
}

TEST(TotalLoss, ClosedGatesGiveZeroSparsityLoss) {
  auto f = fixtures::make_train_fixture(3, 4, {12, 6, 4, 0});
  f.heads.b_gate = -10;
  const auto terms = total_loss(f.batch, f.heads, weights(1, 0.1, 0.75));
  EXPECT_EQ(terms.cs, 0.0);
  EXPECT_EQ(terms.zero_gates, terms.gate_count);
}

TEST(TotalLoss, PerWordSparsityNormalization) {
  auto f = fixtures::make_train_fixture(4, 3, {12, 6, 4, 0});
  // Fresh heads: W_s = 0 and b_s = 0.5, so every passage gate is exactly 0.5.
  auto o = weights(0, 0, 1);
  const auto plain = total_loss(f.batch, f.heads, o);
  EXPECT_DOUBLE_EQ(plain.cs, 0.5 * double(plain.gate_count) / double(f.batch.size()));
  o.cs_per_word = true;
  const auto per_word = total_loss(f.batch, f.heads, o);
  EXPECT_DOUBLE_EQ(per_word.cs, 1.0);
  EXPECT_EQ(per_word.gate_sum, plain.gate_sum);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  for (auto& w : f.heads.w_gate) w = d(rng);
  o.weights = {1, 0.1, 0.75};
  const auto report = grad_check(f.heads, f.batch, o);
  EXPECT_TRUE(report.ok()) << report.failures.size() << " failures";
  EXPECT_GT(report.checked, 0u);
}

TEST(TotalLoss, GammaGradientVanishesWhenComponentsAgree) {
  // With W_t = 0 every token score is 0, and W_CLS = 0 makes every CLS score 0.
  auto f = fixtures::make_train_fixture(4, 4, {12, 6, 4, 0});
  f.heads.w_cls = Matrix(12, 6);
  f.heads.w_token = Matrix(12, 4);
  ReductionHeads grad;
  total_loss(f.batch, f.heads, weights(1, 0.1, 0.75), &grad);
  EXPECT_EQ(grad.gamma, 0.0);
}

TEST(TrainStep, ZeroLearningRateLeavesHeads) {
  auto f = fixtures::make_train_fixture(5, 4, {12, 6, 4, 1});
  const auto before = f.heads;
  auto o = weights(1, 0.1, 0.75);
  o.exact_match = true;
  train_step(f.batch, f.heads, o, 0.0);
  EXPECT_EQ(f.heads, before);
  EXPECT_THROW(train_step(f.batch, f.heads, o, -1.0), Error);
}

TEST(TrainStep, SmallStepDecreasesLoss) {
  auto f = fixtures::make_train_fixture(6, 1, {12, 6, 4, 0});
  const auto o = weights(1, 0.1, 0.75);
  const double before = total_loss(f.batch, f.heads, o).total;
  const auto rec = train_step(f.batch, f.heads, o, 1e-3);
  EXPECT_EQ(rec.loss.total, before);
  EXPECT_GT(rec.gradient_norm, 0.0);
  EXPECT_LT(total_loss(f.batch, f.heads, o).total, before);
}

TEST(TrainStep, SparsityPressureShrinksGates) {
  auto f = fixtures::make_train_fixture(7, 4, {12, 6, 4, 0});
  const auto o = weights(0, 0, 1);
  double previous = total_loss(f.batch, f.heads, o).gate_sum;
  for (int step = 0; step < 100; ++step) {
    train_step(f.batch, f.heads, o, 0.05);
    const double now = total_loss(f.batch, f.heads, o).gate_sum;
    EXPECT_LE(now, previous) << step;
    previous = now;
  }
  EXPECT_LT(previous, 1e-6);
}

TEST(TrainStep, FrozenGroupsDoNotMove) {
  auto f = fixtures::make_train_fixture(8, 4, {12, 6, 4, 0});
  auto o = weights(1, 0.1, 0.75);
  o.frozen = {ParamGroup::gamma, ParamGroup::cls};
  const auto before = f.heads;
  for (int i = 0; i < 5; ++i) train_step(f.batch, f.heads, o, 0.01);
  EXPECT_EQ(f.heads.gamma, before.gamma);
  EXPECT_EQ(f.heads.w_cls, before.w_cls);
  EXPECT_NE(f.heads.w_token, before.w_token);
}

TEST(TrainStep, NonFiniteLossAborts) {
  auto f = fixtures::make_train_fixture(9, 2, {12, 6, 4, 0});
  f.heads.w_cls(0, 0) = std::numeric_limits<double>::infinity();
  try {
    train_step(f.batch, f.heads, weights(1, 0.1, 0.75), 0.01);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite loss"), std::string::npos);
  }
}

TEST(GradCheck, LinearPathPassesTightly) {
  auto f = fixtures::make_train_fixture(10, 3, {10, 5, 3, 0});
  auto o = weights(1, 0.1, 0.75);
  o.gating = false;
  o.frozen = {ParamGroup::gamma};
  const auto report = grad_check(f.heads, f.batch, o, 1e-4, 1e-5);
  EXPECT_TRUE(report.ok()) << (report.failures.empty() ? "" : report.failures[0].parameter);
  EXPECT_GT(report.checked, 50u);
}

TEST(GradCheck, KinkIsExcluded) {
  auto f = fixtures::make_train_fixture(11, 2, {10, 5, 3, 0});
  f.heads.b_gate = 0.0;  // every gate pre-activation is exactly 0
  const auto report = grad_check(f.heads, f.batch, weights(1, 0.1, 0.75));
  EXPECT_NE(std::find(report.excluded.begin(), report.excluded.end(), "b_s"), report.excluded.end());
  EXPECT_TRUE(report.ok());
}

TEST(GradCheck, RandomHeadsPassAllNonKinkComponents) {
  for (std::uint64_t seed = 20; seed < 24; ++seed) {
    auto f = fixtures::make_train_fixture(seed, 3, {10, 5, 3, seed % 2});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-0.5, 0.5);
    for (auto& w : f.heads.w_gate) w = d(rng);
    f.heads.gamma = d(rng);
    auto o = weights(1, 0.1, 0.75);
    o.exact_match = seed % 2 == 1;
    const auto report = grad_check(f.heads, f.batch, o);
    EXPECT_TRUE(report.ok()) << seed << " " << report.failures.size() << " failures, first "
                             << (report.failures.empty() ? "" : report.failures[0].parameter);
    EXPECT_GT(report.checked, 0u);
  }
}

TEST(Triples, FileRoundTripAndErrors) {
  const auto dir = fixtures::scratch_dir("triples");
  const std::vector<TrainTriple> triples = {{"q one", "pos \"text\"", "neg", 1.25}, {"q2", "p", "n", -3}};
  write_triples(dir / "t.jsonl", triples);
  const auto back = read_triples(dir / "t.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].positive, "pos \"text\"");
  EXPECT_EQ(back[1].teacher_margin, -3);
  std::ofstream(dir / "bad.jsonl") << "{\"q\": \"a\", \"pos\": \"b\", \"neg\": \"c\", \"t_margin\": 1}\n{\"q\": 1}\n";
  try {
    read_triples(dir / "bad.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(ParamGroups, ParseAndVisit) {
  EXPECT_EQ(parse_param_group("gate"), ParamGroup::gate);
  EXPECT_FALSE(parse_param_group("encoder").has_value());
  auto h = ReductionHeads::initialize({4, 2, 3, 1}, 1);
  std::size_t count = 0;
  for_each_parameter(h, [&](ParamGroup, const std::string&, double&) { ++count; });
  EXPECT_EQ(count, 4u * 2 + 4 * 3 + 3 + 1 + 1 + 3);
}
