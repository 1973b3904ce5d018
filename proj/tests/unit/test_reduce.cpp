#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "colberter/error.hpp"
#include "colberter/reduce.hpp"
#include "test_helpers.hpp"

using namespace colberter;

namespace {

ReductionHeads zero_heads(std::size_t enc, std::size_t cls, std::size_t tok, std::size_t uni = 0) {
  ReductionHeads h;
  h.dims = {enc, cls, tok, uni};
  h.w_cls = Matrix(enc, cls);
  h.w_token = Matrix(enc, tok);
  h.w_gate = Vector(tok, 0.0);
  h.b_gate = 0.5;
  if (uni) h.w_uni = Matrix(tok, uni);
  return h;
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  std::uniform_real_distribution<double> d(-1, 1);
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) m(i, j) = d(rng);
  return m;
}

EncoderOutput raw(std::size_t dim, std::vector<float> cls, std::vector<float> tokens) {
  return {dim, std::move(cls), std::move(tokens)};
}

/// Tokenized text where every listed word is one subword.
TokenizedText one_piece_words(const Vocabulary& vocab, const std::string& text) {
  return tokenize(text, vocab, false);
}

}  // namespace

TEST(Project2Way, IdentityAndZero) {
  auto h = zero_heads(3, 3, 2);
  h.w_cls = Matrix::identity(3);
  const auto p = project_2way(raw(3, {1, 2, 3}, {1, 1, 1, 2, 2, 2}), h);
  EXPECT_EQ(p.cls, (Vector{1, 2, 3}));
  ASSERT_EQ(p.tokens.size(), 2u);
  for (const auto& t : p.tokens) EXPECT_EQ(t, (Vector{0, 0}));
}

TEST(Project2Way, MatchesNaiveProduct) {
  std::mt19937_64 rng(1);
  auto h = zero_heads(3, 2, 2);
  h.w_cls = random_matrix(rng, 3, 2);
  h.w_token = random_matrix(rng, 3, 2);
  const auto e = raw(3, fixtures::random_vector(rng, 3), fixtures::random_vector(rng, 6));
  const auto p = project_2way(e, h);
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0;
    for (std::size_t r = 0; r < 3; ++r) s += double(e.cls_raw[r]) * h.w_cls(r, c);
    EXPECT_NEAR(p.cls[c], s, 1e-6);
    for (std::size_t i = 0; i < 2; ++i) {
      double t = 0;
      for (std::size_t r = 0; r < 3; ++r) t += double(e.token_raw[i * 3 + r]) * h.w_token(r, c);
      EXPECT_NEAR(p.tokens[i][c], t, 1e-6);
    }
  }
}

TEST(Project2Way, DimensionMismatchNamesOperand) {
  auto h = zero_heads(3, 2, 2);
  try {
    project_2way(raw(4, {1, 2, 3, 4}, {}), h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("W_CLS"), std::string::npos);
  }
  try {
    project_2way(raw(4, {1, 2, 3}, {1, 2, 3, 4}), h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("W_t"), std::string::npos);
  }
}

TEST(AggregateBow2, MeanOfSubwordVectors) {
  const Vocabulary vocab({"[UNK]", "do", "##xy", "a"});
  const auto t = tokenize("doxy a", vocab, false);
  ASSERT_EQ(t.subword_ids.size(), 3u);
  const auto words = aggregate_bow2({{1, 0}, {0, 1}, {3, 4}}, t);
  ASSERT_EQ(words.size(), 2u);
  EXPECT_EQ(words[0].stem, "doxy");
  EXPECT_EQ(words[0].vector, (Vector{0.5, 0.5}));
  EXPECT_EQ(words[1].vector, (Vector{3, 4}));
}

TEST(AggregateBow2, PoolsAllOccurrencesOfAStem) {
  const Vocabulary vocab({"[UNK]", "run", "##s", "cat"});
  const auto t = tokenize("run cat runs", vocab, true);
  ASSERT_EQ(t.subword_ids.size(), 4u);  // run, cat, run, ##s
  std::mt19937_64 rng(2);
  std::vector<Vector> vecs;
  for (int i = 0; i < 4; ++i) {
    const auto v = fixtures::random_vector(rng, 3);
    vecs.emplace_back(v.begin(), v.end());
  }
  const auto words = aggregate_bow2(vecs, t);
  ASSERT_EQ(words.size(), 2u);
  // Group-by oracle over subword_to_word and the stems of the words.
  std::map<std::string, std::pair<Vector, int>> groups;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& w = t.whole_words[t.subword_to_word[i]].text;
    const std::string key = w.rfind("run", 0) == 0 ? "run" : w;
    auto& [sum, n] = groups[key];
    sum.resize(3, 0.0);
    for (int k = 0; k < 3; ++k) sum[k] += vecs[i][k];
    ++n;
  }
  EXPECT_EQ(groups["run"].second, 3);
  for (const auto& w : words) {
    const auto& [sum, n] = groups.at(w.stem);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(w.vector[k], sum[k] / n, 1e-12);
  }
}

TEST(StopwordGate, ReluAndConstantGate) {
  auto h = zero_heads(2, 1, 2);
  auto gated = stopword_gate({{"x", {1, 1}}, {"y", {-3, 2}}}, h);
  EXPECT_DOUBLE_EQ(gated[0].gate, 0.5);
  EXPECT_DOUBLE_EQ(gated[1].gate, 0.5);
  h.w_gate = {1, 0};
  h.b_gate = 0.0;
  gated = stopword_gate({{"x", {-1, 7}}, {"y", {0.25, 2}}}, h);
  EXPECT_DOUBLE_EQ(gated[0].gate, 0.0);
  EXPECT_DOUBLE_EQ(gated[1].gate, 0.25);
  EXPECT_EQ(gated[0].vector, (Vector{-1, 7}));
}

TEST(StopwordGate, MatchesScalarProduct) {
  std::mt19937_64 rng(4);
  auto h = zero_heads(2, 1, 4);
  std::uniform_real_distribution<double> d(-1, 1);
  for (auto& w : h.w_gate) w = d(rng);
  h.b_gate = 0.1;
  std::vector<StemVector> words;
  for (int i = 0; i < 20; ++i) words.push_back({"w" + std::to_string(i), {d(rng), d(rng), d(rng), d(rng)}});
  const auto gated = stopword_gate(words, h);
  for (std::size_t i = 0; i < words.size(); ++i) {
    double z = h.b_gate;
    for (int k = 0; k < 4; ++k) z += words[i].vector[k] * h.w_gate[k];
    EXPECT_DOUBLE_EQ(gated[i].gate, z > 0 ? z : 0.0);
  }
}

TEST(ApplyGate, DropsAndScales) {
  auto r = apply_gate({{"a", {2, 2}, 0.0}, {"b", {2, 4}, 0.5}}, 0.0);
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.kept[0].vector, (Vector{1, 2}));
  EXPECT_EQ(r.removed, (std::vector<std::string>{"a"}));
  r = apply_gate({{"a", {1}, 0.5}, {"b", {1}, 0.7}}, 0.6);
  ASSERT_EQ(r.kept.size(), 1u);
  EXPECT_EQ(r.kept[0].stem, "b");
}

TEST(ApplyGate, PartitionsInput) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> d(0, 1);
  for (int round = 0; round < 200; ++round) {
    std::vector<GatedWord> words;
    const int n = static_cast<int>(rng() % 10);
    for (int i = 0; i < n; ++i) words.push_back({"w" + std::to_string(i), {1.0}, rng() % 3 ? d(rng) : 0.0});
    const auto r = apply_gate(words, d(rng) * 0.5);
    EXPECT_EQ(r.kept.size() + r.removed.size(), words.size());
  }
}

TEST(UniProject, OnesZerosAndRandom) {
  auto h = zero_heads(2, 1, 2, 1);
  h.w_uni(0, 0) = 1;
  h.w_uni(1, 0) = 1;
  auto out = uni_project({{"a", {2, 3}, 1.0}}, h);
  EXPECT_EQ(out[0].vector, (Vector{5}));
  h.w_uni = Matrix(2, 1);
  out = uni_project({{"a", {2, 3}, 1.0}}, h);
  EXPECT_EQ(out[0].vector, (Vector{0}));
  std::mt19937_64 rng(1);
  h.w_uni = random_matrix(rng, 2, 1);
  out = uni_project({{"a", {0.3, -0.7}, 1.0}}, h);
  EXPECT_NEAR(out[0].vector[0], 0.3 * h.w_uni(0, 0) - 0.7 * h.w_uni(1, 0), 1e-15);
  h.w_uni(0, 0) = -1;
  h.w_uni(1, 0) = 0;
  EXPECT_EQ(uni_project({{"a", {2, 3}, 1.0}}, h, true)[0].vector, (Vector{0}));
}

TEST(UniProject, RequiresUniLayer) {
  EXPECT_THROW(uni_project({{"a", {1, 2}, 1.0}}, zero_heads(2, 1, 2)), Error);
}

TEST(WordHash, MatchesSha256Prefix) {
  EXPECT_EQ(word_hash("sulfa"), 3901058398u);
  EXPECT_EQ(word_hash("doxycyclin"), 4026502309u);
  EXPECT_EQ(word_hash("run"), 2897880401u);
  EXPECT_EQ(word_hash("café"), 2232384964u);
  EXPECT_EQ(word_hash("run"), word_hash(std::string("ru") + "n"));
}

class EncodeTextTest : public ::testing::Test {
 protected:
  Vocabulary vocab{{"[UNK]", "a", "b", "c", "the"}};
};

TEST_F(EncodeTextTest, ComposesStageOracles) {
  std::mt19937_64 rng(12);
  auto h = zero_heads(3, 2, 2);
  h.w_cls = random_matrix(rng, 3, 2);
  h.w_token = random_matrix(rng, 3, 2);
  h.w_gate = {0.8, -0.6};
  h.b_gate = 0.2;
  const auto t = tokenize("a b c", vocab, false);
  const auto e = raw(3, fixtures::random_vector(rng, 3), fixtures::random_vector(rng, 9));
  const auto enc = encode_text(t, e, h, TextKind::passage);
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < 3; ++i) {
    double v[2];
    for (int c = 0; c < 2; ++c) {
      v[c] = 0;
      for (int r = 0; r < 3; ++r) v[c] += double(e.token_raw[i * 3 + r]) * h.w_token(r, c);
    }
    const double gate = std::max(0.0, v[0] * 0.8 - v[1] * 0.6 + 0.2);
    const auto& stem = t.unique_stems[i].stem;
    const auto it = std::find_if(enc.words.begin(), enc.words.end(), [&](auto& w) { return w.stem == stem; });
    if (gate == 0) {
      EXPECT_EQ(it, enc.words.end());
      continue;
    }
    ASSERT_NE(it, enc.words.end());
    EXPECT_NEAR(it->gate, gate, 1e-6);
    EXPECT_NEAR(it->vector[0], v[0] * gate, 1e-6);
    EXPECT_NEAR(it->vector[1], v[1] * gate, 1e-6);
    EXPECT_EQ(it->hash, word_hash(stem));
  }
  EXPECT_EQ(enc.words.size() + enc.removed_stems.size(), 3u);
}

TEST_F(EncodeTextTest, QueriesKeepEveryWord) {
  auto h = zero_heads(2, 1, 2);
  h.b_gate = -5;
  const auto t = tokenize("the a", vocab, false);
  const auto e = raw(2, {1, 0}, {1, 0, 0, 1});
  const auto q = encode_text(t, e, h, TextKind::query);
  EXPECT_EQ(q.words.size(), 2u);
  EXPECT_TRUE(q.removed_stems.empty());
  for (const auto& w : q.words) EXPECT_EQ(w.gate, 1.0f);
  const auto p = encode_text(t, e, h, TextKind::passage);
  EXPECT_TRUE(p.words.empty());
  EXPECT_EQ(p.removed_stems, (std::vector<std::string>{"the", "a"}));
  EXPECT_EQ(p.cls.size(), 1u);
}

TEST_F(EncodeTextTest, GatingOffKeepsAllStemsAndUniWidthIsOne) {
  std::mt19937_64 rng(3);
  auto h = ReductionHeads::initialize({4, 2, 3, 1}, 5);
  const auto t = tokenize("a b a c", vocab, false);
  const auto e = raw(4, fixtures::random_vector(rng, 4), fixtures::random_vector(rng, 16));
  ReduceOptions off;
  off.gating = false;
  const auto enc = encode_text(t, e, h, TextKind::passage, off);
  EXPECT_EQ(enc.words.size(), t.unique_stems.size());
  for (const auto& w : enc.words) EXPECT_EQ(w.vector.size(), 1u);
  auto no_uni = ReductionHeads::initialize({4, 2, 3, 0}, 5);
  for (const auto& w : encode_text(t, e, no_uni, TextKind::passage).words) EXPECT_EQ(w.vector.size(), 3u);
}

TEST(Heads, InitializeRangesAndValidate) {
  const auto h = ReductionHeads::initialize({16, 4, 3, 1}, 9);
  h.validate();
  const double bound = 1.0 / 4.0;
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_LE(std::abs(h.w_cls(r, c)), bound);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_LE(std::abs(h.w_uni(r, 0)), 1.0 / std::sqrt(3.0));
  EXPECT_EQ(h.w_gate, (Vector{0, 0, 0}));
  EXPECT_EQ(h.b_gate, 0.5);
  EXPECT_EQ(h.gamma, 0.0);
  EXPECT_EQ(h, ReductionHeads::initialize({16, 4, 3, 1}, 9));
  EXPECT_NE(h, ReductionHeads::initialize({16, 4, 3, 1}, 10));
  EXPECT_THROW(ReductionHeads::initialize({16, 4, 3, 2}, 9), Error);
  EXPECT_THROW(ReductionHeads::initialize({16, 0, 3, 0}, 9), Error);
}

TEST(Heads, FileRoundTripAndCorruption) {
  const auto dir = fixtures::scratch_dir("heads");
  const auto h = ReductionHeads::initialize({8, 4, 3, 1}, 1).rounded_to_float();
  save_heads(dir / "h.bin", h);
  EXPECT_EQ(load_heads(dir / "h.bin"), h);
  const auto bytes = fixtures::read_text(dir / "h.bin");
  EXPECT_EQ(bytes.size(), 4u + 5 * 4 + 4 * (8 * 4 + 8 * 3 + 3 + 1 + 1 + 3));
  EXPECT_THROW(heads_from_bytes(bytes + "x"), FormatError);
  EXPECT_THROW(heads_from_bytes(bytes.substr(0, bytes.size() - 1)), FormatError);
  EXPECT_THROW(heads_from_bytes("XXXX" + bytes.substr(4)), FormatError);
}
