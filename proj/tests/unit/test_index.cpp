#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>

#include "colberter/error.hpp"
#include "colberter/index.hpp"
#include "colberter/score.hpp"
#include "test_helpers.hpp"
#include "toy_index.hpp"

using namespace colberter;

namespace {

void expect_error_containing(const std::function<void()>& fn, const std::string& needle) {
  try {
    fn();
    FAIL() << "expected an error containing " << needle;
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

EncodedText pipeline_encode(const fixtures::ToyIndex& t, const Document& doc) {
  const auto tokens = tokenize(doc.text, t.collection.vocab, true);
  const auto raw = reference_encode(tokens, t.encoder.seed, t.encoder.dim, t.encoder.window);
  return encode_text(tokens, raw, t.heads.rounded_to_float(), TextKind::passage, t.config.reduce);
}

}  // namespace

TEST(IndexBuild, ThreeDocToyCorpus) {
  const Vocabulary vocab({"[UNK]", "a", "b", "c", "the", "."});
  const std::vector<Document> docs = {{"x", "a b c."}, {"y", "the a"}, {"z", "c c c"}};
  const auto heads = ReductionHeads::initialize({8, 4, 3, 0}, 1);
  IndexConfig config;
  const auto index = IndexSet::build(docs, vocab, heads, config, {1, 8, 1});
  EXPECT_EQ(index.manifest().doc_count, 3u);
  std::size_t expected = 0;
  for (const auto& d : docs) {
    const auto tokens = tokenize(d.text, vocab, true);
    expected += encode_text(tokens, reference_encode(tokens, 1, 8, 1), heads.rounded_to_float(),
                            TextKind::passage)
                    .words.size();
  }
  EXPECT_EQ(index.manifest().total_word_entries, expected);
  EXPECT_EQ(index.inverted(), nullptr);
}

TEST(IndexBuild, ClosedGateEmptiesInvertedIndex) {
  const auto t = fixtures::make_toy_index({.docs = 20, .b_gate = -100.0});
  EXPECT_EQ(t.index.manifest().total_word_entries, 0u);
  ASSERT_NE(t.index.inverted(), nullptr);
  EXPECT_EQ(t.index.inverted()->term_count(), 0u);
  EXPECT_EQ(t.index.dense().size(), 20u);
}

TEST(IndexBuild, DeterministicAcrossThreadCounts) {
  auto a = fixtures::make_toy_index();
  auto config = a.config;
  config.threads = 7;
  const auto b = IndexSet::build(a.collection.docs, a.collection.vocab, a.heads, config, a.encoder);
  const auto sa = a.index.serialize(), sb = b.serialize();
  EXPECT_EQ(sa.cls_bin, sb.cls_bin);
  EXPECT_EQ(sa.words_bin, sb.words_bin);
  EXPECT_EQ(sa.inv_bin, sb.inv_bin);
  // Thread count is not part of the index identity.
  EXPECT_EQ(sa.manifest_json, sb.manifest_json);
}

TEST(IndexBuild, Errors) {
  const Vocabulary vocab({"[UNK]", "a"});
  const auto heads = ReductionHeads::initialize({8, 4, 3, 0}, 1);
  IndexConfig config;
  expect_error_containing([&] { IndexSet::build({}, vocab, heads, config, {1, 8, 1}); }, "empty corpus");
  const std::vector<Document> dup = {{"x", "a"}, {"x", "a"}};
  expect_error_containing([&] { IndexSet::build(dup, vocab, heads, config, {1, 8, 1}); }, "duplicate doc id");
  const std::vector<Document> one = {{"x", "a"}};
  expect_error_containing([&] { IndexSet::build(one, vocab, heads, config, {1, 16, 1}); }, "encoder width");
  const auto uni = ReductionHeads::initialize({8, 4, 3, 1}, 1);
  expect_error_containing([&] { IndexSet::build(one, vocab, uni, config, {1, 8, 1}); }, "exact matching");
}

TEST(IndexBuild, StoredCountsAgainstUniqueStems) {
  const auto gated = fixtures::make_toy_index();
  const auto& m = gated.index.manifest();
  EXPECT_LE(m.total_word_entries, m.total_unique_stems);
  EXPECT_EQ(m.total_word_entries + m.total_removed_words, m.total_unique_stems);
  EXPECT_LE(m.total_unique_stems, m.total_whole_words);
  EXPECT_LE(m.total_whole_words, m.total_subwords);
  const auto open = fixtures::make_toy_index({.gating = false});
  EXPECT_EQ(open.index.manifest().total_word_entries, open.index.manifest().total_unique_stems);
}

TEST(IndexBuild, InvertedIndexCoversEveryWordEntryOnce) {
  const auto t = fixtures::make_toy_index();
  const auto* inv = t.index.inverted();
  ASSERT_NE(inv, nullptr);
  EXPECT_EQ(inv->posting_count(), t.index.manifest().total_word_entries);
  std::size_t seen = 0;
  for (const auto& [hash, list] : inv->lists()) {
    EXPECT_TRUE(std::is_sorted(list.docs.begin(), list.docs.end()));
    EXPECT_EQ(std::adjacent_find(list.docs.begin(), list.docs.end()), list.docs.end());
    for (std::size_t i = 0; i < list.docs.size(); ++i) {
      const auto doc = t.index.fetch(list.docs[i]);
      const auto it = std::find_if(doc.words->begin(), doc.words->end(), [&](auto& w) { return w.hash == hash; });
      ASSERT_NE(it, doc.words->end());
      EXPECT_TRUE(std::equal(it->vector.begin(), it->vector.end(), list.vectors.begin() + i * inv->dim()));
      ++seen;
    }
  }
  EXPECT_EQ(seen, t.index.manifest().total_word_entries);
}

TEST(DenseTopk, MatchesBruteForceSort) {
  const auto t = fixtures::make_toy_index();
  const auto q = t.index.encode_query("kalo mine the");
  const auto got = t.index.dense_topk(q.cls, t.index.size());
  std::vector<ScoredDoc> expected;
  for (std::uint32_t i = 0; i < t.index.size(); ++i) {
    double s = 0;
    const auto row = t.index.dense().row(i);
    for (std::size_t k = 0; k < row.size(); ++k) s += double(q.cls[k]) * row[k];
    expected.push_back({i, s});
  }
  std::sort(expected.begin(), expected.end(), ranks_before);
  ASSERT_EQ(got.size(), expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].ordinal, expected[i].ordinal);
    EXPECT_EQ(got[i].score, expected[i].score);
  }
}

TEST(DenseTopk, RowQueryRanksItselfFirstAndTies) {
  DenseClsIndex dense(2, {1, 0, 0.6f, 0.8f, 0, 1});
  EXPECT_EQ(dense.topk(dense.row(1), 1)[0].ordinal, 1u);
  DenseClsIndex tied(1, {2, 2});
  const auto top = tied.topk(std::vector<float>{1}, 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].ordinal, 0u);
  EXPECT_EQ(tied.topk(std::vector<float>{1}, 10).size(), 2u);
  EXPECT_THROW(tied.topk(std::vector<float>{1, 2}, 1), Error);
}

TEST(SparseTopk, MatchesBruteForceExactMatch) {
  const auto t = fixtures::make_toy_index();
  for (const auto& query : t.collection.queries) {
    const auto q = t.index.encode_query(query.text);
    const auto got = t.index.sparse_topk(q, t.index.size());
    std::vector<ScoredDoc> expected;
    for (std::uint32_t i = 0; i < t.index.size(); ++i) {
      const auto p = t.index.passage(i);
      bool shares = false;
      for (const auto& qw : q.words)
        for (const auto& pw : p.words) shares |= qw.hash == pw.hash;
      if (shares) expected.push_back({i, score_tokens_exact_match(q, p).score});
    }
    std::sort(expected.begin(), expected.end(), ranks_before);
    ASSERT_EQ(got.size(), expected.size()) << query.text;
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].ordinal, expected[i].ordinal);
      EXPECT_NEAR(got[i].score, expected[i].score, 1e-5);
    }
  }
}

TEST(SparseTopk, UnknownStemsAndCapability) {
  const auto t = fixtures::make_toy_index();
  EXPECT_TRUE(t.index.sparse_topk(t.index.encode_query("zzzz qqqq"), 10).empty());
  const auto dense_only = fixtures::make_toy_index({.exact_match = false});
  expect_error_containing([&] { dense_only.index.sparse_topk(dense_only.index.encode_query("kalo"), 10); },
                          "sparse retrieval requires exact-match build");
}

TEST(Fetch, EqualsPipelineOutput) {
  const auto t = fixtures::make_toy_index();
  for (const auto& doc : t.collection.docs) {
    const auto expected = pipeline_encode(t, doc);
    const auto got = t.index.fetch(doc.id);
    EXPECT_TRUE(std::equal(got.cls.begin(), got.cls.end(), expected.cls.begin(), expected.cls.end()));
    EXPECT_EQ(*got.words, expected.words);
    EXPECT_EQ(*got.removed_stems, expected.removed_stems);
  }
  expect_error_containing([&] { t.index.fetch("nope"); }, "unknown doc id");
}

TEST(Fetch, RemovedStemsOnlyWhenStored) {
  auto t = fixtures::make_toy_index();
  EXPECT_GT(t.index.manifest().total_removed_words, 0u);
  auto config = t.config;
  config.store_removed_words = false;
  const auto bare = IndexSet::build(t.collection.docs, t.collection.vocab, t.heads, config, t.encoder);
  for (std::uint32_t i = 0; i < bare.size(); ++i) {
    const auto f = bare.fetch(i);
    EXPECT_TRUE(f.removed_stems == nullptr || f.removed_stems->empty());
  }
}

TEST(Persistence, RoundTripIsIdentical) {
  const auto t = fixtures::make_toy_index({.uni = true});
  const auto dir = fixtures::scratch_dir("index_rt");
  t.index.save(dir);
  const auto back = IndexSet::load(dir);
  const auto a = t.index.serialize(), b = back.serialize();
  EXPECT_EQ(a.manifest_json, b.manifest_json);
  EXPECT_EQ(a.cls_bin, b.cls_bin);
  EXPECT_EQ(a.words_bin, b.words_bin);
  EXPECT_EQ(a.inv_bin, b.inv_bin);
  EXPECT_EQ(a.ids_tsv, b.ids_tsv);
  EXPECT_EQ(back.heads(), t.index.heads());
  const auto dir2 = fixtures::scratch_dir("index_rt2");
  back.save(dir2);
  for (const char* f : {"manifest.json", "cls.bin", "words.bin", "inv.bin", "ids.tsv", "vocab.txt", "heads.bin"}) {
    EXPECT_EQ(fixtures::read_text(dir / f), fixtures::read_text(dir2 / f)) << f;
  }
}

TEST(Persistence, CorruptionIsDetected) {
  const auto t = fixtures::make_toy_index();
  const auto dir = fixtures::scratch_dir("index_corrupt");
  t.index.save(dir);
  for (const char* f : {"cls.bin", "words.bin", "inv.bin"}) {
    const auto good = fixtures::read_text(dir / f);
    auto bad = good;
    bad[bad.size() / 2] ^= 0x01;
    std::ofstream(dir / f, std::ios::binary) << bad;
    expect_error_containing([&] { IndexSet::load(dir); }, "checksum mismatch");
    std::ofstream(dir / f, std::ios::binary) << good;
  }
  EXPECT_NO_THROW(IndexSet::load(dir));
}

TEST(Persistence, BadMagicAndHeadsMismatch) {
  const auto t = fixtures::make_toy_index();
  const auto dir = fixtures::scratch_dir("index_magic");
  t.index.save(dir);
  const auto other = fixtures::scratch_dir("index_magic_heads");
  save_heads(other / "h.bin", ReductionHeads::initialize({16, 8, 5, 0}, 1));
  expect_error_containing([&] { IndexSet::load(dir, other / "h.bin"); }, "do not match heads dims");
  auto bytes = fixtures::read_text(dir / "cls.bin");
  bytes[0] = 'X';
  std::ofstream(dir / "cls.bin", std::ios::binary) << bytes;
  EXPECT_THROW(IndexSet::load(dir), FormatError);
}

TEST(Storage, Accounting) {
  const auto t = fixtures::make_toy_index();
  const auto s = t.index.storage();
  EXPECT_EQ(s.doc_count, t.index.size());
  EXPECT_DOUBLE_EQ(s.vectors_per_doc, double(s.total_word_entries) / s.doc_count);
  EXPECT_EQ(s.cls_payload_bytes, s.doc_count * t.index.manifest().dims.cls * 4);
  EXPECT_EQ(s.word_vector_bytes, s.total_word_entries * t.index.manifest().dims.word() * 4);
}

TEST(Manifest, JsonRoundTrip) {
  const auto t = fixtures::make_toy_index();
  const auto j = t.index.manifest().to_json();
  EXPECT_EQ(IndexManifest::from_json(j).to_json(), j);
  EXPECT_EQ(j.at("config_hash").get<std::string>().size(), 16u);
}
