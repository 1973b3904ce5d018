#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "colberter/encoder.hpp"
#include "colberter/reduce.hpp"
#include "colberter/tokenizer.hpp"

namespace colberter {

struct IndexConfig {
  bool exact_match = false;
  bool stemming = true;
  ReduceOptions reduce;
  bool store_removed_words = true;
  std::size_t threads = 0;  // 0 = hardware concurrency
};

/// How the index was encoded; queries must go through the same encoder.
struct EncoderSpec {
  std::string kind = "reference";  // "reference" or "external"
  ReferenceEncoderConfig reference;
};

struct IndexManifest {
  std::uint32_t format_version = 1;
  HeadDims dims;
  bool em_enabled = false;
  bool stemming = true;
  bool gating = true;
  double threshold = 0.0;
  bool uni_nonneg = false;
  bool store_removed_words = true;
  EncoderSpec encoder;
  std::size_t doc_count = 0;
  std::size_t total_word_entries = 0;
  std::size_t total_removed_words = 0;
  std::size_t total_subwords = 0;
  std::size_t total_whole_words = 0;
  std::size_t total_unique_stems = 0;
  std::string heads_sha256;  // of heads.bin, checked on load
  std::string vocab_sha256;  // of vocab.txt, checked on load
  std::string ids_sha256;    // of ids.tsv, checked on load
  std::string config_hash;

  nlohmann::json to_json() const;
  static IndexManifest from_json(const nlohmann::json& j);
};

struct ScoredDoc {
  std::uint32_t ordinal = 0;
  double score = 0.0;
  bool operator==(const ScoredDoc&) const = default;
};

/// Ranking order: score descending, then lower ordinal first.
bool ranks_before(const ScoredDoc& a, const ScoredDoc& b);

/// Exact brute-force inner-product index over the CLS vectors.
class DenseClsIndex {
 public:
  DenseClsIndex() = default;
  DenseClsIndex(std::size_t dim, std::vector<float> rows);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : rows_.size() / dim_; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(rows_).subspan(i * dim_, dim_);
  }
  std::span<const float> data() const { return rows_; }

  std::vector<ScoredDoc> topk(std::span<const float> query, std::size_t k) const;

 private:
  std::size_t dim_ = 0;
  std::vector<float> rows_;
};

struct PostingList {
  std::vector<std::uint32_t> docs;  // ascending ordinals
  std::vector<float> vectors;       // docs.size() * dim
};

/// Word hash -> postings with inline word vectors.
class InvertedIndex {
 public:
  InvertedIndex() = default;
  explicit InvertedIndex(std::size_t dim) : dim_(dim) {}

  void add(std::uint32_t hash, std::uint32_t doc, std::span<const float> vector);
  const PostingList* find(std::uint32_t hash) const;

  std::size_t dim() const { return dim_; }
  std::size_t term_count() const { return lists_.size(); }
  std::size_t posting_count() const;
  const std::map<std::uint32_t, PostingList>& lists() const { return lists_; }

 private:
  std::size_t dim_ = 0;
  std::map<std::uint32_t, PostingList> lists_;
};

struct StoredDoc {
  std::vector<WordEntry> words;
  std::vector<std::string> removed_stems;
};

struct FetchedDoc {
  std::span<const float> cls;
  const std::vector<WordEntry>* words = nullptr;
  const std::vector<std::string>* removed_stems = nullptr;
};

struct StorageStats {
  std::size_t doc_count = 0;
  std::size_t total_word_entries = 0;
  double vectors_per_doc = 0.0;
  std::size_t cls_payload_bytes = 0;
  std::size_t word_vector_bytes = 0;
  std::size_t posting_count = 0;
  std::size_t term_count = 0;
  std::map<std::string, std::size_t> file_bytes;
};

/// Dense CLS index, word-vector store and (optionally) inverted index for one
/// corpus, plus the vocabulary and heads needed to encode queries.
class IndexSet {
 public:
  static IndexSet build(std::span<const Document> corpus, const Vocabulary& vocab,
                        const Encoder& encoder, const ReductionHeads& heads,
                        const IndexConfig& config, const EncoderSpec& encoder_spec);

  /// Builds with the reference encoder described by `reference`.
  static IndexSet build(std::span<const Document> corpus, const Vocabulary& vocab,
                        const ReductionHeads& heads, const IndexConfig& config,
                        const ReferenceEncoderConfig& reference);

  void save(const std::filesystem::path& dir) const;

  /// Loads an index directory. `heads_override` replaces the stored heads and
  /// must agree with the manifest dims.
  static IndexSet load(const std::filesystem::path& dir,
                       const std::optional<std::filesystem::path>& heads_override = std::nullopt);

  const IndexManifest& manifest() const { return manifest_; }
  const Vocabulary& vocab() const { return *vocab_; }
  const ReductionHeads& heads() const { return heads_; }
  const DenseClsIndex& dense() const { return dense_; }
  const InvertedIndex* inverted() const { return inverted_ ? &*inverted_ : nullptr; }
  std::size_t size() const { return ids_.size(); }

  const std::string& doc_id(std::uint32_t ordinal) const { return ids_.at(ordinal); }
  const std::string& doc_text(std::uint32_t ordinal) const { return texts_.at(ordinal); }
  std::optional<std::uint32_t> ordinal_of(std::string_view id) const;

  std::vector<ScoredDoc> dense_topk(std::span<const float> query_cls, std::size_t k) const;
  /// Exact-match term-at-a-time retrieval; requires an exact-match build.
  std::vector<ScoredDoc> sparse_topk(const EncodedText& query, std::size_t k) const;

  FetchedDoc fetch(std::string_view id) const;
  FetchedDoc fetch(std::uint32_t ordinal) const;
  /// Stored passage representation in scoring form.
  EncodedText passage(std::uint32_t ordinal) const;

  /// Encodes a query with the index's vocabulary, heads and reference encoder.
  EncodedText encode_query(std::string_view text) const;
  EncodedText encode_query(std::string_view text, const Encoder& encoder) const;

  StorageStats storage() const;

  struct Serialized {
    std::string manifest_json, cls_bin, words_bin, inv_bin, ids_tsv, vocab_txt;
  };
  Serialized serialize() const;

 private:
  IndexManifest manifest_;
  std::shared_ptr<const Vocabulary> vocab_;
  ReductionHeads heads_;
  std::vector<std::string> ids_;
  std::vector<std::string> texts_;
  std::unordered_map<std::string, std::uint32_t> ordinals_;
  DenseClsIndex dense_;
  std::vector<StoredDoc> docs_;
  std::optional<InvertedIndex> inverted_;
};

}  // namespace colberter
