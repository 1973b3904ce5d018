#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace colberter {

using TokenId = std::uint32_t;

inline constexpr std::string_view kUnknownToken = "[UNK]";
inline constexpr std::string_view kContinuationPrefix = "##";

/// WordPiece vocabulary: token string <-> dense id. Continuation pieces carry
/// the "##" prefix. The unknown token must be present.
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> tokens);

  /// One token per line; the line number is the id.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::optional<TokenId> find(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  TokenId unknown_id() const { return unknown_id_; }
  std::size_t size() const { return tokens_.size(); }
  std::span<const std::string> tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  TokenId unknown_id_ = 0;
};

/// Byte offsets [begin, end) into the source text.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

struct WholeWord {
  std::string text;
  Span span;
  bool operator==(const WholeWord&) const = default;
};

struct StemGroup {
  std::string stem;
  std::vector<std::size_t> positions;  // subword positions of every occurrence
};

struct TokenizedText {
  std::vector<WholeWord> whole_words;
  std::vector<TokenId> subword_ids;
  std::vector<std::size_t> subword_to_word;
  std::vector<StemGroup> unique_stems;  // first-occurrence order
};

/// Splits on Unicode whitespace; every punctuation or symbol character becomes
/// a word of its own.
std::vector<WholeWord> split_whole_words(std::string_view text);

/// Greedy longest-prefix WordPiece over a single word. The word is lowercased
/// first. Falls back to a single unknown id if any step finds no piece.
std::vector<TokenId> wordpiece_tokenize(std::string_view word, const Vocabulary& vocab);

/// Maps a lowercased word to its unique-word key.
std::string word_key(std::string_view lowercase_word, bool stemming);

TokenizedText tokenize(std::string_view text, const Vocabulary& vocab, bool stemming);

/// Per-passage averages of the token counts in a corpus.
struct TokenStats {
  std::size_t documents = 0;
  double all_subwords = 0;
  double unique_subwords = 0;
  double all_words = 0;
  double unique_words = 0;
  double unique_stemmed_words = 0;
  double retained_pct = 0;  // unique_stemmed_words / all_subwords
  bool stemming = true;
  bool punctuation_counted = true;
};

/// Streaming accumulator behind corpus_stats. Partial accumulators merge in
/// a fixed order so sharded runs give the same result.
class TokenStatsAccumulator {
 public:
  explicit TokenStatsAccumulator(bool stemming) : stemming_(stemming) {}

  void add(const TokenizedText& text);
  void merge(const TokenStatsAccumulator& other);
  TokenStats finish() const;

 private:
  struct CompensatedSum {
    double sum = 0;
    double compensation = 0;
    void add(double value);
    double value() const { return sum + compensation; }
  };

  bool stemming_;
  std::size_t documents_ = 0;
  CompensatedSum all_subwords_, unique_subwords_, all_words_, unique_words_, unique_stems_;
};

TokenStats corpus_stats(std::span<const std::string> texts, const Vocabulary& vocab,
                        bool stemming);

struct Document {
  std::string id;
  std::string text;
};

/// Reads {"id": ..., "text": ...} JSON lines. Blank lines are skipped.
void for_each_document(std::istream& in, const std::function<void(Document&&)>& fn);
std::vector<Document> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, std::span<const Document> docs);

TokenStats corpus_stats(std::istream& corpus, const Vocabulary& vocab, bool stemming);

}  // namespace colberter
