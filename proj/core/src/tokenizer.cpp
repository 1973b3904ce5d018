#include "colberter/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "colberter/error.hpp"
#include "colberter/porter.hpp"
#include "colberter/unicode.hpp"

namespace colberter {

namespace {

// BERT's WordPiece gives up on very long words.
constexpr std::size_t kMaxWordPieceChars = 100;

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  ids_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto [it, inserted] = ids_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) throw Error("duplicate vocabulary token '" + tokens_[i] + "'");
  }
  const auto unk = ids_.find(std::string(kUnknownToken));
  if (unk == ids_.end()) throw Error("vocabulary lacks the [UNK] token");
  unknown_id_ = unk->second;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::vector<WholeWord> split_whole_words(std::string_view text) {
  std::vector<WholeWord> words;
  std::size_t word_begin = 0;
  bool in_word = false;
  auto close = [&](std::size_t end) {
    if (in_word) {
      words.push_back({std::string(text.substr(word_begin, end - word_begin)), {word_begin, end}});
      in_word = false;
    }
  };
  for (std::size_t pos = 0; pos < text.size();) {
    const auto [cp, len] = unicode::decode(text, pos);
    if (unicode::is_whitespace(cp)) {
      close(pos);
    } else if (unicode::is_punctuation(cp)) {
      close(pos);
      words.push_back({std::string(text.substr(pos, len)), {pos, pos + len}});
    } else if (!in_word) {
      in_word = true;
      word_begin = pos;
    }
    pos += len;
  }
  close(text.size());
  return words;
}

std::vector<TokenId> wordpiece_tokenize(std::string_view word, const Vocabulary& vocab) {
  const std::string lowered = unicode::to_lower(word);
  if (lowered.empty()) return {};

  // Codepoint boundaries, so pieces never split a UTF-8 sequence.
  std::vector<std::size_t> bounds;
  for (std::size_t pos = 0; pos < lowered.size();) {
    bounds.push_back(pos);
    pos += unicode::decode(lowered, pos).length;
  }
  bounds.push_back(lowered.size());
  if (bounds.size() - 1 > kMaxWordPieceChars) return {vocab.unknown_id()};

  std::vector<TokenId> pieces;
  std::string candidate;
  std::size_t start = 0;
  while (start + 1 < bounds.size()) {
    std::optional<TokenId> match;
    std::size_t end = bounds.size() - 1;
    for (; end > start; --end) {
      candidate.clear();
      if (start > 0) candidate.append(kContinuationPrefix);
      candidate.append(lowered, bounds[start], bounds[end] - bounds[start]);
      if ((match = vocab.find(candidate))) break;
    }
    if (!match) return {vocab.unknown_id()};
    pieces.push_back(*match);
    start = end;
  }
  return pieces;
}

std::string word_key(std::string_view lowercase_word, bool stemming) {
  return stemming ? porter_stem(lowercase_word) : std::string(lowercase_word);
}

TokenizedText tokenize(std::string_view text, const Vocabulary& vocab, bool stemming) {
  TokenizedText out;
  out.whole_words = split_whole_words(text);
  std::unordered_map<std::string, std::size_t> stem_slot;
  for (std::size_t w = 0; w < out.whole_words.size(); ++w) {
    const std::string lowered = unicode::to_lower(out.whole_words[w].text);
    const auto pieces = wordpiece_tokenize(lowered, vocab);
    const std::size_t first = out.subword_ids.size();
    out.subword_ids.insert(out.subword_ids.end(), pieces.begin(), pieces.end());
    out.subword_to_word.insert(out.subword_to_word.end(), pieces.size(), w);

    std::string key = word_key(lowered, stemming);
    auto [it, inserted] = stem_slot.try_emplace(key, out.unique_stems.size());
    if (inserted) out.unique_stems.push_back({std::move(key), {}});
    auto& positions = out.unique_stems[it->second].positions;
    for (std::size_t p = first; p < out.subword_ids.size(); ++p) positions.push_back(p);
  }
  return out;
}

void TokenStatsAccumulator::CompensatedSum::add(double value) {
  // Neumaier summation
  const double t = sum + value;
  if (std::abs(sum) >= std::abs(value)) {
    compensation += (sum - t) + value;
  } else {
    compensation += (value - t) + sum;
  }
  sum = t;
}

void TokenStatsAccumulator::add(const TokenizedText& text) {
  ++documents_;
  std::unordered_set<TokenId> subwords(text.subword_ids.begin(), text.subword_ids.end());
  std::unordered_set<std::string> words;
  for (const auto& w : text.whole_words) words.insert(unicode::to_lower(w.text));
  all_subwords_.add(static_cast<double>(text.subword_ids.size()));
  unique_subwords_.add(static_cast<double>(subwords.size()));
  all_words_.add(static_cast<double>(text.whole_words.size()));
  unique_words_.add(static_cast<double>(words.size()));
  unique_stems_.add(static_cast<double>(text.unique_stems.size()));
}

void TokenStatsAccumulator::merge(const TokenStatsAccumulator& other) {
  documents_ += other.documents_;
  all_subwords_.add(other.all_subwords_.value());
  unique_subwords_.add(other.unique_subwords_.value());
  all_words_.add(other.all_words_.value());
  unique_words_.add(other.unique_words_.value());
  unique_stems_.add(other.unique_stems_.value());
}

TokenStats TokenStatsAccumulator::finish() const {
  if (documents_ == 0) throw Error("empty corpus");
  const double n = static_cast<double>(documents_);
  TokenStats s;
  s.documents = documents_;
  s.stemming = stemming_;
  s.all_subwords = all_subwords_.value() / n;
  s.unique_subwords = unique_subwords_.value() / n;
  s.all_words = all_words_.value() / n;
  s.unique_words = unique_words_.value() / n;
  s.unique_stemmed_words = unique_stems_.value() / n;
  s.retained_pct = s.all_subwords > 0 ? s.unique_stemmed_words / s.all_subwords : 0.0;
  return s;
}

TokenStats corpus_stats(std::span<const std::string> texts, const Vocabulary& vocab,
                        bool stemming) {
  TokenStatsAccumulator acc(stemming);
  for (const auto& t : texts) acc.add(tokenize(t, vocab, stemming));
  return acc.finish();
}

TokenStats corpus_stats(std::istream& corpus, const Vocabulary& vocab, bool stemming) {
  TokenStatsAccumulator acc(stemming);
  for_each_document(corpus, [&](Document&& doc) { acc.add(tokenize(doc.text, vocab, stemming)); });
  return acc.finish();
}

void for_each_document(std::istream& in, const std::function<void(Document&&)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Document doc;
    try {
      const auto j = nlohmann::json::parse(line);
      doc.id = j.at("id").get<std::string>();
      doc.text = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    fn(std::move(doc));
  }
}

std::vector<Document> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path.string());
  std::vector<Document> docs;
  for_each_document(in, [&](Document&& d) { docs.push_back(std::move(d)); });
  return docs;
}

void write_corpus(const std::filesystem::path& path, std::span<const Document> docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus " + path.string());
  for (const auto& d : docs) out << nlohmann::json{{"id", d.id}, {"text", d.text}}.dump() << '\n';
}

}  // namespace colberter
