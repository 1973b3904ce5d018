#include "colberter/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "colberter/error.hpp"
#include "colberter/rng.hpp"
#include "colberter/unicode.hpp"

namespace colberter::synth {

namespace {

const std::vector<std::string> kSyllables = {
    "ka", "lo", "mi", "ne", "ru", "sa", "to", "vi", "de", "po", "ga", "fu",
    "ri", "zo", "be", "ta", "mo", "ni", "ke", "lu", "xa", "pe", "di", "so"};

class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}
  std::uint64_t next() { return counter_bits(seed_, stream_, counter_++); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }
  /// Roughly Zipfian pick in [0, n).
  std::size_t zipf(std::size_t n) {
    const double u = static_cast<double>(next() >> 11) * 0x1.0p-53;
    const auto i = static_cast<std::size_t>(std::pow(static_cast<double>(n) + 1.0, u)) - 1;
    return std::min(i, n - 1);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
};

std::set<std::string> word_set(std::string_view text) {
  std::set<std::string> out;
  for (const auto& w : split_whole_words(text)) out.insert(word_key(unicode::to_lower(w.text), true));
  return out;
}

}  // namespace

const std::vector<std::string>& function_words() {
  static const std::vector<std::string> words = {"the", "of", "and", "a", "to", "in", "is", "for",
                                                 "on", "with", "as", "by", "at", "from"};
  return words;
}

Collection make_collection(const Options& options) {
  if (options.content_words == 0 || options.docs == 0 || options.min_doc_words == 0 ||
      options.max_doc_words < options.min_doc_words || options.query_words == 0) {
    throw Error("synth: invalid options");
  }
  Stream words_rng(options.seed, 1);
  std::set<std::string> seen;
  std::vector<std::string> content;
  while (content.size() < options.content_words) {
    std::string w;
    const std::size_t syllables = 2 + words_rng.below(3);
    for (std::size_t s = 0; s < syllables; ++s) w += kSyllables[words_rng.below(kSyllables.size())];
    if (seen.insert(w).second) content.push_back(std::move(w));
  }

  // Vocabulary: specials, punctuation, function words, syllable pieces, and
  // every other content word whole so that the rest split into pieces.
  std::vector<std::string> tokens;
  std::set<std::string> in_vocab;
  const auto add = [&](const std::string& t) {
    if (in_vocab.insert(t).second) tokens.push_back(t);
  };
  for (const char* t : {"[UNK]", "[CLS]", "[SEP]", ".", ",", "?", "!"}) add(t);
  for (const auto& w : function_words()) add(w);
  for (const auto& s : kSyllables) {
    add(s);
    add(std::string(kContinuationPrefix) + s);
  }
  for (std::size_t i = 0; i < content.size(); i += 2) add(content[i]);

  Collection c{Vocabulary(std::move(tokens)), content, {}, {}, {}};

  Stream doc_rng(options.seed, 2);
  const auto& fw = function_words();
  for (std::size_t d = 0; d < options.docs; ++d) {
    const std::size_t n =
        options.min_doc_words + doc_rng.below(options.max_doc_words - options.min_doc_words + 1);
    std::string text;
    for (std::size_t i = 0; i < n; ++i) {
      std::string w = doc_rng.below(3) == 0 ? fw[doc_rng.below(fw.size())]
                                             : content[doc_rng.zipf(content.size())];
      if (i == 0) w[0] = static_cast<char>(w[0] - 'a' + 'A');
      if (!text.empty()) text += ' ';
      text += w;
      if (i + 1 < n && doc_rng.below(10) == 0) text += ',';
    }
    text += '.';
    c.docs.push_back({"D" + std::to_string(d), std::move(text)});
  }

  Stream query_rng(options.seed, 3);
  for (std::size_t q = 0; q < options.queries; ++q) {
    const std::size_t source = query_rng.below(c.docs.size());
    std::vector<std::string> doc_content;
    for (const auto& w : split_whole_words(c.docs[source].text)) {
      const auto lower = unicode::to_lower(w.text);
      if (!unicode::is_punctuation(unicode::decode(lower, 0).codepoint) &&
          std::find(fw.begin(), fw.end(), lower) == fw.end()) {
        doc_content.push_back(lower);
      }
    }
    std::string text;
    for (std::size_t i = 0; i < options.query_words && !doc_content.empty(); ++i) {
      if (!text.empty()) text += ' ';
      text += doc_content[query_rng.below(doc_content.size())];
    }
    if (query_rng.below(2) == 0) text = "the " + text;
    const std::string qid = "Q" + std::to_string(q);
    c.queries.push_back({qid, text});
    c.qrels.judgments[qid][c.docs[source].id] = 2;
    // A couple of partially matching docs get grade 1.
    const auto query_words = word_set(text);
    std::size_t partial = 0;
    for (std::size_t d = 0; d < c.docs.size() && partial < 2; ++d) {
      if (d == source) continue;
      const auto doc_words = word_set(c.docs[d].text);
      std::size_t overlap = 0;
      for (const auto& w : query_words) overlap += doc_words.contains(w);
      if (overlap * 2 > query_words.size()) {
        c.qrels.judgments[qid][c.docs[d].id] = 1;
        ++partial;
      }
    }
  }
  return c;
}

double overlap_teacher(std::string_view query, std::string_view passage) {
  const auto q = word_set(query);
  if (q.empty()) return 0.0;
  const auto p = word_set(passage);
  const auto& fw = function_words();
  std::size_t hits = 0, counted = 0;
  for (const auto& w : q) {
    if (std::find(fw.begin(), fw.end(), w) != fw.end()) continue;
    ++counted;
    hits += p.contains(w);
  }
  return counted == 0 ? 0.0 : 10.0 * static_cast<double>(hits) / static_cast<double>(counted);
}

std::vector<TrainTriple> make_triples(const Collection& collection, std::size_t count,
                                      std::uint64_t seed) {
  if (collection.queries.empty()) throw Error("synth: collection has no queries");
  Stream rng(seed, 4);
  std::vector<TrainTriple> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& q = collection.queries[rng.below(collection.queries.size())];
    const auto& judged = collection.qrels.judgments.at(q.id);
    std::string pos_id;
    for (const auto& [doc, grade] : judged) {
      if (grade == 2) pos_id = doc;
    }
    const auto& pos = collection.docs.at(std::stoul(pos_id.substr(1))).text;
    const auto& neg = collection.docs[rng.below(collection.docs.size())].text;
    out.push_back({q.text, pos, neg, overlap_teacher(q.text, pos) - overlap_teacher(q.text, neg)});
  }
  return out;
}

void write_queries(const std::filesystem::path& path, const std::vector<Query>& queries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& q : queries) out << q.id << '\t' << q.text << '\n';
}

std::vector<Query> read_queries(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<Query> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError("queries line " + std::to_string(line_no) + ": expected 'qid<TAB>text'");
    }
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

}  // namespace colberter::synth
