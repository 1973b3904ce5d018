#include "colberter/index.hpp"

#include <algorithm>
#include <fstream>
#include <openssl/sha.h>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "colberter/binary_io.hpp"
#include "colberter/error.hpp"

namespace colberter {

namespace {

constexpr std::uint32_t kBinVersion = 1;

std::string sha256_hex(std::string_view data, std::size_t hex_chars) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (const unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  out.resize(std::min(hex_chars, out.size()));
  return out;
}

std::string escape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out.push_back(s[i]);
      continue;
    }
    switch (s[++i]) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default: out.push_back(s[i]);
    }
  }
  return out;
}

void put_short_string(io::BinaryWriter& w, std::string_view s) {
  if (s.size() > 0xFFFF) throw Error("stem longer than 65535 bytes");
  w.u16(static_cast<std::uint16_t>(s.size()));
  w.bytes(s);
}

std::string ids_text(const std::vector<std::string>& ids, const std::vector<std::string>& texts) {
  std::ostringstream out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << i << '\t' << escape_field(ids[i]) << '\t' << escape_field(texts[i]) << '\n';
  }
  return out.str();
}

std::string vocab_text(const Vocabulary& vocab) {
  std::string out;
  for (const auto& t : vocab.tokens()) {
    out += t;
    out.push_back('\n');
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

struct EncodedDoc {
  EncodedText encoded;
  std::size_t subwords = 0;
  std::size_t whole_words = 0;
  std::size_t unique_stems = 0;
};

}  // namespace

bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.ordinal < b.ordinal;
}

namespace {

std::vector<ScoredDoc> take_top(std::vector<ScoredDoc> all, std::size_t k) {
  if (k >= all.size()) {
    std::sort(all.begin(), all.end(), ranks_before);
    return all;
  }
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                    ranks_before);
  all.resize(k);
  return all;
}

}  // namespace

// ---- manifest ------------------------------------------------------------

nlohmann::json IndexManifest::to_json() const {
  nlohmann::json encoder_json{{"kind", encoder.kind}};
  if (encoder.kind == "reference") {
    encoder_json["seed"] = encoder.reference.seed;
    encoder_json["dim"] = encoder.reference.dim;
    encoder_json["window"] = encoder.reference.window;
  }
  return nlohmann::json{
      {"format_version", format_version},
      {"dims", {{"d_enc", dims.encoder}, {"d_cls", dims.cls}, {"d_t", dims.token}, {"d_u", dims.uni}}},
      {"em_enabled", em_enabled},
      {"stemming", stemming},
      {"gating", gating},
      {"threshold", threshold},
      {"uni_nonneg", uni_nonneg},
      {"store_removed_words", store_removed_words},
      {"encoder", encoder_json},
      {"doc_count", doc_count},
      {"total_word_entries", total_word_entries},
      {"total_removed_words", total_removed_words},
      {"total_subwords", total_subwords},
      {"total_whole_words", total_whole_words},
      {"total_unique_stems", total_unique_stems},
      {"punctuation_counted_as_words", true},
      {"heads_sha256", heads_sha256},
      {"vocab_sha256", vocab_sha256},
      {"ids_sha256", ids_sha256},
      {"config_hash", config_hash},
  };
}

IndexManifest IndexManifest::from_json(const nlohmann::json& j) {
  try {
    IndexManifest m;
    m.format_version = j.at("format_version").get<std::uint32_t>();
    if (m.format_version != 1) throw FormatError("manifest: unsupported format_version");
    const auto& d = j.at("dims");
    m.dims = {d.at("d_enc").get<std::size_t>(), d.at("d_cls").get<std::size_t>(),
              d.at("d_t").get<std::size_t>(), d.at("d_u").get<std::size_t>()};
    m.em_enabled = j.at("em_enabled").get<bool>();
    m.stemming = j.at("stemming").get<bool>();
    m.gating = j.at("gating").get<bool>();
    m.threshold = j.at("threshold").get<double>();
    m.uni_nonneg = j.at("uni_nonneg").get<bool>();
    m.store_removed_words = j.at("store_removed_words").get<bool>();
    const auto& e = j.at("encoder");
    m.encoder.kind = e.at("kind").get<std::string>();
    if (m.encoder.kind == "reference") {
      m.encoder.reference.seed = e.at("seed").get<std::uint64_t>();
      m.encoder.reference.dim = e.at("dim").get<std::size_t>();
      m.encoder.reference.window = e.at("window").get<std::size_t>();
    }
    m.doc_count = j.at("doc_count").get<std::size_t>();
    m.total_word_entries = j.at("total_word_entries").get<std::size_t>();
    m.total_removed_words = j.at("total_removed_words").get<std::size_t>();
    m.total_subwords = j.at("total_subwords").get<std::size_t>();
    m.total_whole_words = j.at("total_whole_words").get<std::size_t>();
    m.total_unique_stems = j.at("total_unique_stems").get<std::size_t>();
    m.heads_sha256 = j.at("heads_sha256").get<std::string>();
    m.vocab_sha256 = j.at("vocab_sha256").get<std::string>();
    m.ids_sha256 = j.at("ids_sha256").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& ex) {
    throw FormatError(std::string("manifest: ") + ex.what());
  }
}

// ---- dense ---------------------------------------------------------------

DenseClsIndex::DenseClsIndex(std::size_t dim, std::vector<float> rows)
    : dim_(dim), rows_(std::move(rows)) {
  if (dim_ == 0 || rows_.size() % dim_ != 0) throw Error("dense index: ragged rows");
}

std::vector<ScoredDoc> DenseClsIndex::topk(std::span<const float> query, std::size_t k) const {
  if (query.size() != dim_) {
    throw Error("dense_topk: query width " + std::to_string(query.size()) + " != index width " +
                std::to_string(dim_));
  }
  if (k == 0) throw Error("dense_topk: k must be >= 1");
  std::vector<ScoredDoc> all(size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i] = {static_cast<std::uint32_t>(i), dot(query, row(i))};
  }
  return take_top(std::move(all), k);
}

// ---- inverted ------------------------------------------------------------

void InvertedIndex::add(std::uint32_t hash, std::uint32_t doc, std::span<const float> vector) {
  if (vector.size() != dim_) throw Error("inverted index: vector width mismatch");
  auto& list = lists_[hash];
  if (!list.docs.empty() && list.docs.back() >= doc) {
    throw Error("inverted index: postings must be added in ascending doc order");
  }
  list.docs.push_back(doc);
  list.vectors.insert(list.vectors.end(), vector.begin(), vector.end());
}

const PostingList* InvertedIndex::find(std::uint32_t hash) const {
  const auto it = lists_.find(hash);
  return it == lists_.end() ? nullptr : &it->second;
}

std::size_t InvertedIndex::posting_count() const {
  std::size_t n = 0;
  for (const auto& [hash, list] : lists_) n += list.docs.size();
  return n;
}

// ---- build ---------------------------------------------------------------

IndexSet IndexSet::build(std::span<const Document> corpus, const Vocabulary& vocab,
                         const Encoder& encoder, const ReductionHeads& input_heads,
                         const IndexConfig& config, const EncoderSpec& encoder_spec) {
  if (corpus.empty()) throw Error("empty corpus");
  input_heads.validate();
  if (encoder.dim() != input_heads.dims.encoder) {
    throw Error("build: encoder width " + std::to_string(encoder.dim()) + " != heads D_enc " +
                std::to_string(input_heads.dims.encoder));
  }
  if (input_heads.uni() && !config.exact_match) {
    throw Error("build: uni mode requires exact matching");
  }

  IndexSet set;
  set.heads_ = input_heads.rounded_to_float();
  set.vocab_ = std::make_shared<const Vocabulary>(vocab);

  set.ids_.reserve(corpus.size());
  set.texts_.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto [it, inserted] = set.ordinals_.emplace(corpus[i].id, static_cast<std::uint32_t>(i));
    if (!inserted) throw Error("duplicate doc id '" + corpus[i].id + "'");
    set.ids_.push_back(corpus[i].id);
    set.texts_.push_back(corpus[i].text);
  }

  std::vector<EncodedDoc> encoded(corpus.size());
  const auto encode_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto tokens = tokenize(corpus[i].text, vocab, config.stemming);
      const auto raw = encoder.encode(tokens, corpus[i].id);
      encoded[i].encoded = encode_text(tokens, raw, set.heads_, TextKind::passage, config.reduce);
      encoded[i].subwords = tokens.subword_ids.size();
      encoded[i].whole_words = tokens.whole_words.size();
      encoded[i].unique_stems = tokens.unique_stems.size();
    }
  };
  std::size_t threads = config.threads ? config.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, corpus.size() / 16));
  if (threads <= 1) {
    encode_range(0, corpus.size());
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (corpus.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(corpus.size(), begin + chunk);
      workers.emplace_back([&, t, begin, end] {
        try {
          encode_range(begin, end);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  auto& m = set.manifest_;
  m.dims = set.heads_.dims;
  m.em_enabled = config.exact_match;
  m.stemming = config.stemming;
  m.gating = config.reduce.gating;
  m.threshold = config.reduce.threshold;
  m.uni_nonneg = config.reduce.uni_nonneg;
  m.store_removed_words = config.store_removed_words;
  m.encoder = encoder_spec;
  m.doc_count = corpus.size();

  const std::size_t d_cls = m.dims.cls;
  const std::size_t d_word = m.dims.word();
  std::vector<float> cls_rows;
  cls_rows.reserve(corpus.size() * d_cls);
  set.docs_.resize(corpus.size());
  if (config.exact_match) set.inverted_.emplace(d_word);
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    auto& e = encoded[i];
    cls_rows.insert(cls_rows.end(), e.encoded.cls.begin(), e.encoded.cls.end());
    m.total_word_entries += e.encoded.words.size();
    m.total_removed_words += e.encoded.removed_stems.size();
    m.total_subwords += e.subwords;
    m.total_whole_words += e.whole_words;
    m.total_unique_stems += e.unique_stems;
    if (set.inverted_) {
      for (const auto& w : e.encoded.words) {
        set.inverted_->add(w.hash, static_cast<std::uint32_t>(i), w.vector);
      }
    }
    set.docs_[i].words = std::move(e.encoded.words);
    if (config.store_removed_words) set.docs_[i].removed_stems = std::move(e.encoded.removed_stems);
  }
  set.dense_ = DenseClsIndex(d_cls, std::move(cls_rows));

  m.heads_sha256 = sha256_hex(heads_to_bytes(set.heads_), 64);
  m.vocab_sha256 = sha256_hex(vocab_text(vocab), 64);
  m.ids_sha256 = sha256_hex(ids_text(set.ids_, set.texts_), 64);
  nlohmann::json cfg = m.to_json();
  for (const char* volatile_key : {"doc_count", "total_word_entries", "total_removed_words",
                                   "total_subwords", "total_whole_words", "total_unique_stems",
                                   "ids_sha256", "config_hash"}) {
    cfg.erase(volatile_key);
  }
  m.config_hash = sha256_hex(cfg.dump(), 16);
  return set;
}

IndexSet IndexSet::build(std::span<const Document> corpus, const Vocabulary& vocab,
                         const ReductionHeads& heads, const IndexConfig& config,
                         const ReferenceEncoderConfig& reference) {
  const ReferenceEncoder encoder(reference);
  return build(corpus, vocab, encoder, heads, config, EncoderSpec{"reference", reference});
}

// ---- queries -------------------------------------------------------------

std::optional<std::uint32_t> IndexSet::ordinal_of(std::string_view id) const {
  const auto it = ordinals_.find(std::string(id));
  if (it == ordinals_.end()) return std::nullopt;
  return it->second;
}

std::vector<ScoredDoc> IndexSet::dense_topk(std::span<const float> query_cls, std::size_t k) const {
  return dense_.topk(query_cls, k);
}

std::vector<ScoredDoc> IndexSet::sparse_topk(const EncodedText& query, std::size_t k) const {
  if (!inverted_) throw CapabilityError("sparse retrieval requires exact-match build");
  if (k == 0) throw Error("sparse_topk: k must be >= 1");
  const std::size_t dim = inverted_->dim();
  std::vector<double> acc(size(), 0.0);
  std::vector<char> touched(size(), 0);
  std::vector<std::uint32_t> order;
  for (const auto& q : query.words) {
    if (q.vector.size() != dim) {
      throw Error("sparse_topk: query width " + std::to_string(q.vector.size()) +
                  " != index width " + std::to_string(dim));
    }
    const PostingList* list = inverted_->find(q.hash);
    if (!list) continue;
    for (std::size_t p = 0; p < list->docs.size(); ++p) {
      const std::uint32_t doc = list->docs[p];
      acc[doc] += dot(std::span<const float>(q.vector),
                      std::span<const float>(list->vectors).subspan(p * dim, dim));
      if (!touched[doc]) {
        touched[doc] = 1;
        order.push_back(doc);
      }
    }
  }
  std::vector<ScoredDoc> hits;
  hits.reserve(order.size());
  for (const std::uint32_t doc : order) hits.push_back({doc, acc[doc]});
  return take_top(std::move(hits), k);
}

FetchedDoc IndexSet::fetch(std::string_view id) const {
  const auto ordinal = ordinal_of(id);
  if (!ordinal) throw Error("unknown doc id '" + std::string(id) + "'");
  return fetch(*ordinal);
}

FetchedDoc IndexSet::fetch(std::uint32_t ordinal) const {
  if (ordinal >= size()) throw Error("doc ordinal out of range");
  return {dense_.row(ordinal), &docs_[ordinal].words, &docs_[ordinal].removed_stems};
}

EncodedText IndexSet::passage(std::uint32_t ordinal) const {
  const auto f = fetch(ordinal);
  EncodedText p;
  p.kind = TextKind::passage;
  p.cls.assign(f.cls.begin(), f.cls.end());
  p.words = *f.words;
  p.removed_stems = *f.removed_stems;
  return p;
}

EncodedText IndexSet::encode_query(std::string_view text) const {
  if (manifest_.encoder.kind != "reference") {
    throw CapabilityError("index was built from external embeddings; supply a query encoder");
  }
  const ReferenceEncoder encoder(manifest_.encoder.reference);
  return encode_query(text, encoder);
}

EncodedText IndexSet::encode_query(std::string_view text, const Encoder& encoder) const {
  const auto tokens = tokenize(text, *vocab_, manifest_.stemming);
  const auto raw = encoder.encode(tokens, "");
  ReduceOptions options;
  options.uni_nonneg = manifest_.uni_nonneg;
  return encode_text(tokens, raw, heads_, TextKind::query, options);
}

// ---- persistence ---------------------------------------------------------

IndexSet::Serialized IndexSet::serialize() const {
  Serialized s;
  s.manifest_json = manifest_.to_json().dump(2) + "\n";

  io::BinaryWriter cls;
  cls.magic("CBCL");
  cls.u32(kBinVersion);
  cls.u64(dense_.size());
  cls.u32(static_cast<std::uint32_t>(dense_.dim()));
  cls.floats(dense_.data());
  cls.crc_trailer();
  s.cls_bin = cls.buffer();

  const std::size_t d_word = manifest_.dims.word();
  io::BinaryWriter words;
  words.magic("CBWD");
  words.u32(kBinVersion);
  words.u64(docs_.size());
  words.u32(static_cast<std::uint32_t>(d_word));
  words.u8(manifest_.store_removed_words ? 1 : 0);
  for (const auto& doc : docs_) {
    words.u32(static_cast<std::uint32_t>(doc.words.size()));
    for (const auto& w : doc.words) {
      words.u32(w.hash);
      put_short_string(words, w.stem);
      words.floats(w.vector);
      words.f32(w.gate);
    }
    if (manifest_.store_removed_words) {
      words.u32(static_cast<std::uint32_t>(doc.removed_stems.size()));
      for (const auto& stem : doc.removed_stems) put_short_string(words, stem);
    }
  }
  words.crc_trailer();
  s.words_bin = words.buffer();

  if (inverted_) {
    io::BinaryWriter inv;
    inv.magic("CBIV");
    inv.u32(kBinVersion);
    inv.u32(static_cast<std::uint32_t>(inverted_->dim()));
    inv.u64(inverted_->term_count());
    for (const auto& [hash, list] : inverted_->lists()) {
      inv.u32(hash);
      inv.u32(static_cast<std::uint32_t>(list.docs.size()));
      for (std::size_t p = 0; p < list.docs.size(); ++p) {
        inv.u32(list.docs[p]);
        inv.floats(std::span<const float>(list.vectors).subspan(p * inverted_->dim(), inverted_->dim()));
      }
    }
    inv.crc_trailer();
    s.inv_bin = inv.buffer();
  }

  s.ids_tsv = ids_text(ids_, texts_);
  s.vocab_txt = vocab_text(*vocab_);
  return s;
}

void IndexSet::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  const auto s = serialize();
  write_text_file(dir / "manifest.json", s.manifest_json);
  write_text_file(dir / "cls.bin", s.cls_bin);
  write_text_file(dir / "words.bin", s.words_bin);
  if (inverted_) {
    write_text_file(dir / "inv.bin", s.inv_bin);
  } else {
    std::filesystem::remove(dir / "inv.bin");
  }
  write_text_file(dir / "ids.tsv", s.ids_tsv);
  write_text_file(dir / "vocab.txt", s.vocab_txt);
  save_heads(dir / "heads.bin", heads_);
}

IndexSet IndexSet::load(const std::filesystem::path& dir,
                        const std::optional<std::filesystem::path>& heads_override) {
  IndexSet set;
  nlohmann::json manifest_json;
  try {
    manifest_json = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
  set.manifest_ = IndexManifest::from_json(manifest_json);
  const auto& m = set.manifest_;

  // heads.bin and vocab.txt carry no checksum of their own; the manifest
  // records their digests.
  const auto heads_bytes = io::read_file(heads_override.value_or(dir / "heads.bin"));
  if (!heads_override && sha256_hex(heads_bytes, 64) != m.heads_sha256) {
    throw FormatError("heads.bin: digest does not match manifest");
  }
  set.heads_ = heads_from_bytes(heads_bytes);
  if (set.heads_.dims != m.dims) {
    const auto fmt = [](const HeadDims& d) {
      return "(D_enc=" + std::to_string(d.encoder) + ", d_cls=" + std::to_string(d.cls) +
             ", d_t=" + std::to_string(d.token) + ", d_u=" + std::to_string(d.uni) + ")";
    };
    throw Error("index manifest dims " + fmt(m.dims) + " do not match heads dims " +
                fmt(set.heads_.dims));
  }
  if (sha256_hex(io::read_file(dir / "vocab.txt"), 64) != m.vocab_sha256) {
    throw FormatError("vocab.txt: digest does not match manifest");
  }
  set.vocab_ = std::make_shared<const Vocabulary>(Vocabulary::load(dir / "vocab.txt"));

  {
    const auto text = io::read_file(dir / "ids.tsv");
    if (sha256_hex(text, 64) != m.ids_sha256) throw FormatError("ids.tsv: digest does not match manifest");
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const auto t1 = line.find('\t');
      const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
      if (t2 == std::string::npos) throw FormatError("ids.tsv: malformed line");
      if (std::stoull(line.substr(0, t1)) != set.ids_.size()) {
        throw FormatError("ids.tsv: ordinals out of sequence");
      }
      set.ids_.push_back(unescape_field(std::string_view(line).substr(t1 + 1, t2 - t1 - 1)));
      set.texts_.push_back(unescape_field(std::string_view(line).substr(t2 + 1)));
      set.ordinals_.emplace(set.ids_.back(), static_cast<std::uint32_t>(set.ids_.size() - 1));
    }
    if (set.ids_.size() != m.doc_count) throw FormatError("ids.tsv: doc count mismatch");
  }

  {
    const std::string bytes = io::read_file(dir / "cls.bin");
    io::BinaryReader r(io::checked_payload(bytes, "cls.bin"));
    r.expect_magic("CBCL");
    if (r.u32() != kBinVersion) throw FormatError("cls.bin: unsupported version");
    const std::uint64_t n = r.u64();
    const std::uint32_t dim = r.u32();
    if (n != m.doc_count || dim != m.dims.cls) throw FormatError("cls.bin: shape disagrees with manifest");
    std::vector<float> rows(n * dim);
    r.floats(rows);
    if (!r.at_end()) throw FormatError("cls.bin: trailing bytes");
    set.dense_ = DenseClsIndex(dim, std::move(rows));
  }

  const std::size_t d_word = m.dims.word();
  {
    const std::string bytes = io::read_file(dir / "words.bin");
    io::BinaryReader r(io::checked_payload(bytes, "words.bin"));
    r.expect_magic("CBWD");
    if (r.u32() != kBinVersion) throw FormatError("words.bin: unsupported version");
    const std::uint64_t n = r.u64();
    const std::uint32_t dim = r.u32();
    const bool has_removed = r.u8() != 0;
    if (n != m.doc_count || dim != d_word || has_removed != m.store_removed_words) {
      throw FormatError("words.bin: shape disagrees with manifest");
    }
    set.docs_.resize(n);
    std::size_t total = 0;
    for (auto& doc : set.docs_) {
      const std::uint32_t count = r.u32();
      doc.words.resize(count);
      for (auto& w : doc.words) {
        w.hash = r.u32();
        w.stem = r.bytes(r.u16());
        w.vector.resize(dim);
        r.floats(w.vector);
        w.gate = r.f32();
      }
      total += count;
      if (has_removed) {
        doc.removed_stems.resize(r.u32());
        for (auto& stem : doc.removed_stems) stem = r.bytes(r.u16());
      }
    }
    if (!r.at_end()) throw FormatError("words.bin: trailing bytes");
    if (total != m.total_word_entries) throw FormatError("words.bin: entry count mismatch");
  }

  if (m.em_enabled) {
    const std::string bytes = io::read_file(dir / "inv.bin");
    io::BinaryReader r(io::checked_payload(bytes, "inv.bin"));
    r.expect_magic("CBIV");
    if (r.u32() != kBinVersion) throw FormatError("inv.bin: unsupported version");
    const std::uint32_t dim = r.u32();
    if (dim != d_word) throw FormatError("inv.bin: width disagrees with manifest");
    InvertedIndex inv(dim);
    const std::uint64_t terms = r.u64();
    std::vector<float> vec(dim);
    for (std::uint64_t t = 0; t < terms; ++t) {
      const std::uint32_t hash = r.u32();
      const std::uint32_t count = r.u32();
      for (std::uint32_t p = 0; p < count; ++p) {
        const std::uint32_t doc = r.u32();
        if (doc >= m.doc_count) throw FormatError("inv.bin: doc ordinal out of range");
        r.floats(vec);
        inv.add(hash, doc, vec);
      }
    }
    if (!r.at_end()) throw FormatError("inv.bin: trailing bytes");
    set.inverted_ = std::move(inv);
  }
  return set;
}

StorageStats IndexSet::storage() const {
  StorageStats s;
  s.doc_count = size();
  s.total_word_entries = manifest_.total_word_entries;
  s.vectors_per_doc = s.doc_count ? static_cast<double>(s.total_word_entries) / s.doc_count : 0.0;
  s.cls_payload_bytes = s.doc_count * manifest_.dims.cls * sizeof(float);
  s.word_vector_bytes = s.total_word_entries * manifest_.dims.word() * sizeof(float);
  if (inverted_) {
    s.posting_count = inverted_->posting_count();
    s.term_count = inverted_->term_count();
  }
  const auto ser = serialize();
  s.file_bytes["manifest.json"] = ser.manifest_json.size();
  s.file_bytes["cls.bin"] = ser.cls_bin.size();
  s.file_bytes["words.bin"] = ser.words_bin.size();
  if (inverted_) s.file_bytes["inv.bin"] = ser.inv_bin.size();
  s.file_bytes["ids.tsv"] = ser.ids_tsv.size();
  s.file_bytes["vocab.txt"] = ser.vocab_txt.size();
  return s;
}

}  // namespace colberter
