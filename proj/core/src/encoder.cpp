#include "colberter/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "colberter/binary_io.hpp"
#include "colberter/error.hpp"
#include "colberter/rng.hpp"

namespace colberter {

namespace {

constexpr std::uint32_t kEmbeddingVersion = 1;
constexpr std::uint64_t kClsStream = std::numeric_limits<std::uint64_t>::max();  // "position -1"

std::vector<double> seeded_unit_vector(std::uint64_t seed, std::uint64_t stream, std::size_t dim) {
  std::vector<double> v(dim);
  double norm2 = 0;
  for (std::size_t k = 0; k < dim; ++k) {
    v[k] = counter_uniform(seed, stream, k);
    norm2 += v[k] * v[k];
  }
  // A draw of exactly zero in every component is not a practical concern, but
  // keep the output well defined.
  if (norm2 == 0) {
    v[0] = 1;
    return v;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return v;
}

bool normalize(std::vector<double>& v) {
  double norm2 = 0;
  for (const double x : v) norm2 += x * x;
  if (norm2 == 0) return false;
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
  return true;
}

}  // namespace

EncoderOutput reference_encode(const TokenizedText& text, std::uint64_t seed, std::size_t dim,
                               std::size_t window) {
  if (dim == 0) throw Error("reference encoder: dim must be >= 1");
  EncoderOutput out;
  out.dim = dim;
  const std::size_t n = text.subword_ids.size();
  if (n == 0) {
    const auto cls = seeded_unit_vector(seed, kClsStream, dim);
    out.cls_raw.assign(cls.begin(), cls.end());
    return out;
  }

  std::vector<std::vector<double>> base;
  base.reserve(n);
  for (const TokenId id : text.subword_ids) base.push_back(seeded_unit_vector(seed, id, dim));

  out.token_raw.resize(n * dim);
  std::vector<double> cls(dim, 0.0);
  std::vector<double> ctx(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= window ? i - window : 0;
    const std::size_t hi = std::min(n - 1, i + window);
    std::fill(ctx.begin(), ctx.end(), 0.0);
    double total_weight = 0.0;
    for (std::size_t j = lo; j <= hi; ++j) {
      const double w = 1.0 / (1.0 + static_cast<double>(j > i ? j - i : i - j));
      total_weight += w;
      for (std::size_t k = 0; k < dim; ++k) ctx[k] += w * base[j][k];
    }
    for (double& x : ctx) x /= total_weight;
    if (!normalize(ctx)) ctx = base[i];
    for (std::size_t k = 0; k < dim; ++k) {
      out.token_raw[i * dim + k] = static_cast<float>(ctx[k]);
      cls[k] += ctx[k];
    }
  }
  for (double& x : cls) x /= static_cast<double>(n);
  if (!normalize(cls)) cls = seeded_unit_vector(seed, kClsStream, dim);
  out.cls_raw.assign(cls.begin(), cls.end());
  return out;
}

ReferenceEncoder::ReferenceEncoder(ReferenceEncoderConfig config) : config_(config) {
  if (config_.dim == 0) throw Error("reference encoder: dim must be >= 1");
}

EncoderOutput ReferenceEncoder::encode(const TokenizedText& text, std::string_view) const {
  return reference_encode(text, config_.seed, config_.dim, config_.window);
}

void write_embedding_file(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, EncoderOutput>>& docs) {
  const std::size_t dim = docs.empty() ? 0 : docs.front().second.dim;
  io::BinaryWriter w;
  w.magic("CBEM");
  w.u32(kEmbeddingVersion);
  w.u32(static_cast<std::uint32_t>(dim));
  w.u64(docs.size());
  for (const auto& [id, enc] : docs) {
    if (enc.dim != dim || enc.cls_raw.size() != dim || enc.token_raw.size() % dim != 0) {
      throw Error("embedding file: inconsistent dimensions for doc '" + id + "'");
    }
    w.u64(id.size());
    w.bytes(id);
    w.u32(static_cast<std::uint32_t>(enc.token_count()));
    w.floats(enc.cls_raw);
    w.floats(enc.token_raw);
  }
  w.write_file(path);
}

EmbeddingMap read_embedding_file(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  io::BinaryReader r(data);
  r.expect_magic("CBEM");
  r.set_truncation_message("truncated file: header");
  if (r.u32() != kEmbeddingVersion) throw FormatError("bad format: unsupported version");
  const std::size_t dim = r.u32();
  const std::uint64_t count = r.u64();
  EmbeddingMap out;
  for (std::uint64_t d = 0; d < count; ++d) {
    r.set_truncation_message("truncated file: doc index " + std::to_string(d));
    const std::uint64_t id_len = r.u64();
    if (id_len > r.remaining()) throw FormatError("truncated file: doc index " + std::to_string(d));
    std::string id = r.bytes(id_len);
    const std::uint32_t n = r.u32();
    if ((static_cast<std::uint64_t>(n) + 1) * dim * 4 > r.remaining()) {
      throw FormatError("truncated file: doc index " + std::to_string(d));
    }
    EncoderOutput enc;
    enc.dim = dim;
    enc.cls_raw.resize(dim);
    enc.token_raw.resize(static_cast<std::size_t>(n) * dim);
    r.floats(enc.cls_raw);
    r.floats(enc.token_raw);
    out.insert_or_assign(std::move(id), std::move(enc));
  }
  return out;
}

EmbeddingFileEncoder::EmbeddingFileEncoder(EmbeddingMap embeddings)
    : embeddings_(std::move(embeddings)) {
  if (!embeddings_.empty()) dim_ = embeddings_.begin()->second.dim;
}

EncoderOutput EmbeddingFileEncoder::encode(const TokenizedText& text, std::string_view key) const {
  const auto it = embeddings_.find(key);
  if (it == embeddings_.end()) throw Error("no embedding for '" + std::string(key) + "'");
  if (it->second.token_count() != text.subword_ids.size()) {
    throw Error("embedding for '" + std::string(key) + "' has " +
                std::to_string(it->second.token_count()) + " tokens, tokenization has " +
                std::to_string(text.subword_ids.size()));
  }
  return it->second;
}

}  // namespace colberter
