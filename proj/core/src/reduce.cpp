#include "colberter/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <openssl/sha.h>
#include <spdlog/spdlog.h>
#include <unordered_map>

#include "colberter/binary_io.hpp"
#include "colberter/error.hpp"
#include "colberter/rng.hpp"

namespace colberter {

namespace {

constexpr std::uint32_t kHeadsVersion = 1;

void init_uniform(Matrix& m, std::uint64_t seed, std::uint64_t stream) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(m.rows()));
  auto data = m.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = bound * counter_uniform(seed, stream, i);
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void round_to_float(std::span<double> values) {
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

void write_matrix(io::BinaryWriter& w, std::span<const double> values) {
  for (const double v : values) w.f32(static_cast<float>(v));
}

void read_matrix(io::BinaryReader& r, std::span<double> values) {
  for (double& v : values) v = static_cast<double>(r.f32());
}

}  // namespace

ReductionHeads ReductionHeads::initialize(HeadDims dims, std::uint64_t seed) {
  ReductionHeads h;
  h.dims = dims;
  h.w_cls = Matrix(dims.encoder, dims.cls);
  h.w_token = Matrix(dims.encoder, dims.token);
  h.w_gate = Vector(dims.token, 0.0);
  h.b_gate = 0.5;
  h.gamma = 0.0;
  init_uniform(h.w_cls, seed, 1);
  init_uniform(h.w_token, seed, 2);
  if (dims.uni > 0) {
    h.w_uni = Matrix(dims.token, dims.uni);
    init_uniform(h.w_uni, seed, 3);
  }
  h.validate();
  return h;
}

void ReductionHeads::validate() const {
  if (dims.encoder < 1 || dims.cls < 1 || dims.token < 1) {
    throw Error("heads: dimensions must be >= 1");
  }
  if (dims.uni > 1) throw Error("heads: uni layer must have width 1");
  if (w_cls.rows() != dims.encoder || w_cls.cols() != dims.cls) throw Error("heads: W_CLS shape");
  if (w_token.rows() != dims.encoder || w_token.cols() != dims.token) {
    throw Error("heads: W_t shape");
  }
  if (w_gate.size() != dims.token) throw Error("heads: W_s shape");
  if (dims.uni > 0 && (w_uni.rows() != dims.token || w_uni.cols() != dims.uni)) {
    throw Error("heads: W_u shape");
  }
  if (dims.uni == 0 && !w_uni.empty()) throw Error("heads: W_u present without uni layer");
  if (!all_finite(w_cls.data()) || !all_finite(w_token.data()) || !all_finite(w_gate) ||
      !all_finite(w_uni.data()) || !std::isfinite(b_gate) || !std::isfinite(gamma)) {
    throw Error("heads: non-finite parameter");
  }
}

ReductionHeads ReductionHeads::rounded_to_float() const {
  ReductionHeads h = *this;
  round_to_float(h.w_cls.data());
  round_to_float(h.w_token.data());
  round_to_float(h.w_gate);
  round_to_float(h.w_uni.data());
  h.b_gate = static_cast<double>(static_cast<float>(h.b_gate));
  h.gamma = static_cast<double>(static_cast<float>(h.gamma));
  return h;
}

std::string heads_to_bytes(const ReductionHeads& heads) {
  heads.validate();
  io::BinaryWriter w;
  w.magic("CBHD");
  w.u32(kHeadsVersion);
  w.u32(static_cast<std::uint32_t>(heads.dims.encoder));
  w.u32(static_cast<std::uint32_t>(heads.dims.cls));
  w.u32(static_cast<std::uint32_t>(heads.dims.token));
  w.u32(static_cast<std::uint32_t>(heads.dims.uni));
  write_matrix(w, heads.w_cls.data());
  write_matrix(w, heads.w_token.data());
  write_matrix(w, heads.w_gate);
  w.f32(static_cast<float>(heads.b_gate));
  w.f32(static_cast<float>(heads.gamma));
  write_matrix(w, heads.w_uni.data());
  return w.buffer();
}

void save_heads(const std::filesystem::path& path, const ReductionHeads& heads) {
  const std::string bytes = heads_to_bytes(heads);
  io::BinaryWriter w;
  w.bytes(bytes);
  w.write_file(path);
}

ReductionHeads load_heads(const std::filesystem::path& path) {
  return heads_from_bytes(io::read_file(path));
}

ReductionHeads heads_from_bytes(std::string_view data) {
  io::BinaryReader r(data);
  r.expect_magic("CBHD");
  if (r.u32() != kHeadsVersion) throw FormatError("bad format: unsupported heads version");
  ReductionHeads h;
  h.dims.encoder = r.u32();
  h.dims.cls = r.u32();
  h.dims.token = r.u32();
  h.dims.uni = r.u32();
  h.w_cls = Matrix(h.dims.encoder, h.dims.cls);
  h.w_token = Matrix(h.dims.encoder, h.dims.token);
  h.w_gate = Vector(h.dims.token);
  if (h.dims.uni > 0) h.w_uni = Matrix(h.dims.token, h.dims.uni);
  read_matrix(r, h.w_cls.data());
  read_matrix(r, h.w_token.data());
  read_matrix(r, h.w_gate);
  h.b_gate = r.f32();
  h.gamma = r.f32();
  read_matrix(r, h.w_uni.data());
  if (!r.at_end()) throw FormatError("bad format: trailing bytes in heads file");
  h.validate();
  return h;
}

Projection project_2way(const EncoderOutput& encoded, const ReductionHeads& heads) {
  if (encoded.cls_raw.size() != heads.w_cls.rows()) {
    throw Error("project_2way: W_CLS expects encoder width " + std::to_string(heads.w_cls.rows()) +
                ", CLS vector has " + std::to_string(encoded.cls_raw.size()));
  }
  if (encoded.dim != heads.w_token.rows()) {
    throw Error("project_2way: W_t expects encoder width " + std::to_string(heads.w_token.rows()) +
                ", token vectors have " + std::to_string(encoded.dim));
  }
  Projection p;
  p.cls = row_times(std::span<const float>(encoded.cls_raw), heads.w_cls);
  const std::size_t n = encoded.token_count();
  p.tokens.reserve(n);
  for (std::size_t i = 0; i < n; ++i) p.tokens.push_back(row_times(encoded.token(i), heads.w_token));
  return p;
}

std::vector<StemVector> aggregate_bow2(const std::vector<Vector>& tokens,
                                       const TokenizedText& text) {
  if (tokens.size() != text.subword_ids.size()) {
    throw Error("aggregate_bow2: " + std::to_string(tokens.size()) + " vectors for " +
                std::to_string(text.subword_ids.size()) + " subwords");
  }
  std::vector<StemVector> out;
  out.reserve(text.unique_stems.size());
  for (const auto& group : text.unique_stems) {
    if (group.positions.empty()) continue;
    Vector mean(tokens[group.positions.front()].size(), 0.0);
    for (const std::size_t pos : group.positions) {
      for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += tokens[pos][k];
    }
    const double inv = 1.0 / static_cast<double>(group.positions.size());
    for (double& x : mean) x *= inv;
    out.push_back({group.stem, std::move(mean)});
  }
  return out;
}

std::vector<GatedWord> stopword_gate(std::vector<StemVector> words, const ReductionHeads& heads) {
  std::vector<GatedWord> out;
  out.reserve(words.size());
  for (auto& w : words) {
    if (w.vector.size() != heads.w_gate.size()) {
      throw Error("stopword_gate: W_s expects width " + std::to_string(heads.w_gate.size()) +
                  ", word vector has " + std::to_string(w.vector.size()));
    }
    const double gate = std::max(0.0, dot(w.vector, heads.w_gate) + heads.b_gate);
    out.push_back({std::move(w.stem), std::move(w.vector), gate});
  }
  return out;
}

GateResult apply_gate(std::vector<GatedWord> words, double threshold) {
  GateResult result;
  for (auto& w : words) {
    if (w.gate <= threshold) {
      result.removed.push_back(std::move(w.stem));
      continue;
    }
    for (double& x : w.vector) x *= w.gate;
    result.kept.push_back(std::move(w));
  }
  return result;
}

std::vector<GatedWord> uni_project(std::vector<GatedWord> words, const ReductionHeads& heads,
                                   bool nonneg) {
  if (!heads.uni()) throw Error("uni_project: heads have no uni layer");
  for (auto& w : words) {
    if (w.vector.size() != heads.w_uni.rows()) {
      throw Error("uni_project: W_u expects width " + std::to_string(heads.w_uni.rows()) +
                  ", word vector has " + std::to_string(w.vector.size()));
    }
    w.vector = row_times(w.vector, heads.w_uni);
    if (nonneg) {
      for (double& x : w.vector) x = std::max(0.0, x);
    }
  }
  return words;
}

std::uint32_t word_hash(std::string_view stem) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(stem.data()), stem.size(), digest);
  return (static_cast<std::uint32_t>(digest[0]) << 24) | (static_cast<std::uint32_t>(digest[1]) << 16) |
         (static_cast<std::uint32_t>(digest[2]) << 8) | static_cast<std::uint32_t>(digest[3]);
}

EncodedText encode_text(const TokenizedText& text, const EncoderOutput& encoded,
                        const ReductionHeads& heads, TextKind kind, const ReduceOptions& options) {
  if (encoded.token_count() != text.subword_ids.size()) {
    throw Error("encode_text: encoder produced " + std::to_string(encoded.token_count()) +
                " vectors for " + std::to_string(text.subword_ids.size()) + " subwords");
  }
  Projection projected = project_2way(encoded, heads);
  auto words = aggregate_bow2(projected.tokens, text);

  EncodedText out;
  out.kind = kind;
  out.cls.assign(projected.cls.begin(), projected.cls.end());

  std::vector<GatedWord> kept;
  if (kind == TextKind::passage && options.gating) {
    auto gated = apply_gate(stopword_gate(std::move(words), heads), options.threshold);
    kept = std::move(gated.kept);
    out.removed_stems = std::move(gated.removed);
  } else {
    kept.reserve(words.size());
    for (auto& w : words) kept.push_back({std::move(w.stem), std::move(w.vector), 1.0});
  }
  if (heads.uni()) kept = uni_project(std::move(kept), heads, options.uni_nonneg);

  std::unordered_map<std::uint32_t, std::size_t> slot_of;
  out.words.reserve(kept.size());
  for (auto& w : kept) {
    WordEntry entry{word_hash(w.stem), std::move(w.stem),
                    std::vector<float>(w.vector.begin(), w.vector.end()),
                    static_cast<float>(w.gate)};
    const auto [it, inserted] = slot_of.try_emplace(entry.hash, out.words.size());
    if (inserted) {
      out.words.push_back(std::move(entry));
      continue;
    }
    auto& existing = out.words[it->second];
    spdlog::warn("word hash collision {:08x} between '{}' and '{}'", entry.hash, existing.stem,
                 entry.stem);
    if (entry.gate > existing.gate) existing = std::move(entry);
  }
  return out;
}

}  // namespace colberter
