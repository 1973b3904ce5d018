#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "colberter/encoder.hpp"
#include "colberter/linalg.hpp"
#include "colberter/tokenizer.hpp"

namespace colberter {

struct HeadDims {
  std::size_t encoder = 0;  // D_enc
  std::size_t cls = 0;
  std::size_t token = 0;
  std::size_t uni = 0;  // 0 = no uni layer

  bool operator==(const HeadDims&) const = default;
  /// Width of the stored word vectors.
  std::size_t word() const { return uni > 0 ? uni : token; }
};

/// Every trainable parameter of the reduction stage. The encoder is frozen.
struct ReductionHeads {
  HeadDims dims;
  Matrix w_cls;    // encoder x cls
  Matrix w_token;  // encoder x token
  Vector w_gate;   // token
  double b_gate = 0.5;
  double gamma = 0.0;
  Matrix w_uni;  // token x uni, empty unless dims.uni > 0

  bool uni() const { return dims.uni > 0; }

  /// Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) projections; the gate
  /// starts open (w_gate = 0, b_gate = 0.5) and gamma = 0.
  static ReductionHeads initialize(HeadDims dims, std::uint64_t seed);

  /// Throws if shapes disagree with `dims`, uni width is not 1, or any
  /// parameter is non-finite.
  void validate() const;

  /// Copy with every parameter rounded to float precision, i.e. exactly what
  /// a save/load cycle through the heads file yields.
  ReductionHeads rounded_to_float() const;

  bool operator==(const ReductionHeads&) const = default;
};

// Heads file: "CBHD", u32 version, u32 D_enc, d_cls, d_t, d_u, then W_CLS,
// W_t, W_s, b_s, gamma, W_u as row-major f32.
std::string heads_to_bytes(const ReductionHeads& heads);
ReductionHeads heads_from_bytes(std::string_view bytes);
void save_heads(const std::filesystem::path& path, const ReductionHeads& heads);
ReductionHeads load_heads(const std::filesystem::path& path);

enum class TextKind { query, passage };

struct ReduceOptions {
  bool gating = true;      // contextualized stopword gate on passages
  double threshold = 0.0;  // drop words with gate <= threshold
  bool uni_nonneg = false;  // ReLU after the uni projection
};

struct StemVector {
  std::string stem;
  Vector vector;
};

struct GatedWord {
  std::string stem;
  Vector vector;
  double gate = 1.0;
};

struct Projection {
  Vector cls;
  std::vector<Vector> tokens;
};

/// cls = cls_raw * W_CLS, tokens[i] = token_raw[i] * W_t. No bias.
Projection project_2way(const EncoderOutput& encoded, const ReductionHeads& heads);

/// Mean of the vectors at all subword positions of each unique stem, in
/// first-occurrence order.
std::vector<StemVector> aggregate_bow2(const std::vector<Vector>& tokens, const TokenizedText& text);

/// gate = max(0, v * W_s + b_s); vectors are left untouched.
std::vector<GatedWord> stopword_gate(std::vector<StemVector> words, const ReductionHeads& heads);

struct GateResult {
  std::vector<GatedWord> kept;  // vectors scaled by their gate
  std::vector<std::string> removed;
};

GateResult apply_gate(std::vector<GatedWord> words, double threshold);

/// v <- v * W_u (optionally clamped at 0). Requires a uni layer.
std::vector<GatedWord> uni_project(std::vector<GatedWord> words, const ReductionHeads& heads,
                                   bool nonneg = false);

/// First 32 bits (big-endian) of sha256(stem).
std::uint32_t word_hash(std::string_view stem);

struct WordEntry {
  std::uint32_t hash = 0;
  std::string stem;
  std::vector<float> vector;  // pre-scaled by the gate
  float gate = 1.0f;

  bool operator==(const WordEntry&) const = default;
};

struct EncodedText {
  std::vector<float> cls;
  std::vector<WordEntry> words;
  std::vector<std::string> removed_stems;
  TextKind kind = TextKind::passage;
};

/// Full reduction pipeline: project, aggregate, gate (passages only), uni
/// projection, hashing. Query gates are fixed at 1 and nothing is removed.
EncodedText encode_text(const TokenizedText& text, const EncoderOutput& encoded,
                        const ReductionHeads& heads, TextKind kind,
                        const ReduceOptions& options = {});

}  // namespace colberter
