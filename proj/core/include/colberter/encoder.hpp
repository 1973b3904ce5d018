#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "colberter/tokenizer.hpp"

namespace colberter {

/// Contextualized encoder output: one CLS vector plus one vector per subword
/// position, all of width `dim`. Vectors are stored row-major.
struct EncoderOutput {
  std::size_t dim = 0;
  std::vector<float> cls_raw;    // dim
  std::vector<float> token_raw;  // token_count() * dim

  std::size_t token_count() const { return dim == 0 ? 0 : token_raw.size() / dim; }
  std::span<const float> token(std::size_t i) const {
    return std::span<const float>(token_raw).subspan(i * dim, dim);
  }
  bool operator==(const EncoderOutput&) const = default;
};

/// Anything mapping tokenized text to contextualized vectors. `key` names the
/// text (a document id) for encoders backed by precomputed embeddings.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual EncoderOutput encode(const TokenizedText& text, std::string_view key) const = 0;
  virtual std::size_t dim() const = 0;
};

struct ReferenceEncoderConfig {
  std::uint64_t seed = 0;
  std::size_t dim = 64;
  std::size_t window = 2;
};

/// Deterministic stand-in encoder. Each subword id gets a seeded unit vector;
/// position i is the renormalized mean of the vectors within +-window,
/// weighted 1 / (1 + distance) so that order matters; the
/// CLS vector is the renormalized mean of all contextualized vectors.
EncoderOutput reference_encode(const TokenizedText& text, std::uint64_t seed, std::size_t dim,
                               std::size_t window);

class ReferenceEncoder final : public Encoder {
 public:
  explicit ReferenceEncoder(ReferenceEncoderConfig config);
  EncoderOutput encode(const TokenizedText& text, std::string_view key) const override;
  std::size_t dim() const override { return config_.dim; }
  const ReferenceEncoderConfig& config() const { return config_; }

 private:
  ReferenceEncoderConfig config_;
};

// Embedding file: "CBEM", u32 version, u32 dim, u64 doc count, then per doc
// u64 id length + id bytes, u32 token count n, (n + 1) * dim f32 (CLS first).
using EmbeddingMap = std::map<std::string, EncoderOutput, std::less<>>;

void write_embedding_file(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, EncoderOutput>>& docs);
EmbeddingMap read_embedding_file(const std::filesystem::path& path);

/// Serves precomputed embeddings by key; the token count must match the
/// tokenization.
class EmbeddingFileEncoder final : public Encoder {
 public:
  explicit EmbeddingFileEncoder(EmbeddingMap embeddings);
  EncoderOutput encode(const TokenizedText& text, std::string_view key) const override;
  std::size_t dim() const override { return dim_; }

 private:
  EmbeddingMap embeddings_;
  std::size_t dim_ = 0;
};

}  // namespace colberter
