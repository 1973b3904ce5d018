#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "colberter/error.hpp"

namespace colberter::io {

/// Appends little-endian values to an in-memory buffer.
class BinaryWriter {
 public:
  void magic(std::string_view tag) { buffer_.append(tag); }
  void u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void floats(std::span<const float> values) {
    for (const float v : values) f32(v);
  }
  void bytes(std::string_view data) { buffer_.append(data); }

  /// Appends the CRC32 of everything written so far.
  void crc_trailer();

  const std::string& buffer() const { return buffer_; }
  std::size_t size() const { return buffer_.size(); }
  void write_file(const std::filesystem::path& path) const;

 private:
  void put_le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buffer_;
};

/// Bounds-checked little-endian reader. Running past the end raises
/// FormatError with the configured truncation message.
class BinaryReader {
 public:
  explicit BinaryReader(std::string_view data) : data_(data) {}

  void expect_magic(std::string_view tag);
  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  void floats(std::span<float> out) {
    for (float& v : out) v = f32();
  }
  std::string bytes(std::size_t n);

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }
  void set_truncation_message(std::string message) { truncation_message_ = std::move(message); }

 private:
  void need(std::size_t n) const;
  std::uint64_t get_le(int width);

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string truncation_message_ = "truncated file";
};

std::uint32_t crc32(std::string_view data);

std::string read_file(const std::filesystem::path& path);

/// Verifies and strips a trailing CRC32. Throws FormatError on mismatch.
std::string_view checked_payload(std::string_view file_bytes, std::string_view name);

}  // namespace colberter::io
