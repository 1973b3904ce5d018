#include "colberter/binary_io.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <zlib.h>

namespace colberter::io {

void BinaryWriter::crc_trailer() { u32(crc32(buffer_)); }

void BinaryWriter::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  if (!out) throw Error("write failed for " + path.string());
}

void BinaryReader::expect_magic(std::string_view tag) {
  if (remaining() < tag.size() || data_.substr(pos_, tag.size()) != tag) {
    throw FormatError("bad format: expected magic '" + std::string(tag) + "'");
  }
  pos_ += tag.size();
}

std::string BinaryReader::bytes(std::size_t n) {
  need(n);
  std::string out(data_.substr(pos_, n));
  pos_ += n;
  return out;
}

void BinaryReader::need(std::size_t n) const {
  if (remaining() < n) throw FormatError(truncation_message_);
}

std::uint64_t BinaryReader::get_le(int width) {
  need(static_cast<std::size_t>(width));
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  }
  pos_ += static_cast<std::size_t>(width);
  return v;
}

std::uint32_t crc32(std::string_view data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths
  constexpr std::size_t kChunk = 1u << 30;
  for (std::size_t off = 0; off < data.size(); off += kChunk) {
    const std::size_t n = std::min(kChunk, data.size() - off);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(data.data() + off), static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string_view checked_payload(std::string_view file_bytes, std::string_view name) {
  if (file_bytes.size() < 4) throw FormatError(std::string(name) + ": truncated file");
  const auto payload = file_bytes.substr(0, file_bytes.size() - 4);
  BinaryReader trailer(file_bytes.substr(file_bytes.size() - 4));
  if (trailer.u32() != crc32(payload)) {
    throw FormatError(std::string(name) + ": checksum mismatch");
  }
  return payload;
}

}  // namespace colberter::io
