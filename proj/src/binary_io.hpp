// Little-endian encoding helpers shared by the file formats.
#ifndef PAGG_SRC_BINARY_IO_HPP
#define PAGG_SRC_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pagg/error.hpp"

namespace pagg::io {

class ByteWriter {
 public:
  void Magic(std::string_view magic) {
    bytes_.insert(bytes_.end(), magic.begin(), magic.end());
  }
  void U8(uint8_t v) { bytes_.push_back(v); }
  void U16(uint16_t v) { Le(v, 2); }
  void U32(uint32_t v) { Le(v, 4); }
  void U64(uint64_t v) { Le(v, 8); }
  void F32(float v) { U32(std::bit_cast<uint32_t>(v)); }
  void F64(double v) { U64(std::bit_cast<uint64_t>(v)); }
  void Bytes(std::span<const uint8_t> b) {
    bytes_.insert(bytes_.end(), b.begin(), b.end());
  }

  const std::vector<uint8_t>& bytes() const { return bytes_; }

 private:
  void Le(uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }

  std::vector<uint8_t> bytes_;
};

class ByteReader {
 public:
  ByteReader(std::span<const uint8_t> bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)) {}

  void ExpectMagic(std::string_view magic) {
    Need(magic.size());
    if (std::memcmp(bytes_.data() + pos_, magic.data(), magic.size()) != 0) {
      throw FormatError(FormatError::Kind::kBadMagic,
                        name_ + ": bad magic, expected \"" +
                            std::string(magic) + "\"");
    }
    pos_ += magic.size();
  }
  void ExpectVersion(uint16_t expected) {
    const uint16_t v = U16();
    if (v != expected) {
      throw FormatError(FormatError::Kind::kBadVersion,
                        name_ + ": unsupported format version " +
                            std::to_string(v) + " (expected " +
                            std::to_string(expected) + ")");
    }
  }
  uint8_t U8() { return static_cast<uint8_t>(Le(1)); }
  uint16_t U16() { return static_cast<uint16_t>(Le(2)); }
  uint32_t U32() { return static_cast<uint32_t>(Le(4)); }
  uint64_t U64() { return Le(8); }
  float F32() { return std::bit_cast<float>(U32()); }
  double F64() { return std::bit_cast<double>(U64()); }
  std::span<const uint8_t> Bytes(size_t n) {
    Need(n);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& name() const { return name_; }

  // Fails unless exactly `n` more bytes remain.
  void ExpectRemaining(uint64_t n) const {
    if (remaining() < n) {
      throw FormatError(FormatError::Kind::kTruncated,
                        name_ + ": truncated file (" +
                            std::to_string(remaining()) + " bytes left, " +
                            std::to_string(n) + " required)");
    }
    if (remaining() > n) {
      throw FormatError(FormatError::Kind::kTrailingBytes,
                        name_ + ": " + std::to_string(remaining() - n) +
                            " unexpected trailing bytes");
    }
  }
  void ExpectEnd() const { ExpectRemaining(0); }

 private:
  void Need(size_t n) const {
    if (remaining() < n) {
      throw FormatError(FormatError::Kind::kTruncated,
                        name_ + ": truncated file");
    }
  }
  uint64_t Le(int n) {
    Need(static_cast<size_t>(n));
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += static_cast<size_t>(n);
    return v;
  }

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
  std::string name_;
};

std::vector<uint8_t> ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path,
               std::span<const uint8_t> bytes);

}  // namespace pagg::io

#endif  // PAGG_SRC_BINARY_IO_HPP
