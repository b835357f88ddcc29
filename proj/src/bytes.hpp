#pragma once

// Little-endian byte codecs shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

#include "toad/data.hpp"
#include "toad/error.hpp"

namespace toad::detail {

class ByteWriter {
 public:
  void magic(std::string_view m) { out_.append(m); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void magic(std::string_view expected, const char* format) {
    need(expected.size(), format);
    if (bytes_.substr(pos_, expected.size()) != expected) {
      throw ParseError(ParseError::Kind::kBadMagic, pos_,
                       std::string(format) + ": bad magic, expected '" + std::string(expected) +
                           "'");
    }
    pos_ += expected.size();
  }
  void version(const char* format) {
    const std::size_t at = pos_;
    const std::uint32_t v = u32(format);
    if (v != kFormatVersion) {
      throw ParseError(ParseError::Kind::kBadVersion, at,
                       std::string(format) + ": unsupported version " + std::to_string(v));
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) {
      v |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_++]) << (8 * i));
    }
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
    }
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw ParseError(ParseError::Kind::kTruncated, pos_,
                       std::string(what) + ": truncated, need " + std::to_string(n) +
                           " more bytes, have " + std::to_string(remaining()));
    }
  }
  void finish(const char* format) const {
    if (remaining() != 0) {
      throw ParseError(ParseError::Kind::kDimension, pos_,
                       std::string(format) + ": " + std::to_string(remaining()) +
                           " trailing bytes after payload");
    }
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) throw DataError(std::string(what) + " does not fit in u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace toad::detail
