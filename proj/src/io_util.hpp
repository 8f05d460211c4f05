#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace csihar::detail {

// Little-endian reader with byte-offset error reporting, shared by the
// binary codecs.
class ByteReader {
 public:
  ByteReader(std::istream& in, const std::string& path)
      : in_(in), path_(path) {}

  std::uint8_t u8() {
    std::uint8_t b[1];
    take(b, 1);
    return b[0];
  }

  std::uint32_t u32() {
    std::uint8_t b[4];
    take(b, 4);
    return static_cast<std::uint32_t>(b[0]) |
           (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::uint64_t u64() {
    std::uint64_t lo = u32();
    std::uint64_t hi = u32();
    return lo | (hi << 32);
  }

  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  void magic(const char expected[4]) {
    std::uint8_t b[4];
    take(b, 4);
    if (std::memcmp(b, expected, 4) != 0) {
      throw std::runtime_error(path_ + ": bad magic at byte 0");
    }
  }

  void expect_eof() {
    if (in_.peek() != std::istream::traits_type::eof()) {
      throw std::runtime_error(path_ + ": trailing data at byte " +
                               std::to_string(offset_));
    }
  }

  std::size_t offset() const { return offset_; }
  const std::string& path() const { return path_; }

 private:
  void take(std::uint8_t* dst, std::size_t n) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw std::runtime_error(path_ + ": truncated at byte " +
                               std::to_string(offset_ + static_cast<std::size_t>(
                                                            in_.gcount())));
    }
    offset_ += n;
  }

  std::istream& in_;
  std::string path_;
  std::size_t offset_ = 0;
};

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::ostream& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline void put_f64(std::ostream& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

}  // namespace csihar::detail
