#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "care/error.hpp"

// Little-endian binary plumbing shared by the tile and checkpoint formats.
// Readers throw FormatError naming the byte offset; writers throw IoError.

namespace care::io {

class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
  }

  void bytes(const void* src, std::size_t n) {
    out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed at offset " + std::to_string(offset_) +
                             " in '" + path_ + "'");
    offset_ += n;
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32s(const std::vector<float>& v) { bytes(v.data(), v.size() * 4); }
  void str(const std::string& s) { bytes(s.data(), s.size()); }

 private:
  std::string path_;
  std::ofstream out_;
  std::uint64_t offset_ = 0;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path + "' for reading");
  }

  std::uint64_t offset() const { return offset_; }

  void bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError("'" + path_ + "' truncated at offset " +
                        std::to_string(offset_ + static_cast<std::uint64_t>(in_.gcount())));
    offset_ += n;
  }
  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  std::uint16_t u16() { std::uint16_t v; bytes(&v, 2); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  void f32s(std::vector<float>& v) { bytes(v.data(), v.size() * 4); }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  void expect_magic(const char magic[8]) {
    char got[8];
    bytes(got, 8);
    if (std::memcmp(got, magic, 8) != 0)
      throw FormatError("'" + path_ + "' has bad magic at offset 0, expected \"" +
                        std::string(magic, 8) + "\"");
  }
  void expect_version(std::uint32_t supported) {
    const std::uint64_t at = offset_;
    const std::uint32_t v = u32();
    if (v != supported)
      throw FormatError("'" + path_ + "' has unsupported version " +
                        std::to_string(v) + " at offset " + std::to_string(at) +
                        ", this reader supports version " + std::to_string(supported));
  }
  void expect_eof() {
    char probe;
    in_.read(&probe, 1);
    if (in_.gcount() != 0)
      throw FormatError("'" + path_ + "' has trailing bytes at offset " +
                        std::to_string(offset_));
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::uint64_t offset_ = 0;
};

}  // namespace care::io
