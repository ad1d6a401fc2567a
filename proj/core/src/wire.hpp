#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "objslam/errors.hpp"

// Little-endian byte buffer I/O shared by the binary file formats.
namespace objslam::wire {

struct Writer {
  std::vector<std::uint8_t> bytes;

  void u8(std::uint8_t v) { bytes.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
};

/// Bounded reader; a read past the end raises `trunc_code` (the formats
/// disagree on the error name for a short file).
struct Reader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t offset = 0;
  ErrorCode trunc_code;

  Reader(const std::vector<std::uint8_t>& buf, ErrorCode code)
      : data(buf.data()), size(buf.size()), trunc_code(code) {}

  void need(std::size_t n) {
    if (offset + n > size) fail(trunc_code, "file ends mid-record");
  }
  std::uint8_t u8() {
    need(1);
    return data[offset++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{data[offset++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{data[offset++]} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  const std::uint8_t* raw(std::size_t n) {
    need(n);
    const std::uint8_t* p = data + offset;
    offset += n;
    return p;
  }
  std::string str() {
    std::uint32_t n = u32();
    const std::uint8_t* p = raw(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::size_t remaining() const { return size - offset; }
};

}  // namespace objslam::wire
