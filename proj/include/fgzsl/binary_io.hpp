#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fgzsl {

enum class FormatErrorCode { io, bad_magic, unsupported_version, truncated, invariant_violation, trailing_bytes, parse };

inline std::string_view error_code_name(FormatErrorCode c) {
  switch (c) {
    case FormatErrorCode::io: return "IoError";
    case FormatErrorCode::bad_magic: return "BadMagic";
    case FormatErrorCode::unsupported_version: return "UnsupportedVersion";
    case FormatErrorCode::truncated: return "Truncated";
    case FormatErrorCode::invariant_violation: return "InvariantViolation";
    case FormatErrorCode::trailing_bytes: return "TrailingBytes";
    case FormatErrorCode::parse: return "ParseError";
  }
  return "?";
}

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}
  FormatErrorCode code() const { return code_; }

 private:
  FormatErrorCode code_;
};

inline constexpr char kContainerMagic[4] = {'G', 'Z', 'B', '1'};
inline constexpr std::uint32_t kContainerVersion = 1;

// Little-endian encoder.
class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  const std::vector<char>& bytes() const { return bytes_; }

  void write_file(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrorCode::io, "cannot open " + path.string() + " for writing");
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw FormatError(FormatErrorCode::io, "write failed for " + path.string());
  }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  static ByteReader from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatErrorCode::io, "cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(bytes));
  }

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string raw(std::size_t n) {
    need(n, "bytes");
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  // Fails early when a declared element count cannot fit in what is left.
  void expect_available(std::uint64_t count, std::uint64_t width, const char* what) const {
    if (width != 0 && count > remaining() / width) {
      throw FormatError(FormatErrorCode::truncated, std::string(what) + " needs " + std::to_string(count * width) +
                                                         " bytes, " + std::to_string(remaining()) + " left");
    }
  }

  std::vector<std::uint32_t> u32_array(std::uint64_t n, const char* what) {
    expect_available(n, 4, what);
    std::vector<std::uint32_t> out(static_cast<std::size_t>(n));
    for (auto& v : out) v = u32();
    return out;
  }
  std::vector<float> f32_array(std::uint64_t n, const char* what) {
    expect_available(n, 4, what);
    std::vector<float> out(static_cast<std::size_t>(n));
    for (auto& v : out) v = f32();
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(FormatErrorCode::truncated, std::string("unexpected end of data reading ") + what);
    }
  }

  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

// Reads and checks the magic and version shared by bundles and checkpoints.
inline void read_container_preamble(ByteReader& r) {
  if (r.remaining() < 4) throw FormatError(FormatErrorCode::truncated, "file shorter than magic");
  if (r.raw(4) != std::string_view(kContainerMagic, 4)) throw FormatError(FormatErrorCode::bad_magic, "not a GZB1 container");
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) {
    throw FormatError(FormatErrorCode::unsupported_version, "container version " + std::to_string(version));
  }
}

inline void write_container_preamble(ByteWriter& w) {
  w.raw(std::string_view(kContainerMagic, 4));
  w.u32(kContainerVersion);
}

}  // namespace fgzsl
