#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ttn::io {

using Json = nlohmann::json;

// Writes to a sibling temp file, then renames over `path`. A crash mid-write
// leaves any previous file at `path` untouched.
void write_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// Little-endian encoder, independent of host byte order.
class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> vs);
  void bytes(std::string_view s);
  void str(std::string_view s);  // u32 length prefix

  const std::string& data() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

// Bounds-checked decoder; any over-read throws CorruptFile.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  void f64s(std::span<double> out);
  std::string_view bytes(std::size_t n);
  std::string str();

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

// Binary container: 8 magic bytes, u64 header length, JSON header, payload.
struct Container {
  Json header;
  std::string payload;
};

std::string encode_container(std::string_view magic, const Json& header, std::string_view payload);
// Throws FormatVersionMismatch on a magic mismatch and CorruptFile when the
// file is truncated or the header is not valid JSON.
Container decode_container(std::string_view magic, std::string_view bytes);

inline constexpr std::string_view kLdaMagic{"TTNLDA1\0", 8};
inline constexpr std::string_view kNetMagic{"TTNNET1\0", 8};

}  // namespace ttn::io
