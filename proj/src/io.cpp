#include "ttn/io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ttn/error.hpp"

namespace ttn {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::EmptyVocabulary: return "EmptyVocabulary";
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NoPairs: return "NoPairs";
    case ErrorCode::CropTooLarge: return "CropTooLarge";
    case ErrorCode::UnknownLayer: return "UnknownLayer";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyModality: return "EmptyModality";
    case ErrorCode::SingleClassData: return "SingleClassData";
    case ErrorCode::NoRelevant: return "NoRelevant";
    case ErrorCode::Empty: return "Empty";
  }
  return "Unknown";
}

namespace io {

void write_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    require(static_cast<bool>(out), ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorCode::IoError, "cannot rename into " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::f64s(std::span<const double> vs) {
  buf_.reserve(buf_.size() + 8 * vs.size());
  for (double v : vs) f64(v);
}

void ByteWriter::bytes(std::string_view s) { buf_.append(s); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

std::string_view ByteReader::bytes(std::size_t n) {
  require(n <= remaining(), ErrorCode::CorruptFile, "unexpected end of data");
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint32_t ByteReader::u32() {
  auto b = bytes(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto b = bytes(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

void ByteReader::f64s(std::span<double> out) {
  require(out.size() <= remaining() / 8, ErrorCode::CorruptFile, "unexpected end of data");
  for (auto& v : out) v = f64();
}

std::string ByteReader::str() {
  const auto n = u32();
  return std::string(bytes(n));
}

std::string encode_container(std::string_view magic, const Json& header, std::string_view payload) {
  ByteWriter w;
  w.bytes(magic);
  const auto text = header.dump();
  w.u64(text.size());
  w.bytes(text);
  w.bytes(payload);
  return w.take();
}

Container decode_container(std::string_view magic, std::string_view bytes) {
  if (bytes.size() < magic.size()) {
    // Too short to even hold the magic: distinguish a prefix of the right
    // magic (truncated) from a different format.
    require(magic.substr(0, bytes.size()) == bytes, ErrorCode::FormatVersionMismatch,
            "bad magic header");
    fail(ErrorCode::CorruptFile, "file truncated");
  }
  require(bytes.substr(0, magic.size()) == magic, ErrorCode::FormatVersionMismatch,
          "bad magic header");
  ByteReader r(bytes.substr(magic.size()));
  const auto len = r.u64();
  const auto text = r.bytes(len);
  Container c;
  try {
    c.header = Json::parse(text);
  } catch (const Json::exception& e) {
    fail(ErrorCode::CorruptFile, std::string("bad header: ") + e.what());
  }
  c.payload = std::string(r.bytes(r.remaining()));
  return c;
}

}  // namespace io
}  // namespace ttn
