#include "utxoshard/common.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace utxoshard {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::Truncated: return "Truncated";
    case Errc::NonCanonical: return "NonCanonical";
    case Errc::ScriptLengthOverflow: return "ScriptLengthOverflow";
    case Errc::EmptyInputsOrOutputs: return "EmptyInputsOrOutputs";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::BadHex: return "BadHex";
    case Errc::BadRecord: return "BadRecord";
    case Errc::EmptyCorpus: return "EmptyCorpus";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::EmptyStream: return "EmptyStream";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::BadSpec: return "BadSpec";
    case Errc::BatchTooSmall: return "BatchTooSmall";
    case Errc::Diverged: return "Diverged";
    case Errc::EmptyPairSet: return "EmptyPairSet";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::PolicyMismatch: return "PolicyMismatch";
    case Errc::BadConfig: return "BadConfig";
    case Errc::HashMismatch: return "HashMismatch";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(Errc::BadHex, "odd number of hex digits");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(Errc::BadHex, "invalid hex digit at " + std::to_string(2 * i));
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

Hash32 Hash32::from_hex(std::string_view display_hex) {
  if (display_hex.size() != 64) throw Error(Errc::BadHex, "hash must be 64 hex digits");
  Bytes raw = utxoshard::from_hex(display_hex);
  Hash32 h;
  for (std::size_t i = 0; i < 32; ++i) h.bytes[i] = raw[31 - i];
  return h;
}

std::string Hash32::to_hex() const {
  std::array<std::uint8_t, 32> rev;
  for (std::size_t i = 0; i < 32; ++i) rev[i] = bytes[31 - i];
  return utxoshard::to_hex(rev);
}

bool Hash32::is_zero() const {
  for (auto b : bytes)
    if (b != 0) return false;
  return true;
}

std::array<std::uint8_t, 32> sha256(ByteView data) {
  std::array<std::uint8_t, 32> out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
    throw Error(Errc::Io, "sha256 digest failed");
  return out;
}

Hash32 double_sha256(ByteView data) {
  auto first = sha256(data);
  Hash32 h;
  h.bytes = sha256(first);
  return h;
}

std::string sha256_hex(ByteView data) { return to_hex(sha256(data)); }

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_)
    throw Error(Errc::DimensionMismatch,
                "row of width " + std::to_string(values.size()) + " into matrix of width " + std::to_string(cols_));
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(Bytes& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(ByteView in, std::size_t offset) {
  if (offset + 4 > in.size()) throw Error(Errc::Truncated, "u32 past end of buffer");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(in[offset + i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(ByteView in, std::size_t offset) {
  if (offset + 8 > in.size()) throw Error(Errc::Truncated, "u64 past end of buffer");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(in[offset + i]) << (8 * i);
  return v;
}

double get_f64(ByteView in, std::size_t offset) { return std::bit_cast<double>(get_u64(in, offset)); }

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, ByteView bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "short write to " + path);
}

void write_text_file(const std::string& path, std::string_view text) {
  write_file(path, ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace utxoshard
