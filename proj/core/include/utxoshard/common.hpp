#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace utxoshard {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

enum class Errc {
  Truncated,
  NonCanonical,
  ScriptLengthOverflow,
  EmptyInputsOrOutputs,
  UnsupportedFormat,
  BadHex,
  BadRecord,
  EmptyCorpus,
  IndexOutOfRange,
  EmptyStream,
  DimensionMismatch,
  ZeroVector,
  BadSpec,
  BatchTooSmall,
  Diverged,
  EmptyPairSet,
  TooFewPoints,
  PolicyMismatch,
  BadConfig,
  HashMismatch,
  Io,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// 32-byte hash in internal (wire) byte order. to_hex() renders the
// conventional byte-reversed form used for txids.
struct Hash32 {
  std::array<std::uint8_t, 32> bytes{};

  static Hash32 from_hex(std::string_view display_hex);
  std::string to_hex() const;
  bool is_zero() const;

  auto operator<=>(const Hash32&) const = default;
};

struct Hash32Hasher {
  std::size_t operator()(const Hash32& h) const noexcept {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(h.bytes[i]) << (8 * i);
    return static_cast<std::size_t>(v);
  }
};

std::string to_hex(ByteView bytes);
Bytes from_hex(std::string_view hex);

std::array<std::uint8_t, 32> sha256(ByteView data);
Hash32 double_sha256(ByteView data);
std::string sha256_hex(ByteView data);
inline std::string sha256_hex(std::string_view text) {
  return sha256_hex(ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void append_row(std::span<const double> values);

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Little-endian helpers shared by the binary file formats.
void put_u32(Bytes& out, std::uint32_t v);
void put_u64(Bytes& out, std::uint64_t v);
void put_f64(Bytes& out, double v);
std::uint32_t get_u32(ByteView in, std::size_t offset);
std::uint64_t get_u64(ByteView in, std::size_t offset);
double get_f64(ByteView in, std::size_t offset);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, ByteView bytes);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace utxoshard
