#pragma once

// Legacy (pre-SegWit) transaction wire format: parsing, serialization,
// txid computation and script tokenization.

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "utxoshard/common.hpp"

namespace utxoshard {

struct VarInt {
  std::uint64_t value = 0;
  std::size_t consumed = 0;
  bool canonical = true;
};

// Decodes a compact-size integer starting at `offset`. Throws Truncated if
// the buffer ends mid-value. Non-minimal encodings are reported through
// `canonical` rather than rejected.
VarInt parse_varint(ByteView bytes, std::size_t offset);
void write_varint(Bytes& out, std::uint64_t value);
// Writes `value` using exactly `width` bytes (1, 3, 5 or 9).
void write_varint_width(Bytes& out, std::uint64_t value, std::size_t width);
std::size_t varint_size(std::uint64_t value);

struct TxOutpoint {
  Hash32 txid;
  std::uint32_t vout = 0;

  auto operator<=>(const TxOutpoint&) const = default;
  std::string to_string() const { return txid.to_hex() + ":" + std::to_string(vout); }
};

struct TxOutpointHasher {
  std::size_t operator()(const TxOutpoint& o) const noexcept {
    return Hash32Hasher{}(o.txid) ^ (std::size_t(o.vout) * 0x9e3779b97f4a7c15ULL);
  }
};

struct TxInput {
  Hash32 prev_txid;
  std::uint32_t prev_vout = 0;
  Bytes unlocking_script;
  std::uint32_t sequence = 0xffffffff;

  TxOutpoint prevout() const { return {prev_txid, prev_vout}; }
  bool is_coinbase() const { return prev_txid.is_zero() && prev_vout == 0xffffffff; }
  bool operator==(const TxInput&) const = default;
};

inline constexpr std::uint64_t kMaxMoney = 2'100'000'000'000'000ULL;

struct TxOutput {
  std::uint64_t amount = 0;
  Bytes locking_script;
  bool operator==(const TxOutput&) const = default;
};

struct RawTransaction {
  std::int32_t version = 1;
  std::vector<TxInput> inputs;
  std::vector<TxOutput> outputs;
  std::uint32_t locktime = 0;
  // Computed from the serialized form; refresh with update_txid() after
  // mutating fields.
  Hash32 txid;
  // Widths of every compact-size prefix in wire order, kept only when the
  // source used a non-minimal encoding so serialization stays bit-exact.
  std::vector<std::uint8_t> varint_widths;

  bool is_coinbase() const { return inputs.size() == 1 && inputs[0].is_coinbase(); }
  TxOutpoint outpoint(std::uint32_t vout) const { return {txid, vout}; }
  void update_txid();
  bool operator==(const RawTransaction&) const = default;
};

struct ParseOptions {
  // Rejects non-canonical compact sizes and amounts above the 21M coin cap.
  bool strict = false;
};

struct ParseResult {
  RawTransaction tx;
  std::size_t consumed = 0;
  std::size_t trailing = 0;
  bool non_canonical = false;
};

ParseResult parse_transaction(ByteView bytes, ParseOptions options = {});
// Convenience wrapper: parses a whole buffer and rejects trailing bytes.
RawTransaction decode_transaction(ByteView bytes, ParseOptions options = {});
RawTransaction decode_transaction_hex(std::string_view hex, ParseOptions options = {});

Bytes serialize(const RawTransaction& tx);
Hash32 compute_txid(const RawTransaction& tx);

// ---------------------------------------------------------------------------
// Script tokenization

namespace op {
inline constexpr std::uint8_t OP_0 = 0x00;
inline constexpr std::uint8_t OP_PUSHDATA1 = 0x4c;
inline constexpr std::uint8_t OP_PUSHDATA2 = 0x4d;
inline constexpr std::uint8_t OP_PUSHDATA4 = 0x4e;
inline constexpr std::uint8_t OP_1 = 0x51;
inline constexpr std::uint8_t OP_RETURN = 0x6a;
inline constexpr std::uint8_t OP_DROP = 0x75;
inline constexpr std::uint8_t OP_DUP = 0x76;
inline constexpr std::uint8_t OP_EQUAL = 0x87;
inline constexpr std::uint8_t OP_EQUALVERIFY = 0x88;
inline constexpr std::uint8_t OP_HASH160 = 0xa9;
inline constexpr std::uint8_t OP_CHECKSIG = 0xac;
inline constexpr std::uint8_t OP_CHECKMULTISIG = 0xae;
inline constexpr std::uint8_t OP_CHECKLOCKTIMEVERIFY = 0xb1;
}  // namespace op

struct ScriptToken {
  enum class Kind { OpCode, PushData, Error };

  Kind kind = Kind::OpCode;
  // Opcode byte for OpCode tokens, push prefix opcode for PushData tokens.
  std::uint8_t code = 0;
  std::size_t offset = 0;
  // Total bytes covered including any length prefix.
  std::size_t extent = 0;
  // Push payload, or the unparseable remainder for Error tokens.
  Bytes data;

  bool is_push() const { return kind == Kind::PushData; }
  bool operator==(const ScriptToken&) const = default;
};

// Never throws: a truncated push becomes a terminating Error token that
// carries the remaining bytes.
std::vector<ScriptToken> tokenize_script(ByteView script);
Bytes emit_script(const std::vector<ScriptToken>& tokens);

const char* opcode_name(std::uint8_t code);

// Structural templates.
bool is_p2pkh_locking(ByteView script);
bool is_p2pkh_unlocking(ByteView script);

}  // namespace utxoshard
