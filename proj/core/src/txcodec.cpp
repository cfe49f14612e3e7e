#include "utxoshard/txcodec.hpp"

#include <array>

namespace utxoshard {

std::size_t varint_size(std::uint64_t value) {
  if (value < 0xfd) return 1;
  if (value <= 0xffff) return 3;
  if (value <= 0xffffffff) return 5;
  return 9;
}

VarInt parse_varint(ByteView bytes, std::size_t offset) {
  if (offset >= bytes.size()) throw Error(Errc::Truncated, "compact size at offset " + std::to_string(offset));
  std::uint8_t prefix = bytes[offset];
  std::size_t width = 1;
  if (prefix == 0xfd) width = 3;
  else if (prefix == 0xfe) width = 5;
  else if (prefix == 0xff) width = 9;
  if (width == 1) return {prefix, 1, true};
  if (offset + width > bytes.size())
    throw Error(Errc::Truncated, "compact size needs " + std::to_string(width) + " bytes at offset " +
                                     std::to_string(offset));
  std::uint64_t v = 0;
  for (std::size_t i = 1; i < width; ++i) v |= std::uint64_t(bytes[offset + i]) << (8 * (i - 1));
  return {v, width, varint_size(v) == width};
}

void write_varint_width(Bytes& out, std::uint64_t value, std::size_t width) {
  switch (width) {
    case 1: out.push_back(static_cast<std::uint8_t>(value)); return;
    case 3: out.push_back(0xfd); break;
    case 5: out.push_back(0xfe); break;
    case 9: out.push_back(0xff); break;
    default: throw Error(Errc::BadSpec, "compact size width " + std::to_string(width));
  }
  for (std::size_t i = 0; i + 1 < width; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

void write_varint(Bytes& out, std::uint64_t value) { write_varint_width(out, value, varint_size(value)); }

namespace {

class Reader {
 public:
  Reader(ByteView bytes, ParseOptions options) : bytes_(bytes), options_(options) {}

  std::uint64_t varint(std::vector<std::uint8_t>& widths, bool& non_canonical) {
    auto v = parse_varint(bytes_, pos_);
    if (!v.canonical) {
      if (options_.strict)
        throw Error(Errc::NonCanonical, "non-minimal compact size at offset " + std::to_string(pos_));
      non_canonical = true;
    }
    widths.push_back(static_cast<std::uint8_t>(v.consumed));
    pos_ += v.consumed;
    return v.value;
  }

  void need(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_)
      throw Error(Errc::Truncated, std::string(what) + " at offset " + std::to_string(pos_));
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    auto v = get_u32(bytes_, pos_);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    need(8, what);
    auto v = get_u64(bytes_, pos_);
    pos_ += 8;
    return v;
  }

  Hash32 hash(const char* what) {
    need(32, what);
    Hash32 h;
    std::copy_n(bytes_.begin() + pos_, 32, h.bytes.begin());
    pos_ += 32;
    return h;
  }

  Bytes script(std::uint64_t len) {
    if (len > bytes_.size() - pos_)
      throw Error(Errc::ScriptLengthOverflow, "script declares " + std::to_string(len) + " bytes, " +
                                                  std::to_string(bytes_.size() - pos_) + " remain at offset " +
                                                  std::to_string(pos_));
    Bytes s(bytes_.begin() + pos_, bytes_.begin() + pos_ + len);
    pos_ += len;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::uint8_t peek(std::size_t ahead = 0) const { return bytes_[pos_ + ahead]; }

 private:
  ByteView bytes_;
  ParseOptions options_;
  std::size_t pos_ = 0;
};

// Smallest possible serialized input / output, used to bound counts before
// reserving memory.
constexpr std::size_t kMinInputSize = 32 + 4 + 1 + 4;
constexpr std::size_t kMinOutputSize = 8 + 1;

}  // namespace

ParseResult parse_transaction(ByteView bytes, ParseOptions options) {
  Reader r(bytes, options);
  ParseResult result;
  RawTransaction& tx = result.tx;
  std::vector<std::uint8_t> widths;
  bool non_canonical = false;

  tx.version = static_cast<std::int32_t>(r.u32("version"));

  if (r.remaining() >= 2 && r.peek() == 0x00 && r.peek(1) == 0x01)
    throw Error(Errc::UnsupportedFormat, "segwit marker/flag present; only legacy serialization is supported");

  auto n_in = r.varint(widths, non_canonical);
  if (n_in == 0) throw Error(Errc::EmptyInputsOrOutputs, "transaction has no inputs");
  if (n_in > r.remaining() / kMinInputSize) throw Error(Errc::Truncated, "input count exceeds buffer");
  tx.inputs.resize(n_in);
  for (auto& in : tx.inputs) {
    in.prev_txid = r.hash("prev txid");
    in.prev_vout = r.u32("prev vout");
    auto len = r.varint(widths, non_canonical);
    in.unlocking_script = r.script(len);
    in.sequence = r.u32("sequence");
  }

  auto n_out = r.varint(widths, non_canonical);
  if (n_out == 0) throw Error(Errc::EmptyInputsOrOutputs, "transaction has no outputs");
  if (n_out > r.remaining() / kMinOutputSize) throw Error(Errc::Truncated, "output count exceeds buffer");
  tx.outputs.resize(n_out);
  for (auto& out : tx.outputs) {
    out.amount = r.u64("amount");
    if (options.strict && out.amount > kMaxMoney)
      throw Error(Errc::BadRecord, "amount " + std::to_string(out.amount) + " above money cap");
    auto len = r.varint(widths, non_canonical);
    out.locking_script = r.script(len);
  }
  tx.locktime = r.u32("locktime");

  if (non_canonical) tx.varint_widths = std::move(widths);
  result.consumed = r.pos();
  result.trailing = bytes.size() - r.pos();
  result.non_canonical = non_canonical;
  tx.txid = double_sha256(bytes.first(result.consumed));
  return result;
}

RawTransaction decode_transaction(ByteView bytes, ParseOptions options) {
  auto result = parse_transaction(bytes, options);
  if (result.trailing != 0)
    throw Error(Errc::BadRecord, std::to_string(result.trailing) + " trailing bytes after transaction");
  return std::move(result.tx);
}

RawTransaction decode_transaction_hex(std::string_view hex, ParseOptions options) {
  auto bytes = from_hex(hex);
  return decode_transaction(bytes, options);
}

Bytes serialize(const RawTransaction& tx) {
  Bytes out;
  std::size_t size = 4 + 4 + 9 + 9;
  for (const auto& in : tx.inputs) size += kMinInputSize + 8 + in.unlocking_script.size();
  for (const auto& o : tx.outputs) size += kMinOutputSize + 8 + o.locking_script.size();
  out.reserve(size);

  const bool keep_widths = !tx.varint_widths.empty();
  std::size_t next_width = 0;
  auto varint = [&](std::uint64_t v) {
    if (keep_widths && next_width < tx.varint_widths.size())
      write_varint_width(out, v, tx.varint_widths[next_width++]);
    else
      write_varint(out, v);
  };

  put_u32(out, static_cast<std::uint32_t>(tx.version));
  varint(tx.inputs.size());
  for (const auto& in : tx.inputs) {
    out.insert(out.end(), in.prev_txid.bytes.begin(), in.prev_txid.bytes.end());
    put_u32(out, in.prev_vout);
    varint(in.unlocking_script.size());
    out.insert(out.end(), in.unlocking_script.begin(), in.unlocking_script.end());
    put_u32(out, in.sequence);
  }
  varint(tx.outputs.size());
  for (const auto& o : tx.outputs) {
    put_u64(out, o.amount);
    varint(o.locking_script.size());
    out.insert(out.end(), o.locking_script.begin(), o.locking_script.end());
  }
  put_u32(out, tx.locktime);
  return out;
}

Hash32 compute_txid(const RawTransaction& tx) { return double_sha256(serialize(tx)); }

void RawTransaction::update_txid() { txid = compute_txid(*this); }

// ---------------------------------------------------------------------------

std::vector<ScriptToken> tokenize_script(ByteView script) {
  std::vector<ScriptToken> tokens;
  std::size_t pos = 0;
  while (pos < script.size()) {
    const std::uint8_t code = script[pos];
    ScriptToken tok;
    tok.code = code;
    tok.offset = pos;

    std::size_t prefix = 1;
    std::uint64_t len = 0;
    bool is_push = true;
    if (code >= 0x01 && code <= 0x4b) {
      len = code;
    } else if (code == op::OP_PUSHDATA1 || code == op::OP_PUSHDATA2 || code == op::OP_PUSHDATA4) {
      std::size_t width = code == op::OP_PUSHDATA1 ? 1 : code == op::OP_PUSHDATA2 ? 2 : 4;
      prefix += width;
      if (pos + prefix > script.size()) {
        len = ~std::uint64_t{0};
      } else {
        for (std::size_t i = 0; i < width; ++i) len |= std::uint64_t(script[pos + 1 + i]) << (8 * i);
      }
    } else {
      is_push = false;
    }

    if (!is_push) {
      tok.kind = ScriptToken::Kind::OpCode;
      tok.extent = 1;
      tokens.push_back(std::move(tok));
      ++pos;
      continue;
    }
    if (pos + prefix > script.size() || len > script.size() - pos - prefix) {
      tok.kind = ScriptToken::Kind::Error;
      tok.extent = script.size() - pos;
      tok.data.assign(script.begin() + pos, script.end());
      tokens.push_back(std::move(tok));
      break;
    }
    tok.kind = ScriptToken::Kind::PushData;
    tok.extent = prefix + len;
    tok.data.assign(script.begin() + pos + prefix, script.begin() + pos + prefix + len);
    tokens.push_back(std::move(tok));
    pos += prefix + len;
  }
  return tokens;
}

Bytes emit_script(const std::vector<ScriptToken>& tokens) {
  Bytes out;
  for (const auto& tok : tokens) {
    switch (tok.kind) {
      case ScriptToken::Kind::OpCode:
        out.push_back(tok.code);
        break;
      case ScriptToken::Kind::Error:
        out.insert(out.end(), tok.data.begin(), tok.data.end());
        break;
      case ScriptToken::Kind::PushData: {
        out.push_back(tok.code);
        const auto n = tok.data.size();
        std::size_t width = tok.code == op::OP_PUSHDATA1   ? 1
                            : tok.code == op::OP_PUSHDATA2 ? 2
                            : tok.code == op::OP_PUSHDATA4 ? 4
                                                           : 0;
        for (std::size_t i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
        out.insert(out.end(), tok.data.begin(), tok.data.end());
        break;
      }
    }
  }
  return out;
}

bool is_p2pkh_locking(ByteView script) {
  // OP_DUP OP_HASH160 <20 bytes> OP_EQUALVERIFY OP_CHECKSIG
  auto toks = tokenize_script(script);
  return toks.size() == 5 && toks[0].kind == ScriptToken::Kind::OpCode && toks[0].code == op::OP_DUP &&
         toks[1].kind == ScriptToken::Kind::OpCode && toks[1].code == op::OP_HASH160 && toks[2].is_push() &&
         toks[2].data.size() == 20 && toks[3].kind == ScriptToken::Kind::OpCode &&
         toks[3].code == op::OP_EQUALVERIFY && toks[4].kind == ScriptToken::Kind::OpCode &&
         toks[4].code == op::OP_CHECKSIG;
}

bool is_p2pkh_unlocking(ByteView script) {
  // <sig> <pubkey>, pubkey compressed or uncompressed
  auto toks = tokenize_script(script);
  return toks.size() == 2 && toks[0].is_push() && toks[1].is_push() &&
         (toks[1].data.size() == 33 || toks[1].data.size() == 65);
}

const char* opcode_name(std::uint8_t code) {
  switch (code) {
    case 0x00: return "OP_0";
    case 0x4c: return "OP_PUSHDATA1";
    case 0x4d: return "OP_PUSHDATA2";
    case 0x4e: return "OP_PUSHDATA4";
    case 0x4f: return "OP_1NEGATE";
    case 0x61: return "OP_NOP";
    case 0x63: return "OP_IF";
    case 0x64: return "OP_NOTIF";
    case 0x67: return "OP_ELSE";
    case 0x68: return "OP_ENDIF";
    case 0x69: return "OP_VERIFY";
    case 0x6a: return "OP_RETURN";
    case 0x75: return "OP_DROP";
    case 0x76: return "OP_DUP";
    case 0x7c: return "OP_SWAP";
    case 0x87: return "OP_EQUAL";
    case 0x88: return "OP_EQUALVERIFY";
    case 0x93: return "OP_ADD";
    case 0x94: return "OP_SUB";
    case 0xa8: return "OP_SHA256";
    case 0xa9: return "OP_HASH160";
    case 0xaa: return "OP_HASH256";
    case 0xac: return "OP_CHECKSIG";
    case 0xad: return "OP_CHECKSIGVERIFY";
    case 0xae: return "OP_CHECKMULTISIG";
    case 0xb1: return "OP_CHECKLOCKTIMEVERIFY";
    case 0xb2: return "OP_CHECKSEQUENCEVERIFY";
    default: break;
  }
  if (code >= 0x51 && code <= 0x60) {
    static constexpr std::array<const char*, 16> kSmall = {"OP_1",  "OP_2",  "OP_3",  "OP_4",  "OP_5",  "OP_6",
                                                           "OP_7",  "OP_8",  "OP_9",  "OP_10", "OP_11", "OP_12",
                                                           "OP_13", "OP_14", "OP_15", "OP_16"};
    return kSmall[code - 0x51];
  }
  return "OP_UNKNOWN";
}

}  // namespace utxoshard
