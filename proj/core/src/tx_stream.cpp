#include "utxoshard/tx_stream.hpp"

#include <json.hpp>

namespace utxoshard {

using ordered_json = nlohmann::ordered_json;

TxFormat parse_tx_format(std::string_view name) {
  if (name == "hex") return TxFormat::Hex;
  if (name == "bin") return TxFormat::Binary;
  if (name == "jsonl") return TxFormat::JsonLines;
  throw Error(Errc::UnsupportedFormat, "unknown transaction format '" + std::string(name) + "'");
}

const char* tx_format_name(TxFormat format) {
  switch (format) {
    case TxFormat::Hex: return "hex";
    case TxFormat::Binary: return "bin";
    case TxFormat::JsonLines: return "jsonl";
  }
  return "hex";
}

const char* tx_format_extension(TxFormat format) {
  switch (format) {
    case TxFormat::Hex: return ".hex";
    case TxFormat::Binary: return ".bin";
    case TxFormat::JsonLines: return ".jsonl";
  }
  return ".hex";
}

TxFormat tx_format_from_path(const std::string& path) {
  auto ends_with = [&](std::string_view s) {
    return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
  };
  if (ends_with(".bin")) return TxFormat::Binary;
  if (ends_with(".jsonl")) return TxFormat::JsonLines;
  return TxFormat::Hex;
}

std::string to_json_line(const RawTransaction& tx) {
  ordered_json j;
  j["txid"] = tx.txid.to_hex();
  j["version"] = tx.version;
  j["locktime"] = tx.locktime;
  j["inputs"] = ordered_json::array();
  for (const auto& in : tx.inputs) {
    ordered_json ji;
    ji["prev_txid"] = in.prev_txid.to_hex();
    ji["prev_vout"] = in.prev_vout;
    ji["script"] = to_hex(in.unlocking_script);
    ji["sequence"] = in.sequence;
    j["inputs"].push_back(std::move(ji));
  }
  j["outputs"] = ordered_json::array();
  for (const auto& out : tx.outputs) {
    ordered_json jo;
    jo["amount"] = out.amount;
    jo["script"] = to_hex(out.locking_script);
    j["outputs"].push_back(std::move(jo));
  }
  return j.dump();
}

RawTransaction from_json_line(std::string_view line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadRecord, e.what());
  }
  RawTransaction tx;
  try {
    tx.version = j.at("version").get<std::int32_t>();
    tx.locktime = j.at("locktime").get<std::uint32_t>();
    for (const auto& ji : j.at("inputs")) {
      TxInput in;
      in.prev_txid = Hash32::from_hex(ji.at("prev_txid").get<std::string>());
      in.prev_vout = ji.at("prev_vout").get<std::uint32_t>();
      in.unlocking_script = from_hex(ji.at("script").get<std::string>());
      in.sequence = ji.at("sequence").get<std::uint32_t>();
      tx.inputs.push_back(std::move(in));
    }
    for (const auto& jo : j.at("outputs")) {
      TxOutput out;
      out.amount = jo.at("amount").get<std::uint64_t>();
      out.locking_script = from_hex(jo.at("script").get<std::string>());
      tx.outputs.push_back(std::move(out));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadRecord, e.what());
  }
  if (tx.inputs.empty() || tx.outputs.empty())
    throw Error(Errc::EmptyInputsOrOutputs, "JSON record without inputs or outputs");
  tx.update_txid();
  if (j.contains("txid")) {
    auto stated = j["txid"].get<std::string>();
    if (stated != tx.txid.to_hex())
      throw Error(Errc::HashMismatch, "record txid " + stated + " but fields hash to " + tx.txid.to_hex());
  }
  return tx;
}

// ---------------------------------------------------------------------------

TxStreamReader::TxStreamReader(const std::string& path, TxFormat format, StreamOptions options)
    : in_(std::make_unique<std::ifstream>(path, std::ios::binary)), format_(format), options_(options) {
  if (!*in_) throw Error(Errc::Io, "cannot open " + path);
}

TxStreamReader::~TxStreamReader() = default;
TxStreamReader::TxStreamReader(TxStreamReader&&) noexcept = default;
TxStreamReader& TxStreamReader::operator=(TxStreamReader&&) noexcept = default;

std::optional<RawTransaction> TxStreamReader::next() {
  while (auto tx = next_record()) {
    if (options_.skip_coinbase && tx->is_coinbase()) {
      ++coinbase_skipped_;
      continue;
    }
    return tx;
  }
  return std::nullopt;
}

std::optional<RawTransaction> TxStreamReader::next_record() {
  for (;;) {
    const std::size_t record = records_;
    const std::size_t start = offset_;
    try {
      if (format_ == TxFormat::Binary) {
        std::array<char, 4> len_bytes{};
        in_->read(len_bytes.data(), 4);
        if (in_->gcount() == 0) return std::nullopt;
        ++records_;
        if (in_->gcount() != 4) {
          errors_.push_back({record, 0, start, "truncated length prefix"});
          return std::nullopt;
        }
        std::uint32_t len = 0;
        for (int i = 0; i < 4; ++i) len |= std::uint32_t(static_cast<std::uint8_t>(len_bytes[i])) << (8 * i);
        Bytes raw(len);
        in_->read(reinterpret_cast<char*>(raw.data()), len);
        offset_ += 4 + static_cast<std::size_t>(in_->gcount());
        if (static_cast<std::size_t>(in_->gcount()) != len) {
          errors_.push_back({record, 0, start, "record shorter than its length prefix"});
          return std::nullopt;
        }
        return decode_transaction(raw, options_.parse);
      }

      std::string line;
      if (!std::getline(*in_, line)) return std::nullopt;
      ++line_;
      offset_ += line.size() + 1;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      ++records_;
      if (format_ == TxFormat::Hex) return decode_transaction_hex(line, options_.parse);
      return from_json_line(line);
    } catch (const Error& e) {
      errors_.push_back({record, format_ == TxFormat::Binary ? 0 : line_, start, e.what()});
    }
  }
}

TxStreamContents read_tx_stream(const std::string& path, TxFormat format, StreamOptions options) {
  TxStreamReader reader(path, format, options);
  TxStreamContents contents;
  while (auto tx = reader.next()) contents.txs.push_back(std::move(*tx));
  contents.errors = reader.errors();
  contents.coinbase_skipped = reader.coinbase_skipped();
  return contents;
}

TxStreamWriter::TxStreamWriter(const std::string& path, TxFormat format)
    : out_(path, std::ios::binary | std::ios::trunc), format_(format) {
  if (!out_) throw Error(Errc::Io, "cannot write " + path);
}

void TxStreamWriter::write(const RawTransaction& tx) {
  switch (format_) {
    case TxFormat::Hex:
      out_ << to_hex(serialize(tx)) << '\n';
      break;
    case TxFormat::JsonLines:
      out_ << to_json_line(tx) << '\n';
      break;
    case TxFormat::Binary: {
      Bytes raw = serialize(tx);
      Bytes prefix;
      put_u32(prefix, static_cast<std::uint32_t>(raw.size()));
      out_.write(reinterpret_cast<const char*>(prefix.data()), 4);
      out_.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
      break;
    }
  }
  if (!out_) throw Error(Errc::Io, "write failed");
}

void TxStreamWriter::close() { out_.close(); }

void write_tx_stream(const std::string& path, TxFormat format, const std::vector<RawTransaction>& txs) {
  TxStreamWriter w(path, format);
  for (const auto& tx : txs) w.write(tx);
  w.close();
}

}  // namespace utxoshard
