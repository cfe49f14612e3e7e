#pragma once

// Transaction stream files in three interchangeable formats:
//   hex    one serialized transaction per line, lowercase hex
//   bin    repeated [u32 little-endian length][raw transaction bytes]
//   jsonl  one canonical JSON object per line (field order below)
//
// Canonical JSON record, keys always in this order:
//   {"txid":"..","version":1,"locktime":0,
//    "inputs":[{"prev_txid":"..","prev_vout":0,"script":"..","sequence":4294967295}],
//    "outputs":[{"amount":5000,"script":".."}]}
// Hashes use the byte-reversed display form; scripts are hex; amounts are
// decimal satoshis.

#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "utxoshard/txcodec.hpp"

namespace utxoshard {

enum class TxFormat { Hex, Binary, JsonLines };

TxFormat parse_tx_format(std::string_view name);
const char* tx_format_name(TxFormat format);
const char* tx_format_extension(TxFormat format);
// Guesses from the file extension (.hex, .bin, .jsonl); defaults to hex.
TxFormat tx_format_from_path(const std::string& path);

std::string to_json_line(const RawTransaction& tx);
// Verifies the embedded txid when present.
RawTransaction from_json_line(std::string_view line);

struct StreamError {
  std::size_t record = 0;  // zero-based record index
  std::size_t line = 0;    // one-based line for text formats, 0 for binary
  std::size_t offset = 0;  // byte offset of the record in the file
  std::string message;
};

struct StreamOptions {
  bool skip_coinbase = false;
  ParseOptions parse;
};

class TxStreamReader {
 public:
  TxStreamReader(const std::string& path, TxFormat format, StreamOptions options = {});
  ~TxStreamReader();
  TxStreamReader(TxStreamReader&&) noexcept;
  TxStreamReader& operator=(TxStreamReader&&) noexcept;

  // Next well-formed transaction in file order; nullopt at end of file.
  // Malformed records are logged in errors() and skipped.
  std::optional<RawTransaction> next();

  const std::vector<StreamError>& errors() const { return errors_; }
  std::size_t records_read() const { return records_; }
  std::size_t coinbase_skipped() const { return coinbase_skipped_; }

 private:
  std::optional<RawTransaction> next_record();

  std::unique_ptr<std::ifstream> in_;
  TxFormat format_;
  StreamOptions options_;
  std::vector<StreamError> errors_;
  std::size_t records_ = 0;
  std::size_t line_ = 0;
  std::size_t offset_ = 0;
  std::size_t coinbase_skipped_ = 0;
};

struct TxStreamContents {
  std::vector<RawTransaction> txs;
  std::vector<StreamError> errors;
  std::size_t coinbase_skipped = 0;
};

TxStreamContents read_tx_stream(const std::string& path, TxFormat format, StreamOptions options = {});

class TxStreamWriter {
 public:
  TxStreamWriter(const std::string& path, TxFormat format);
  void write(const RawTransaction& tx);
  void close();

 private:
  std::ofstream out_;
  TxFormat format_;
};

void write_tx_stream(const std::string& path, TxFormat format, const std::vector<RawTransaction>& txs);

}  // namespace utxoshard
