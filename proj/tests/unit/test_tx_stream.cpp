#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "utxoshard/tx_stream.hpp"

using namespace utxoshard;

namespace {

std::vector<RawTransaction> canonical_corpus() {
  std::vector<RawTransaction> out;
  for (auto& tx : testsupport::fixture_corpus())
    if (tx.varint_widths.empty()) out.push_back(std::move(tx));
  return out;
}

}  // namespace

TEST_CASE("every format round-trips the fixture corpus") {
  const auto dir = testsupport::scratch_dir("tx_stream_roundtrip");
  const auto txs = canonical_corpus();
  REQUIRE(txs.size() > 40);
  for (auto format : {TxFormat::Hex, TxFormat::Binary, TxFormat::JsonLines}) {
    CAPTURE(tx_format_name(format));
    const std::string path = dir + "/s" + tx_format_extension(format);
    write_tx_stream(path, format, txs);
    CHECK(tx_format_from_path(path) == format);
    const auto back = read_tx_stream(path, format);
    CHECK(back.errors.empty());
    REQUIRE(back.txs.size() == txs.size());
    for (std::size_t i = 0; i < txs.size(); ++i) {
      CHECK(back.txs[i].txid == txs[i].txid);
      CHECK(serialize(back.txs[i]) == serialize(txs[i]));
    }
  }
}

TEST_CASE("non-canonical records keep their exact bytes in hex and binary streams") {
  const auto dir = testsupport::scratch_dir("tx_stream_noncanonical");
  auto txs = testsupport::fixture_corpus();
  for (auto format : {TxFormat::Hex, TxFormat::Binary}) {
    const std::string path = dir + "/s" + tx_format_extension(format);
    write_tx_stream(path, format, txs);
    const auto back = read_tx_stream(path, format);
    REQUIRE(back.txs.size() == txs.size());
    for (std::size_t i = 0; i < txs.size(); ++i) CHECK(back.txs[i].txid == txs[i].txid);
  }
}

TEST_CASE("canonical JSON layout") {
  const auto tx = testsupport::fixture_corpus().front();
  const std::string line = to_json_line(tx);
  CHECK(line.rfind("{\"txid\":\"4a5e1e4b", 0) == 0);
  const auto pos = [&](const char* key) { return line.find(key); };
  CHECK(pos("\"txid\"") < pos("\"version\""));
  CHECK(pos("\"version\"") < pos("\"locktime\""));
  CHECK(pos("\"locktime\"") < pos("\"inputs\""));
  CHECK(pos("\"inputs\"") < pos("\"outputs\""));
  CHECK(pos("\"prev_txid\"") < pos("\"prev_vout\""));
  CHECK(pos("\"amount\":5000000000") != std::string::npos);
  CHECK(from_json_line(line) == tx);
}

TEST_CASE("json records with a wrong txid are rejected") {
  auto tx = testsupport::fixture_corpus()[1];
  std::string line = to_json_line(tx);
  line.replace(line.find(tx.txid.to_hex()), 64, std::string(64, '0'));
  try {
    from_json_line(line);
    FAIL("accepted a record with a wrong txid");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::HashMismatch);
  }
}

TEST_CASE("malformed records are logged with their position and skipped") {
  const auto dir = testsupport::scratch_dir("tx_stream_errors");
  const auto lines = testsupport::fixture_lines("corpus.hex");
  {
    std::ofstream out(dir + "/bad.hex");
    out << lines[0] << "\n" << "zz\n" << lines[1].substr(0, 40) << "\n\n" << lines[2] << "\n";
  }
  const auto got = read_tx_stream(dir + "/bad.hex", TxFormat::Hex);
  CHECK(got.txs.size() == 2);
  REQUIRE(got.errors.size() == 2);
  CHECK(got.errors[0].record == 1);
  CHECK(got.errors[0].line == 2);
  CHECK(got.errors[1].record == 2);
  CHECK(got.errors[1].line == 3);

  const auto txs = canonical_corpus();
  Bytes bin;
  for (std::size_t i = 0; i < 2; ++i) {
    const Bytes raw = serialize(txs[i]);
    put_u32(bin, static_cast<std::uint32_t>(raw.size()));
    bin.insert(bin.end(), raw.begin(), raw.end());
  }
  put_u32(bin, 1000);
  bin.push_back(1);
  write_file(dir + "/bad.bin", bin);
  const auto b = read_tx_stream(dir + "/bad.bin", TxFormat::Binary);
  CHECK(b.txs.size() == 2);
  REQUIRE(b.errors.size() == 1);
  CHECK(b.errors[0].record == 2);
}

TEST_CASE("coinbase skipping") {
  const auto dir = testsupport::scratch_dir("tx_stream_coinbase");
  const auto txs = canonical_corpus();
  write_tx_stream(dir + "/s.hex", TxFormat::Hex, txs);
  std::size_t coinbases = 0;
  for (const auto& tx : txs) coinbases += tx.is_coinbase();
  REQUIRE(coinbases > 0);
  const auto got = read_tx_stream(dir + "/s.hex", TxFormat::Hex, StreamOptions{true, {}});
  CHECK(got.coinbase_skipped == coinbases);
  CHECK(got.txs.size() == txs.size() - coinbases);
}

TEST_CASE("format names") {
  CHECK(parse_tx_format("jsonl") == TxFormat::JsonLines);
  CHECK_THROWS_AS(parse_tx_format("csv"), Error);
  CHECK_THROWS_AS(read_tx_stream("/nonexistent/stream.hex", TxFormat::Hex), Error);
}
