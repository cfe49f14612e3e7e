#include "workspace.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace utxoshard::cli {

namespace {
constexpr std::array<std::uint8_t, 4> kOutpointMagic = {'U', 'X', 'O', 'P'};
}

fs::path Workspace::find_stream() const {
  for (auto format : {TxFormat::Binary, TxFormat::Hex, TxFormat::JsonLines}) {
    auto p = stream(format);
    if (fs::exists(p)) return p;
  }
  throw Error(Errc::Io, "no stream file in " + dir.string() + " (run gen or pass --in)");
}

std::string FeatureMeta::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = "feature_meta";
  j["dimension"] = dimension;
  j["rows"] = rows;
  j["vocab_hash"] = vocab_hash;
  j["scaler_hash"] = scaler_hash;
  j["dataset_id"] = dataset_id;
  return j.dump(2) + "\n";
}

FeatureMeta FeatureMeta::from_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    if (j.at("kind") != "feature_meta") throw Error(Errc::BadRecord, "not a feature metadata file");
    return {j.at("dimension").get<std::size_t>(), j.at("rows").get<std::size_t>(),
            j.at("vocab_hash").get<std::string>(), j.at("scaler_hash").get<std::string>(),
            j.at("dataset_id").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadRecord, std::string("feature metadata: ") + e.what());
  }
}

std::string read_text(const fs::path& path) {
  const Bytes raw = read_file(path.string());
  return std::string(raw.begin(), raw.end());
}

Bytes encode_outpoints(const std::vector<TxOutpoint>& outpoints) {
  Bytes out(kOutpointMagic.begin(), kOutpointMagic.end());
  put_u64(out, outpoints.size());
  for (const auto& o : outpoints) {
    out.insert(out.end(), o.txid.bytes.begin(), o.txid.bytes.end());
    put_u32(out, o.vout);
  }
  return out;
}

std::vector<TxOutpoint> decode_outpoints(ByteView bytes) {
  if (bytes.size() < 12 || !std::equal(kOutpointMagic.begin(), kOutpointMagic.end(), bytes.begin()))
    throw Error(Errc::UnsupportedFormat, "not an outpoint list");
  const std::uint64_t n = get_u64(bytes, 4);
  if (bytes.size() != 12 + n * 36) throw Error(Errc::Truncated, "outpoint list length");
  std::vector<TxOutpoint> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = 12 + 36 * i;
    std::copy(bytes.begin() + at, bytes.begin() + at + 32, out[i].txid.bytes.begin());
    out[i].vout = get_u32(bytes, at + 32);
  }
  return out;
}

void write_hash_list(const fs::path& path, const std::unordered_set<Hash32, Hash32Hasher>& hashes) {
  std::vector<std::string> lines;
  lines.reserve(hashes.size());
  for (const auto& h : hashes) lines.push_back(h.to_hex());
  std::sort(lines.begin(), lines.end());
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text_file(path.string(), text);
}

std::unordered_set<Hash32, Hash32Hasher> read_hash_list(const fs::path& path) {
  std::unordered_set<Hash32, Hash32Hasher> out;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.insert(Hash32::from_hex(line));
  return out;
}

void require_same_hash(const std::string& what, const std::string& expected, const std::string& actual) {
  if (expected != actual)
    throw Error(Errc::HashMismatch, what + " hash mismatch: expected " + expected + ", found " + actual);
}

std::string summary_table(const std::vector<SimReport>& reports) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %5s %8s %8s %8s %8s %9s %7s %9s\n", "policy", "n", "acc@0", "acc@1", "acc@3",
                "acc@9", "msgs/tx", "load", "inputs");
  out += line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-10s %5zu %8.4f %8.4f %8.4f %8.4f %9.4f %7.3f %9llu\n", r.policy.c_str(),
                  r.n_shards, r.accuracy(0), r.accuracy(1), r.accuracy(3), r.accuracy(9), r.messages_per_tx,
                  r.load_max_over_mean, static_cast<unsigned long long>(r.measured_inputs));
    out += line;
  }
  return out;
}

}  // namespace utxoshard::cli
