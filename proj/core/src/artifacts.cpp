#include "utxoshard/artifacts.hpp"

#include <charconv>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#ifndef UTXOSHARD_VERSION
#define UTXOSHARD_VERSION "0.0.0"
#endif

namespace utxoshard {

namespace pt = boost::property_tree;

std::string tool_version() { return UTXOSHARD_VERSION; }

RunConfig RunConfig::parse(std::string_view text) {
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(Errc::BadConfig, e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      cfg.values_[section] = body.data();
      continue;
    }
    for (const auto& [key, value] : body) cfg.values_[section + "." + key] = value.data();
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const Bytes raw = read_file(path.string());
  return parse(std::string_view(reinterpret_cast<const char*>(raw.data()), raw.size()));
}

RunConfig RunConfig::defaults() {
  return parse(R"([global]
log_level = info
out = out

[gen]
communities = 10
txs_per_community = 5000
p_intra = 0.95
roots_per_community = 20
seed = 1
format = bin

[vocab]
size = 75

[train]
seed = 42
margin = 1.0
batch_pairs = 256
epochs = 10
mining = curriculum
plateau_window = 5
plateau_threshold = 0.01
learning_rate = 0.0003
split = 0.8
max_children = 8
hidden = 256,128
embedding = 32
normalize = false

[eval]
shards = 10
anchors = 6
seed = 7

[cluster]
shards = 2,5,10,20,50,100
seed = 7
restarts = 4
max_points = 20000

[simulate]
shards = 2,5,10,20,50,100
k_max = 9
policies = learned,rand-one,rand-many,hash
policy_seed = 11
)");
}

void RunConfig::merge(const RunConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw Error(Errc::BadConfig, "bad value for " + key + ": '" + text + "'");
  return value;
}

}  // namespace

std::int64_t RunConfig::get_int(const std::string& key, std::int64_t fallback) const {
  return contains(key) ? parse_number<std::int64_t>(key, values_.at(key)) : fallback;
}

std::uint64_t RunConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
  return contains(key) ? parse_number<std::uint64_t>(key, values_.at(key)) : fallback;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  return contains(key) ? parse_number<double>(key, values_.at(key)) : fallback;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  if (!contains(key)) return fallback;
  const auto& v = values_.at(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(Errc::BadConfig, "bad boolean for " + key + ": '" + v + "'");
}

std::vector<std::size_t> RunConfig::get_size_list(const std::string& key, std::vector<std::size_t> fallback) const {
  return contains(key) ? parse_size_list(values_.at(key)) : fallback;
}

std::vector<std::size_t> parse_size_list(std::string_view text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    std::string item(text.substr(start, end - start));
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) throw Error(Errc::BadConfig, "empty entry in list '" + std::string(text) + "'");
    out.push_back(parse_number<std::size_t>("list", item));
    start = end + 1;
  }
  return out;
}

std::string RunConfig::to_ini() const {
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    if (dot == std::string::npos) sections[""][k] = v;
    else sections[k.substr(0, dot)][k.substr(dot + 1)] = v;
  }
  std::ostringstream os;
  bool first = true;
  for (const auto& [section, entries] : sections) {
    if (!first) os << '\n';
    first = false;
    if (!section.empty()) os << '[' << section << "]\n";
    for (const auto& [k, v] : entries) os << k << " = " << v << '\n';
  }
  return os.str();
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path.string())); }

void RunManifest::add_input(const std::string& role, const std::filesystem::path& path) {
  inputs.push_back({role, path.string(), file_sha256(path)});
}

void RunManifest::add_output(const std::string& role, const std::filesystem::path& path) {
  outputs.push_back({role, path.filename().string(), file_sha256(path)});
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["tool_version"] = tool_version;
  auto refs = [](const std::vector<ArtifactRef>& list) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : list) arr.push_back({{"role", r.role}, {"path", r.path}, {"sha256", r.sha256}});
    return arr;
  };
  j["inputs"] = refs(inputs);
  j["outputs"] = refs(outputs);
  j["hashes"] = nlohmann::ordered_json(hashes);
  return j.dump(2) + "\n";
}

void write_run_record(const std::filesystem::path& dir, const RunManifest& manifest, const RunConfig& resolved) {
  std::filesystem::create_directories(dir);
  write_text_file((dir / (manifest.command + ".config.ini")).string(), resolved.to_ini());
  write_text_file((dir / (manifest.command + ".manifest.json")).string(), manifest.to_json());
}

}  // namespace utxoshard
