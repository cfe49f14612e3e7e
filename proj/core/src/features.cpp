#include "utxoshard/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace utxoshard {

using ordered_json = nlohmann::ordered_json;

namespace {
constexpr int kFormatVersion = 1;
}

OpCodeVocabulary OpCodeVocabulary::from_entries(std::vector<std::uint8_t> entries, std::string corpus_id) {
  OpCodeVocabulary v;
  std::vector<bool> seen(256, false);
  for (auto e : entries) {
    if (seen[e]) throw Error(Errc::BadSpec, "duplicate opcode in vocabulary");
    seen[e] = true;
  }
  v.counts_.assign(entries.size(), 0);
  v.entries_ = std::move(entries);
  v.corpus_id_ = std::move(corpus_id);
  v.rebuild_lookup();
  return v;
}

void OpCodeVocabulary::rebuild_lookup() {
  lookup_.fill(-1);
  for (std::size_t i = 0; i < entries_.size(); ++i) lookup_[entries_[i]] = static_cast<std::int16_t>(i);
}

std::optional<std::size_t> OpCodeVocabulary::index_of(std::uint8_t code) const {
  if (lookup_[code] < 0) return std::nullopt;
  return static_cast<std::size_t>(lookup_[code]);
}

std::string OpCodeVocabulary::to_json() const {
  ordered_json j;
  j["version"] = kFormatVersion;
  j["kind"] = "opcode_vocabulary";
  j["corpus"] = corpus_id_;
  j["hash"] = hash();
  j["entries"] = entries_;
  ordered_json names = ordered_json::array();
  for (auto e : entries_) names.push_back(opcode_name(e));
  j["names"] = names;
  j["counts"] = counts_;
  j["other_count"] = other_count_;
  return j.dump(1) + "\n";
}

OpCodeVocabulary OpCodeVocabulary::from_json(std::string_view text) {
  try {
    auto j = ordered_json::parse(text);
    if (j.at("kind") != "opcode_vocabulary") throw Error(Errc::BadRecord, "not an opcode vocabulary document");
    if (j.at("version").get<int>() != kFormatVersion) throw Error(Errc::UnsupportedFormat, "vocabulary version");
    auto v = from_entries(j.at("entries").get<std::vector<std::uint8_t>>(), j.value("corpus", ""));
    if (j.contains("counts")) v.counts_ = j["counts"].get<std::vector<std::uint64_t>>();
    if (v.counts_.size() != v.entries_.size()) throw Error(Errc::BadRecord, "vocabulary counts length");
    v.other_count_ = j.value("other_count", std::uint64_t{0});
    if (j.contains("hash") && j["hash"].get<std::string>() != v.hash())
      throw Error(Errc::HashMismatch, "vocabulary content does not match its recorded hash");
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadRecord, e.what());
  }
}

std::string OpCodeVocabulary::hash() const {
  std::string text = "opcode_vocabulary:v1:";
  text += to_hex(entries_);
  return sha256_hex(text);
}

void VocabularyBuilder::add_script(ByteView locking_script) {
  ++scripts_;
  for (const auto& tok : tokenize_script(locking_script))
    if (tok.kind == ScriptToken::Kind::OpCode) ++counts_[tok.code];
}

void VocabularyBuilder::add(const RawTransaction& tx) {
  for (const auto& out : tx.outputs) add_script(out.locking_script);
}

OpCodeVocabulary VocabularyBuilder::build(std::size_t size, std::string corpus_id) const {
  if (size < 1) throw Error(Errc::BadSpec, "vocabulary size must be at least 1");
  if (scripts_ == 0) throw Error(Errc::EmptyCorpus, "no locking scripts in corpus");
  std::vector<std::uint8_t> order(256);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint8_t a, std::uint8_t b) { return counts_[a] > counts_[b]; });
  std::vector<std::uint8_t> entries;
  for (auto code : order) {
    if (entries.size() == size || counts_[code] == 0) break;
    entries.push_back(code);
  }
  auto v = OpCodeVocabulary::from_entries(entries, std::move(corpus_id));
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < 256; ++i) total += counts_[i];
  std::uint64_t kept = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    v.counts_[i] = counts_[entries[i]];
    kept += v.counts_[i];
  }
  v.other_count_ = total - kept;
  return v;
}

OpCodeVocabulary build_vocabulary(const std::vector<RawTransaction>& txs, std::size_t size, std::string corpus_id) {
  VocabularyBuilder b;
  for (const auto& tx : txs) b.add(tx);
  return b.build(size, std::move(corpus_id));
}

std::vector<double> bag_of_opcodes(ByteView locking_script, const OpCodeVocabulary& vocab) {
  std::vector<double> bag(vocab.bag_size(), 0.0);
  for (const auto& tok : tokenize_script(locking_script)) {
    if (tok.kind != ScriptToken::Kind::OpCode) continue;
    bag[vocab.index_of(tok.code).value_or(vocab.other_index())] = 1.0;
  }
  return bag;
}

std::array<double, kTopScripts> top_unlocking_encoding(const RawTransaction& tx) {
  std::array<double, kTopScripts> enc{};
  for (std::size_t i = 0; i < kTopScripts && i < tx.inputs.size(); ++i)
    enc[i] = is_p2pkh_unlocking(tx.inputs[i].unlocking_script) ? 2.0 : 1.0;
  return enc;
}

std::array<double, kTopScripts> top_locking_encoding(const RawTransaction& tx) {
  std::array<double, kTopScripts> enc{};
  for (std::size_t i = 0; i < kTopScripts && i < tx.outputs.size(); ++i)
    enc[i] = is_p2pkh_locking(tx.outputs[i].locking_script) ? 2.0 : 1.0;
  return enc;
}

std::array<double, kGlobalFeatures> global_features(const RawTransaction& tx) {
  std::array<double, kGlobalFeatures> g{};
  const std::size_t n = tx.outputs.size();
  g[0] = static_cast<double>(tx.inputs.size());
  g[1] = static_cast<double>(n);
  if (n > 0) {
    std::vector<std::uint64_t> amounts;
    amounts.reserve(n);
    for (const auto& o : tx.outputs) amounts.push_back(o.amount);
    std::sort(amounts.begin(), amounts.end());

    double sum = 0.0;
    for (auto a : amounts) sum += static_cast<double>(a);
    const double mean = sum / static_cast<double>(n);

    // Mode: longest run in sorted order; the first (smallest) run wins ties.
    std::uint64_t mode = amounts[0];
    std::size_t best = 0;
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j < n && amounts[j] == amounts[i]) ++j;
      if (j - i > best) {
        best = j - i;
        mode = amounts[i];
      }
      i = j;
    }

    const double median = n % 2 == 1 ? static_cast<double>(amounts[n / 2])
                                     : 0.5 * (static_cast<double>(amounts[n / 2 - 1]) +
                                              static_cast<double>(amounts[n / 2]));
    double var = 0.0;
    for (auto a : amounts) {
      const double d = static_cast<double>(a) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);

    g[2] = sum;
    g[3] = static_cast<double>(amounts.back());
    g[4] = static_cast<double>(amounts.front());
    g[5] = mean;
    g[6] = static_cast<double>(mode);
    g[7] = median;
    g[8] = std::sqrt(var);
  }
  std::size_t script_bytes = 0;
  for (const auto& in : tx.inputs) script_bytes += in.unlocking_script.size();
  for (const auto& o : tx.outputs) script_bytes += o.locking_script.size();
  g[9] = static_cast<double>(script_bytes);

  auto unlock = top_unlocking_encoding(tx);
  auto lock = top_locking_encoding(tx);
  std::copy(unlock.begin(), unlock.end(), g.begin() + 10);
  std::copy(lock.begin(), lock.end(), g.begin() + 15);
  return g;
}

std::array<double, kPositionalFeatures> positional_encoding(std::uint32_t position) {
  std::array<double, kPositionalFeatures> pe{};
  const double pos = static_cast<double>(position);
  for (std::size_t i = 0; i < kPositionalFeatures / 2; ++i) {
    const double angle = pos / std::pow(10000.0, static_cast<double>(2 * i) / kPositionalFeatures);
    pe[2 * i] = std::sin(angle);
    pe[2 * i + 1] = std::cos(angle);
  }
  return pe;
}

std::vector<std::size_t> FeatureLayout::magnitude_dimensions() const {
  std::vector<std::size_t> dims;
  for (std::size_t d = 2; d <= 9; ++d) dims.push_back(d);  // sum, six statistics, script bytes
  dims.push_back(script_size_offset());
  dims.push_back(amount_offset());
  return dims;
}

// ---------------------------------------------------------------------------

FeatureScaler FeatureScaler::identity(std::size_t dimension) {
  FeatureScaler s;
  s.shift_.assign(dimension, 0.0);
  s.scale_.assign(dimension, 1.0);
  s.log1p_.assign(dimension, false);
  s.fitted_on_ = "identity";
  return s;
}

void FeatureScaler::transform(std::span<double> values) const {
  if (values.size() != shift_.size())
    throw Error(Errc::DimensionMismatch, "scaler of dimension " + std::to_string(shift_.size()) +
                                             " applied to vector of dimension " + std::to_string(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = log1p_[i] ? std::log1p(values[i]) : values[i];
    values[i] = (v - shift_[i]) / scale_[i];
  }
}

void FeatureScaler::inverse(std::span<double> values) const {
  if (values.size() != shift_.size()) throw Error(Errc::DimensionMismatch, "scaler inverse dimension");
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = values[i] * scale_[i] + shift_[i];
    values[i] = log1p_[i] ? std::expm1(v) : v;
  }
}

std::string FeatureScaler::to_json() const {
  ordered_json j;
  j["version"] = kFormatVersion;
  j["kind"] = "feature_scaler";
  j["fitted_on"] = fitted_on_;
  j["dimension"] = shift_.size();
  std::vector<std::size_t> log_dims;
  for (std::size_t i = 0; i < log1p_.size(); ++i)
    if (log1p_[i]) log_dims.push_back(i);
  j["log1p_dimensions"] = log_dims;
  j["shift"] = shift_;
  j["scale"] = scale_;
  return j.dump(1) + "\n";
}

FeatureScaler FeatureScaler::from_json(std::string_view text) {
  try {
    auto j = ordered_json::parse(text);
    if (j.at("kind") != "feature_scaler") throw Error(Errc::BadRecord, "not a feature scaler document");
    if (j.at("version").get<int>() != kFormatVersion) throw Error(Errc::UnsupportedFormat, "scaler version");
    FeatureScaler s;
    s.fitted_on_ = j.value("fitted_on", "");
    s.shift_ = j.at("shift").get<std::vector<double>>();
    s.scale_ = j.at("scale").get<std::vector<double>>();
    const auto dim = j.at("dimension").get<std::size_t>();
    if (s.shift_.size() != dim || s.scale_.size() != dim) throw Error(Errc::BadRecord, "scaler dimension");
    s.log1p_.assign(dim, false);
    for (auto d : j.at("log1p_dimensions").get<std::vector<std::size_t>>()) {
      if (d >= dim) throw Error(Errc::BadRecord, "log1p dimension out of range");
      s.log1p_[d] = true;
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadRecord, e.what());
  }
}

std::string FeatureScaler::hash() const { return sha256_hex(to_json()); }

FeatureScaler fit_scaler(const Matrix& raw, const FeatureLayout& layout, std::string dataset_id) {
  if (raw.rows() == 0) throw Error(Errc::EmptyStream, "cannot fit a scaler on zero rows");
  if (raw.cols() != layout.dimension())
    throw Error(Errc::DimensionMismatch, "feature matrix width " + std::to_string(raw.cols()) +
                                             " does not match layout dimension " +
                                             std::to_string(layout.dimension()));
  const std::size_t d = raw.cols();
  FeatureScaler s;
  s.fitted_on_ = std::move(dataset_id);
  s.log1p_.assign(d, false);
  for (auto dim : layout.magnitude_dimensions()) s.log1p_[dim] = true;
  s.shift_.assign(d, 0.0);
  s.scale_.assign(d, 1.0);

  const double n = static_cast<double>(raw.rows());
  for (std::size_t c = 0; c < d; ++c) {
    auto value = [&](std::size_t r) { return s.log1p_[c] ? std::log1p(raw(r, c)) : raw(r, c); };
    double mean = 0.0;
    for (std::size_t r = 0; r < raw.rows(); ++r) mean += value(r);
    mean /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < raw.rows(); ++r) {
      const double dv = value(r) - mean;
      var += dv * dv;
    }
    const double sd = std::sqrt(var / n);
    s.shift_[c] = mean;
    s.scale_[c] = sd < 1e-12 ? 1.0 : sd;
  }
  return s;
}

FeatureVector featurize_outpoint(const RawTransaction& tx, std::uint32_t vout, const OpCodeVocabulary& vocab,
                                 const FeatureScaler* scaler) {
  if (vout >= tx.outputs.size())
    throw Error(Errc::IndexOutOfRange,
                "output index " + std::to_string(vout) + " of " + std::to_string(tx.outputs.size()));
  const FeatureLayout layout{vocab.bag_size()};
  FeatureVector fv;
  fv.values.reserve(layout.dimension());

  auto g = global_features(tx);
  fv.values.insert(fv.values.end(), g.begin(), g.end());
  const auto& out = tx.outputs[vout];
  auto bag = bag_of_opcodes(out.locking_script, vocab);
  fv.values.insert(fv.values.end(), bag.begin(), bag.end());
  fv.values.push_back(static_cast<double>(out.locking_script.size()));
  fv.values.push_back(static_cast<double>(out.amount));
  auto pe = positional_encoding(vout);
  fv.values.insert(fv.values.end(), pe.begin(), pe.end());

  if (scaler) scaler->transform(fv.values);
  return fv;
}

void featurize_transaction(const RawTransaction& tx, const OpCodeVocabulary& vocab, const FeatureScaler* scaler,
                           Matrix& out) {
  for (std::uint32_t v = 0; v < tx.outputs.size(); ++v) out.append_row(featurize_outpoint(tx, v, vocab, scaler).values);
}

FeatureTable::FeatureTable(Matrix rows, std::vector<TxOutpoint> outpoints)
    : rows_(std::move(rows)), outpoints_(std::move(outpoints)) {
  if (rows_.rows() != outpoints_.size())
    throw Error(Errc::DimensionMismatch, "feature table has " + std::to_string(rows_.rows()) + " rows for " +
                                             std::to_string(outpoints_.size()) + " outpoints");
  index_.reserve(outpoints_.size());
  for (std::size_t i = 0; i < outpoints_.size(); ++i) index_.emplace(outpoints_[i], i);
}

FeatureTable FeatureTable::build(const std::vector<RawTransaction>& txs, const OpCodeVocabulary& vocab,
                                 const FeatureScaler* scaler) {
  Matrix rows;
  std::vector<TxOutpoint> outpoints;
  for (const auto& tx : txs) {
    featurize_transaction(tx, vocab, scaler, rows);
    for (std::uint32_t v = 0; v < tx.outputs.size(); ++v) outpoints.push_back(tx.outpoint(v));
  }
  return FeatureTable(std::move(rows), std::move(outpoints));
}

std::optional<std::size_t> FeatureTable::row_of(const TxOutpoint& outpoint) const {
  auto it = index_.find(outpoint);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------

Bytes encode_feature_matrix(const Matrix& m) {
  Bytes out;
  out.reserve(16 + m.data().size() * 8);
  out.insert(out.end(), kFeatureMagic.begin(), kFeatureMagic.end());
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  put_u64(out, m.rows());
  for (double v : m.data()) put_f64(out, v);
  return out;
}

Matrix decode_feature_matrix(ByteView bytes) {
  if (bytes.size() < 16 || !std::equal(kFeatureMagic.begin(), kFeatureMagic.end(), bytes.begin()))
    throw Error(Errc::UnsupportedFormat, "missing feature matrix magic");
  const std::size_t cols = get_u32(bytes, 4);
  const std::size_t rows = get_u64(bytes, 8);
  if (cols != 0 && (bytes.size() - 16) / 8 / cols < rows)
    throw Error(Errc::Truncated, "feature matrix body shorter than header declares");
  if (bytes.size() != 16 + rows * cols * 8) throw Error(Errc::BadRecord, "feature matrix size mismatch");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) m.data()[i] = get_f64(bytes, 16 + 8 * i);
  return m;
}

std::string feature_matrix_csv(const Matrix& m) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? "," : "") << "f" << c;
  os << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m(r, c);
    os << '\n';
  }
  return os.str();
}

}  // namespace utxoshard
