#pragma once

// Per-outpoint feature vectors. Layout, in order:
//
//   global (20)      n_inputs, n_outputs, sum_outputs,
//                    max, min, mean, mode, median, std of output amounts,
//                    total script bytes, top-5 unlocking encodings (5),
//                    top-5 locking encodings (5)
//   bag (V+1)        opcode presence bits for the locking script, "Other" last
//   local (2)        locking script size, amount
//   positional (10)  sinusoidal encoding of the output index
//
// With the default V = 75 this is 108 dimensions.

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "utxoshard/common.hpp"
#include "utxoshard/txcodec.hpp"

namespace utxoshard {

inline constexpr std::size_t kGlobalFeatures = 20;
inline constexpr std::size_t kPositionalFeatures = 10;
inline constexpr std::size_t kTopScripts = 5;
inline constexpr std::size_t kDefaultVocabularySize = 75;

class OpCodeVocabulary {
 public:
  OpCodeVocabulary() = default;
  // Fixed vocabulary in the given index order; counts are zero.
  static OpCodeVocabulary from_entries(std::vector<std::uint8_t> entries, std::string corpus_id = "manual");

  const std::vector<std::uint8_t>& entries() const { return entries_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::uint64_t other_count() const { return other_count_; }
  const std::string& corpus_id() const { return corpus_id_; }

  // Bag width: entries plus the trailing "Other" slot.
  std::size_t bag_size() const { return entries_.size() + 1; }
  std::size_t other_index() const { return entries_.size(); }
  std::optional<std::size_t> index_of(std::uint8_t code) const;

  std::string to_json() const;
  static OpCodeVocabulary from_json(std::string_view text);
  // Content hash over entries (order-sensitive); identifies feature layouts.
  std::string hash() const;

 private:
  friend class VocabularyBuilder;
  void rebuild_lookup();

  std::vector<std::uint8_t> entries_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t other_count_ = 0;
  std::string corpus_id_;
  std::array<std::int16_t, 256> lookup_{};
};

// Streaming opcode frequency count over locking scripts.
class VocabularyBuilder {
 public:
  void add(const RawTransaction& tx);
  void add_script(ByteView locking_script);
  std::size_t scripts_seen() const { return scripts_; }
  // Top-`size` opcodes by occurrence count, ties by ascending byte value.
  // Opcodes never seen are not included. Throws EmptyCorpus.
  OpCodeVocabulary build(std::size_t size, std::string corpus_id = "") const;

 private:
  std::array<std::uint64_t, 256> counts_{};
  std::size_t scripts_ = 0;
};

OpCodeVocabulary build_vocabulary(const std::vector<RawTransaction>& txs,
                                  std::size_t size = kDefaultVocabularySize, std::string corpus_id = "");

std::vector<double> bag_of_opcodes(ByteView locking_script, const OpCodeVocabulary& vocab);

// 0 absent, 1 present and not P2PKH, 2 present and P2PKH.
std::array<double, kTopScripts> top_unlocking_encoding(const RawTransaction& tx);
std::array<double, kTopScripts> top_locking_encoding(const RawTransaction& tx);

std::array<double, kGlobalFeatures> global_features(const RawTransaction& tx);

std::array<double, kPositionalFeatures> positional_encoding(std::uint32_t position);

struct FeatureLayout {
  std::size_t bag_size = kDefaultVocabularySize + 1;

  std::size_t global_offset() const { return 0; }
  std::size_t bag_offset() const { return kGlobalFeatures; }
  std::size_t script_size_offset() const { return kGlobalFeatures + bag_size; }
  std::size_t amount_offset() const { return script_size_offset() + 1; }
  std::size_t positional_offset() const { return amount_offset() + 1; }
  std::size_t dimension() const { return positional_offset() + kPositionalFeatures; }

  // Dimensions holding satoshi amounts or byte counts (log1p candidates).
  std::vector<std::size_t> magnitude_dimensions() const;
};

struct FeatureVector {
  std::vector<double> values;

  std::size_t dimension() const { return values.size(); }
  bool operator==(const FeatureVector&) const = default;
};

class FeatureScaler {
 public:
  FeatureScaler() = default;
  static FeatureScaler identity(std::size_t dimension);

  std::size_t dimension() const { return shift_.size(); }
  const std::vector<double>& shift() const { return shift_; }
  const std::vector<double>& scale() const { return scale_; }
  const std::vector<bool>& log1p_mask() const { return log1p_; }
  const std::string& fitted_on() const { return fitted_on_; }

  void transform(std::span<double> values) const;
  void inverse(std::span<double> values) const;

  std::string to_json() const;
  static FeatureScaler from_json(std::string_view text);
  std::string hash() const;

 private:
  friend FeatureScaler fit_scaler(const Matrix&, const FeatureLayout&, std::string);
  std::vector<double> shift_;
  std::vector<double> scale_;
  std::vector<bool> log1p_;
  std::string fitted_on_;
};

// log1p on magnitude dimensions, then per-dimension z-score. Dimensions with
// std < 1e-12 keep scale 1. Throws EmptyStream on an empty matrix.
FeatureScaler fit_scaler(const Matrix& raw_features, const FeatureLayout& layout, std::string dataset_id = "");

// Reads only `tx`; there is deliberately no way to reach other transactions.
FeatureVector featurize_outpoint(const RawTransaction& tx, std::uint32_t vout, const OpCodeVocabulary& vocab,
                                 const FeatureScaler* scaler = nullptr);

// Features for every output of `tx` appended as rows of `out`.
void featurize_transaction(const RawTransaction& tx, const OpCodeVocabulary& vocab, const FeatureScaler* scaler,
                           Matrix& out);

// Feature rows for every outpoint of a transaction set, addressable by
// outpoint.
class FeatureTable {
 public:
  FeatureTable() = default;
  FeatureTable(Matrix rows, std::vector<TxOutpoint> outpoints);

  static FeatureTable build(const std::vector<RawTransaction>& txs, const OpCodeVocabulary& vocab,
                            const FeatureScaler* scaler = nullptr);

  std::optional<std::size_t> row_of(const TxOutpoint& outpoint) const;
  const Matrix& matrix() const { return rows_; }
  const std::vector<TxOutpoint>& outpoints() const { return outpoints_; }
  std::size_t size() const { return outpoints_.size(); }
  std::size_t dimension() const { return rows_.cols(); }

 private:
  Matrix rows_;
  std::vector<TxOutpoint> outpoints_;
  std::unordered_map<TxOutpoint, std::size_t, TxOutpointHasher> index_;
};

// ---------------------------------------------------------------------------
// Feature matrix files
//
// Binary: 16-byte header [magic "UXFM"][u32 dimension][u64 rows] then
// rows * dimension little-endian float64 values, row-major.

inline constexpr std::array<std::uint8_t, 4> kFeatureMagic = {'U', 'X', 'F', 'M'};

Bytes encode_feature_matrix(const Matrix& m);
Matrix decode_feature_matrix(ByteView bytes);
std::string feature_matrix_csv(const Matrix& m);

}  // namespace utxoshard
