#pragma once

// Multi-layer perceptron encoder mapping feature vectors to embeddings.
// ReLU on hidden layers, linear head, optional L2 normalization of the
// output. All arithmetic is float64; every row is computed by the same
// kernel so batched and one-at-a-time calls agree bit for bit.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "utxoshard/common.hpp"

namespace utxoshard {

struct ModelSpec {
  // Input dimension first, embedding dimension last.
  std::vector<std::size_t> layers;
  bool normalize_output = false;

  static ModelSpec defaults(std::size_t input_dim) { return {{input_dim, 256, 128, 32}, false}; }
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

struct Embedding {
  std::vector<double> h;
  std::size_t dimension() const { return h.size(); }
};

// Provenance carried in the model file header.
struct ModelProvenance {
  std::uint64_t seed = 0;
  std::string vocab_hash;
  std::string scaler_hash;
  bool operator==(const ModelProvenance&) const = default;
};

class EmbeddingModel;

// Activations kept from a training forward pass.
struct ForwardPass {
  // activations[0] is the input batch; activations[l + 1] is the output of
  // layer l (post-ReLU for hidden layers, pre-normalization for the head).
  std::vector<Matrix> activations;
  // Final embeddings (normalized when the model normalizes).
  Matrix output;
};

struct Gradients {
  // Same flat layout as EmbeddingModel::parameters().
  std::vector<double> parameters;
  // d(loss)/d(input), one row per batch row.
  Matrix inputs;
};

class EmbeddingModel {
 public:
  EmbeddingModel() = default;
  explicit EmbeddingModel(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  std::size_t input_dim() const { return spec_.layers.front(); }
  std::size_t output_dim() const { return spec_.layers.back(); }
  std::size_t layer_count() const { return spec_.layers.size() - 1; }

  // Flat parameter vector: for each layer, weights [in][out] row-major,
  // then biases [out].
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t weight_offset(std::size_t layer) const { return weight_offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const { return weight_offsets_[layer] + fan_in(layer) * fan_out(layer); }
  std::size_t fan_in(std::size_t layer) const { return spec_.layers[layer]; }
  std::size_t fan_out(std::size_t layer) const { return spec_.layers[layer + 1]; }

  ModelProvenance& provenance() { return provenance_; }
  const ModelProvenance& provenance() const { return provenance_; }

  Embedding forward(std::span<const double> x) const;
  Matrix forward(const Matrix& batch) const;
  ForwardPass forward_train(const Matrix& batch) const;

  bool all_finite() const;
  bool operator==(const EmbeddingModel&) const = default;

 private:
  void forward_row(std::span<const double> x, std::vector<std::span<double>> layer_out) const;

  ModelSpec spec_;
  std::vector<std::size_t> weight_offsets_;
  std::vector<double> params_;
  ModelProvenance provenance_;
};

// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
EmbeddingModel init_model(const ModelSpec& spec, std::uint64_t seed);

Gradients backward(const EmbeddingModel& model, const ForwardPass& pass, const Matrix& upstream,
                   bool want_input_grads = true);
Gradients backward(const EmbeddingModel& model, const Matrix& batch, const Matrix& upstream);

double distance_euclidean(std::span<const double> a, std::span<const double> b);
double squared_euclidean(std::span<const double> a, std::span<const double> b);
// Throws ZeroVector when either operand has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
inline double distance_cosine(std::span<const double> a, std::span<const double> b) {
  return 1.0 - cosine_similarity(a, b);
}

// Model file: [magic "UXEM"][u32 version][u32 header length][JSON header]
// [float64 little-endian parameters].
Bytes save_model(const EmbeddingModel& model);
EmbeddingModel load_model(ByteView bytes);
// Hash of the serialized model.
std::string model_hash(const EmbeddingModel& model);

}  // namespace utxoshard
