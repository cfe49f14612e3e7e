#include "utxoshard/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

namespace utxoshard {

namespace {

constexpr std::array<std::uint8_t, 4> kModelMagic = {'U', 'X', 'E', 'M'};
constexpr std::uint32_t kModelVersion = 1;

// y = x W + b, W stored [in][out]. Zero inputs are skipped; the result is the
// same for a given row no matter which batch it arrives in.
void dense_forward(const double* w, const double* b, const double* x, std::size_t in, std::size_t out, double* y,
                   bool relu) {
  std::copy(b, b + out, y);
  for (std::size_t k = 0; k < in; ++k) {
    const double xk = x[k];
    if (xk == 0.0) continue;
    const double* wk = w + k * out;
    for (std::size_t j = 0; j < out; ++j) y[j] += xk * wk[j];
  }
  if (relu)
    for (std::size_t j = 0; j < out; ++j) y[j] = y[j] > 0.0 ? y[j] : 0.0;
}

void l2_normalize(std::span<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm == 0.0) return;
  for (double& x : v) x /= norm;
}

}  // namespace

void ModelSpec::validate() const {
  if (layers.size() < 2) throw Error(Errc::BadSpec, "model needs at least an input and an output size");
  for (auto s : layers)
    if (s == 0) throw Error(Errc::BadSpec, "layer sizes must be positive");
}

EmbeddingModel::EmbeddingModel(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < spec_.layers.size(); ++l) {
    weight_offsets_.push_back(total);
    total += spec_.layers[l] * spec_.layers[l + 1] + spec_.layers[l + 1];
  }
  params_.assign(total, 0.0);
}

void EmbeddingModel::forward_row(std::span<const double> x, std::vector<std::span<double>> layer_out) const {
  const double* cur = x.data();
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const bool hidden = l + 1 < layer_count();
    dense_forward(params_.data() + weight_offset(l), params_.data() + bias_offset(l), cur, fan_in(l), fan_out(l),
                  layer_out[l].data(), hidden);
    cur = layer_out[l].data();
  }
}

Embedding EmbeddingModel::forward(std::span<const double> x) const {
  if (x.size() != input_dim())
    throw Error(Errc::DimensionMismatch,
                "input of dimension " + std::to_string(x.size()) + ", model expects " + std::to_string(input_dim()));
  std::vector<std::vector<double>> bufs(layer_count());
  std::vector<std::span<double>> views;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    bufs[l].resize(fan_out(l));
    views.emplace_back(bufs[l]);
  }
  forward_row(x, views);
  Embedding e{std::move(bufs.back())};
  if (spec_.normalize_output) l2_normalize(e.h);
  return e;
}

Matrix EmbeddingModel::forward(const Matrix& batch) const { return forward_train(batch).output; }

ForwardPass EmbeddingModel::forward_train(const Matrix& batch) const {
  if (batch.cols() != input_dim() && batch.rows() > 0)
    throw Error(Errc::DimensionMismatch, "batch of width " + std::to_string(batch.cols()) + ", model expects " +
                                             std::to_string(input_dim()));
  ForwardPass pass;
  pass.activations.push_back(batch);
  for (std::size_t l = 0; l < layer_count(); ++l) pass.activations.emplace_back(batch.rows(), fan_out(l));
  std::vector<std::span<double>> views(layer_count());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    for (std::size_t l = 0; l < layer_count(); ++l) views[l] = pass.activations[l + 1].row(r);
    forward_row(batch.row(r), views);
  }
  pass.output = pass.activations.back();
  if (spec_.normalize_output)
    for (std::size_t r = 0; r < pass.output.rows(); ++r) l2_normalize(pass.output.row(r));
  return pass;
}

bool EmbeddingModel::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

EmbeddingModel init_model(const ModelSpec& spec, std::uint64_t seed) {
  EmbeddingModel model(spec);
  std::mt19937_64 rng(seed);
  auto params = model.parameters();
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(model.fan_in(l)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t n = model.fan_in(l) * model.fan_out(l);
    for (std::size_t i = 0; i < n; ++i) params[model.weight_offset(l) + i] = dist(rng);
  }
  model.provenance().seed = seed;
  return model;
}

Gradients backward(const EmbeddingModel& model, const ForwardPass& pass, const Matrix& upstream,
                   bool want_input_grads) {
  const std::size_t rows = pass.output.rows();
  if (upstream.rows() != rows || (rows > 0 && upstream.cols() != model.output_dim()))
    throw Error(Errc::DimensionMismatch, "upstream gradient shape does not match forward pass");
  if (pass.activations.size() != model.layer_count() + 1)
    throw Error(Errc::DimensionMismatch, "forward pass was not produced by this model");

  Gradients grads;
  grads.parameters.assign(model.parameters().size(), 0.0);
  const auto params = model.parameters();

  // Gradient w.r.t. the head's pre-normalization output.
  Matrix delta = upstream;
  if (model.spec().normalize_output) {
    const Matrix& z = pass.activations.back();
    for (std::size_t r = 0; r < rows; ++r) {
      double sq = 0.0;
      for (double v : z.row(r)) sq += v * v;
      const double norm = std::sqrt(sq);
      auto d = delta.row(r);
      if (norm == 0.0) {
        std::fill(d.begin(), d.end(), 0.0);
        continue;
      }
      auto h = pass.output.row(r);
      double dot = 0.0;
      for (std::size_t j = 0; j < d.size(); ++j) dot += h[j] * d[j];
      for (std::size_t j = 0; j < d.size(); ++j) d[j] = (d[j] - h[j] * dot) / norm;
    }
  }

  for (std::size_t li = model.layer_count(); li-- > 0;) {
    const std::size_t in = model.fan_in(li);
    const std::size_t out = model.fan_out(li);
    const Matrix& a_prev = pass.activations[li];
    const Matrix& a_out = pass.activations[li + 1];
    const bool hidden = li + 1 < model.layer_count();

    if (hidden) {
      for (std::size_t r = 0; r < rows; ++r) {
        auto d = delta.row(r);
        auto a = a_out.row(r);
        for (std::size_t j = 0; j < out; ++j)
          if (!(a[j] > 0.0)) d[j] = 0.0;
      }
    }

    double* dw = grads.parameters.data() + model.weight_offset(li);
    double* db = grads.parameters.data() + model.bias_offset(li);
    for (std::size_t r = 0; r < rows; ++r) {
      auto d = delta.row(r);
      auto x = a_prev.row(r);
      for (std::size_t j = 0; j < out; ++j) db[j] += d[j];
      for (std::size_t k = 0; k < in; ++k) {
        const double xk = x[k];
        if (xk == 0.0) continue;
        double* dwk = dw + k * out;
        for (std::size_t j = 0; j < out; ++j) dwk[j] += xk * d[j];
      }
    }

    if (li == 0 && !want_input_grads) break;

    // delta_prev = delta W^T, via a transposed copy so the inner loop is
    // contiguous.
    const double* w = params.data() + model.weight_offset(li);
    std::vector<double> wt(in * out);
    for (std::size_t k = 0; k < in; ++k)
      for (std::size_t j = 0; j < out; ++j) wt[j * in + k] = w[k * out + j];
    Matrix prev(rows, in);
    for (std::size_t r = 0; r < rows; ++r) {
      auto d = delta.row(r);
      auto p = prev.row(r);
      for (std::size_t j = 0; j < out; ++j) {
        const double dj = d[j];
        if (dj == 0.0) continue;
        const double* wj = wt.data() + j * in;
        for (std::size_t k = 0; k < in; ++k) p[k] += dj * wj[k];
      }
    }
    delta = std::move(prev);
  }
  if (want_input_grads) grads.inputs = std::move(delta);
  return grads;
}

Gradients backward(const EmbeddingModel& model, const Matrix& batch, const Matrix& upstream) {
  return backward(model, model.forward_train(batch), upstream, true);
}

double squared_euclidean(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "distance between vectors of different length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double distance_euclidean(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_euclidean(a, b));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(Errc::DimensionMismatch, "cosine between vectors of different length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(Errc::ZeroVector, "cosine similarity of a zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

Bytes save_model(const EmbeddingModel& model) {
  nlohmann::ordered_json header;
  header["kind"] = "embedding_model";
  header["layers"] = model.spec().layers;
  header["activation"] = "relu";
  header["normalize_output"] = model.spec().normalize_output;
  header["seed"] = model.provenance().seed;
  header["vocab_hash"] = model.provenance().vocab_hash;
  header["scaler_hash"] = model.provenance().scaler_hash;
  header["parameters"] = model.parameters().size();
  const std::string text = header.dump();

  Bytes out(kModelMagic.begin(), kModelMagic.end());
  put_u32(out, kModelVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + model.parameters().size() * 8);
  for (double v : model.parameters()) put_f64(out, v);
  return out;
}

EmbeddingModel load_model(ByteView bytes) {
  if (bytes.size() < 12 || !std::equal(kModelMagic.begin(), kModelMagic.end(), bytes.begin()))
    throw Error(Errc::UnsupportedFormat, "not an embedding model file");
  if (get_u32(bytes, 4) != kModelVersion) throw Error(Errc::UnsupportedFormat, "unknown model file version");
  const std::size_t header_len = get_u32(bytes, 8);
  if (12 + header_len > bytes.size()) throw Error(Errc::Truncated, "model header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadRecord, e.what());
  }
  ModelSpec spec{header.at("layers").get<std::vector<std::size_t>>(), header.at("normalize_output").get<bool>()};
  EmbeddingModel model(spec);
  const std::size_t n = header.at("parameters").get<std::size_t>();
  if (n != model.parameters().size()) throw Error(Errc::BadRecord, "parameter count does not match layer sizes");
  const std::size_t body = 12 + header_len;
  if (bytes.size() < body + n * 8) throw Error(Errc::Truncated, "model parameter blob");
  auto params = model.parameters();
  for (std::size_t i = 0; i < n; ++i) params[i] = get_f64(bytes, body + 8 * i);
  model.provenance().seed = header.value("seed", std::uint64_t{0});
  model.provenance().vocab_hash = header.value("vocab_hash", "");
  model.provenance().scaler_hash = header.value("scaler_hash", "");
  if (!model.all_finite()) throw Error(Errc::BadRecord, "model contains non-finite parameters");
  return model;
}

std::string model_hash(const EmbeddingModel& model) { return sha256_hex(save_model(model)); }

}  // namespace utxoshard
