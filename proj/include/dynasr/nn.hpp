// SPDX-License-Identifier: Apache-2.0
//
// Forward-only runtime for the identification classifiers: stacked LSTM
// layers with inference-mode batch normalization, mean pooling over time and
// a dense softmax head.
//
// Weight bundle layout (directory):
//   manifest.json  metadata, label list, front-end descriptor and a tensor
//                  table of {name, shape, byte_offset, byte_length}
//   weights.bin    concatenated row-major little-endian float32 data
//
// Tensor template for L layers, hidden size H, feature dim F, C classes
// (gate packing in the 4H dimension is i, f, g, o; initial states are zero):
//   W_ih_l<k>  [4H, D]   D = F for k == 0, else H
//   W_hh_l<k>  [4H, H]
//   b_ih_l<k>  [4H]
//   b_hh_l<k>  [4H]
//   bn_l<k>_gamma|beta|mean|var  [H]
//   fc_weight  [C, H]
//   fc_bias    [C]

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynasr/dsp.hpp"
#include "dynasr/error.hpp"
#include "dynasr/mat.hpp"

namespace dynasr {

struct ClassScores {
  std::vector<std::string> labels;
  std::vector<double> probs;
  int argmax_index = 0;
  double confidence = 0.0;

  const std::string& argmax_label() const { return labels[argmax_index]; }
};

struct Tensor {
  std::vector<size_t> shape;
  std::vector<float> data;

  size_t elements() const {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
  }
};

struct WeightSet {
  int feature_dim = 0;
  int hidden_size = 0;
  int num_layers = 0;
  std::vector<std::string> labels;
  std::string front_end;
  std::map<std::string, Tensor> tensors;

  const Tensor& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) raise(Err::TensorShapeMismatch, "missing tensor " + name);
    return it->second;
  }
};

namespace nn_detail {

inline std::map<std::string, std::vector<size_t>> expected_tensors(int F, int H, int L,
                                                                   int C) {
  std::map<std::string, std::vector<size_t>> spec;
  const size_t h = static_cast<size_t>(H), g = 4 * h;
  for (int l = 0; l < L; ++l) {
    const size_t d = l == 0 ? static_cast<size_t>(F) : h;
    const std::string suf = "_l" + std::to_string(l);
    spec["W_ih" + suf] = {g, d};
    spec["W_hh" + suf] = {g, h};
    spec["b_ih" + suf] = {g};
    spec["b_hh" + suf] = {g};
    spec["bn" + suf + "_gamma"] = {h};
    spec["bn" + suf + "_beta"] = {h};
    spec["bn" + suf + "_mean"] = {h};
    spec["bn" + suf + "_var"] = {h};
  }
  spec["fc_weight"] = {static_cast<size_t>(C), h};
  spec["fc_bias"] = {static_cast<size_t>(C)};
  return spec;
}

inline std::string shape_str(const std::vector<size_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i)
    out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

}  // namespace nn_detail

// Checks every tensor against the architecture template: exact name set,
// exact shapes, finite values, non-negative running variances.
inline void validate_weight_set(const WeightSet& ws) {
  if (ws.feature_dim <= 0 || ws.hidden_size <= 0 || ws.num_layers <= 0)
    raise(Err::BadManifest, "feature_dim, hidden_size and num_layers must be positive");
  if (ws.labels.size() < 2) raise(Err::BadManifest, "need at least two labels");
  auto expected = nn_detail::expected_tensors(ws.feature_dim, ws.hidden_size,
                                              ws.num_layers,
                                              static_cast<int>(ws.labels.size()));
  for (const auto& [name, shape] : expected) {
    auto it = ws.tensors.find(name);
    if (it == ws.tensors.end())
      raise(Err::TensorShapeMismatch, "missing tensor " + name);
    if (it->second.shape != shape)
      raise(Err::TensorShapeMismatch,
            name + " has shape " + nn_detail::shape_str(it->second.shape) +
                ", expected " + nn_detail::shape_str(shape));
    if (it->second.data.size() != it->second.elements())
      raise(Err::TensorShapeMismatch, name + " data size does not match shape");
  }
  for (const auto& [name, tensor] : ws.tensors) {
    if (!expected.count(name))
      raise(Err::TensorShapeMismatch, "unexpected tensor " + name);
    for (float v : tensor.data)
      if (!std::isfinite(v)) raise(Err::NonFiniteWeight, "non-finite value in " + name);
  }
  for (int l = 0; l < ws.num_layers; ++l) {
    for (float v : ws.at("bn_l" + std::to_string(l) + "_var").data)
      if (v < 0.0f) raise(Err::BadManifest, "negative running variance in layer " +
                                                std::to_string(l));
  }
}

// Loads and validates a weight bundle directory.
inline WeightSet load_weights(const std::filesystem::path& bundle_dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = bundle_dir / "manifest.json";
  std::ifstream mf(manifest_path, std::ios::binary);
  if (!mf) raise(Err::ManifestMissing, manifest_path.string());

  nlohmann::json doc;
  try {
    mf >> doc;
  } catch (const nlohmann::json::exception& e) {
    raise(Err::BadManifest, std::string("manifest parse error: ") + e.what());
  }

  WeightSet ws;
  try {
    ws.feature_dim = doc.at("feature_dim").get<int>();
    ws.hidden_size = doc.at("hidden_size").get<int>();
    ws.num_layers = doc.at("num_layers").get<int>();
    ws.labels = doc.at("labels").get<std::vector<std::string>>();
    ws.front_end = doc.at("front_end").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    raise(Err::BadManifest, std::string("manifest field error: ") + e.what());
  }

  const fs::path blob_path = bundle_dir / "weights.bin";
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) raise(Err::ManifestMissing, blob_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(blob)),
                          std::istreambuf_iterator<char>());

  if (!doc.contains("tensors") || !doc["tensors"].is_array())
    raise(Err::BadManifest, "manifest has no tensor table");
  for (const auto& entry : doc["tensors"]) {
    std::string name;
    Tensor t;
    uint64_t off = 0, len = 0;
    try {
      name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<std::vector<size_t>>();
      off = entry.at("byte_offset").get<uint64_t>();
      len = entry.at("byte_length").get<uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      raise(Err::BadManifest, std::string("tensor table entry: ") + e.what());
    }
    if (off + len > bytes.size())
      raise(Err::BadManifest, "tensor " + name + " extends past end of weights.bin");
    if (len != t.elements() * sizeof(float))
      raise(Err::TensorShapeMismatch, "tensor " + name + " byte length does not match shape");
    t.data.resize(t.elements());
    std::memcpy(t.data.data(), bytes.data() + off, len);
    ws.tensors.emplace(std::move(name), std::move(t));
  }

  validate_weight_set(ws);
  return ws;
}

// Writes a bundle in the exact layout load_weights reads. Tensors are laid
// out in map order; offsets are recomputed here.
inline void save_weights(const std::filesystem::path& bundle_dir, const WeightSet& ws) {
  namespace fs = std::filesystem;
  fs::create_directories(bundle_dir);
  nlohmann::ordered_json doc;
  doc["format"] = "dynasr-weights-v1";
  doc["feature_dim"] = ws.feature_dim;
  doc["hidden_size"] = ws.hidden_size;
  doc["num_layers"] = ws.num_layers;
  doc["labels"] = ws.labels;
  doc["front_end"] = ws.front_end;
  doc["tensors"] = nlohmann::ordered_json::array();

  std::ofstream blob(bundle_dir / "weights.bin", std::ios::binary | std::ios::trunc);
  if (!blob) raise(Err::IoFailure, (bundle_dir / "weights.bin").string());
  uint64_t offset = 0;
  for (const auto& [name, tensor] : ws.tensors) {
    const uint64_t len = tensor.data.size() * sizeof(float);
    doc["tensors"].push_back({{"name", name},
                              {"shape", tensor.shape},
                              {"byte_offset", offset},
                              {"byte_length", len}});
    blob.write(reinterpret_cast<const char*>(tensor.data.data()),
               static_cast<std::streamsize>(len));
    offset += len;
  }
  blob.close();

  std::ofstream mf(bundle_dir / "manifest.json", std::ios::trunc);
  if (!mf) raise(Err::IoFailure, (bundle_dir / "manifest.json").string());
  mf << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Forward passes
// ---------------------------------------------------------------------------

struct LstmLayer {
  const Tensor* w_ih;  // [4H, D]
  const Tensor* w_hh;  // [4H, H]
  const Tensor* b_ih;  // [4H]
  const Tensor* b_hh;  // [4H]

  size_t input_dim() const { return w_ih->shape[1]; }
  size_t hidden() const { return w_hh->shape[1]; }
};

inline LstmLayer lstm_layer(const WeightSet& ws, int layer) {
  const std::string suf = "_l" + std::to_string(layer);
  return {&ws.at("W_ih" + suf), &ws.at("W_hh" + suf), &ws.at("b_ih" + suf),
          &ws.at("b_hh" + suf)};
}

inline float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

// Standard LSTM recurrence over a T x D input, zero initial states.
// Gate packing in the 4H dimension: i, f, g, o. Returns all hidden states.
inline Mat lstm_forward(const LstmLayer& layer, const Mat& x) {
  const size_t D = layer.input_dim(), H = layer.hidden(), G = 4 * H;
  if (x.cols != D)
    raise(Err::DimensionMismatch, "lstm input dim " + std::to_string(x.cols) +
                                      ", layer expects " + std::to_string(D));
  if (layer.w_hh->shape[0] != G || layer.b_ih->shape[0] != G ||
      layer.b_hh->shape[0] != G)
    raise(Err::DimensionMismatch, "inconsistent gate dimension");

  const float* wih = layer.w_ih->data.data();
  const float* whh = layer.w_hh->data.data();
  const float* bih = layer.b_ih->data.data();
  const float* bhh = layer.b_hh->data.data();

  Mat out(x.rows, H);
  std::vector<float> h(H, 0.0f), c(H, 0.0f), gates(G);
  for (size_t t = 0; t < x.rows; ++t) {
    const float* xt = x.row(t);
    for (size_t g = 0; g < G; ++g) {
      const float* wi = wih + g * D;
      const float* wh = whh + g * H;
      float acc_x = 0.0f, acc_h = 0.0f;
      for (size_t k = 0; k < D; ++k) acc_x += wi[k] * xt[k];
      for (size_t k = 0; k < H; ++k) acc_h += wh[k] * h[k];
      gates[g] = acc_x + acc_h + bih[g] + bhh[g];
    }
    float* ht = out.row(t);
    for (size_t j = 0; j < H; ++j) {
      const float gi = sigmoidf(gates[j]);
      const float gf = sigmoidf(gates[H + j]);
      const float gg = std::tanh(gates[2 * H + j]);
      const float go = sigmoidf(gates[3 * H + j]);
      c[j] = gf * c[j] + gi * gg;
      h[j] = go * std::tanh(c[j]);
      ht[j] = h[j];
    }
  }
  return out;
}

// Inference-mode batch normalization using stored running statistics,
// applied per feature at every timestep.
inline void batch_norm_seq(Mat& x, const Tensor& gamma, const Tensor& beta,
                           const Tensor& mean, const Tensor& var,
                           float eps = 1e-5f) {
  const size_t H = x.cols;
  if (gamma.data.size() != H || beta.data.size() != H || mean.data.size() != H ||
      var.data.size() != H)
    raise(Err::DimensionMismatch, "batch norm stats dim != feature dim");
  std::vector<float> scale(H), shift(H);
  for (size_t j = 0; j < H; ++j) {
    if (var.data[j] < 0.0f) raise(Err::DimensionMismatch, "negative running variance");
    scale[j] = gamma.data[j] / std::sqrt(var.data[j] + eps);
    shift[j] = beta.data[j] - mean.data[j] * scale[j];
  }
  for (size_t t = 0; t < x.rows; ++t) {
    float* row = x.row(t);
    for (size_t j = 0; j < H; ++j) row[j] = row[j] * scale[j] + shift[j];
  }
}

// Numerically stable softmax in double precision.
inline std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> probs(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

// Full classifier: L x (LSTM -> batch norm), mean pooling over time, dense
// head, softmax. Deterministic; ties in the argmax go to the smallest index.
inline ClassScores classify(const WeightSet& ws, const FeatureMatrix& features) {
  if (features.feature_dim() != static_cast<size_t>(ws.feature_dim))
    raise(Err::DimensionMismatch,
          "feature dim " + std::to_string(features.feature_dim()) +
              ", weights expect " + std::to_string(ws.feature_dim));
  if (features.frame_count() == 0) raise(Err::ClipTooShort, "no feature frames");

  Mat x = features.frames;
  for (int l = 0; l < ws.num_layers; ++l) {
    x = lstm_forward(lstm_layer(ws, l), x);
    const std::string suf = "_l" + std::to_string(l);
    batch_norm_seq(x, ws.at("bn" + suf + "_gamma"), ws.at("bn" + suf + "_beta"),
                   ws.at("bn" + suf + "_mean"), ws.at("bn" + suf + "_var"));
  }

  const size_t H = x.cols, T = x.rows;
  std::vector<double> pooled(H, 0.0);
  for (size_t t = 0; t < T; ++t) {
    const float* row = x.row(t);
    for (size_t j = 0; j < H; ++j) pooled[j] += row[j];
  }
  for (double& v : pooled) v /= static_cast<double>(T);

  const Tensor& fw = ws.at("fc_weight");
  const Tensor& fb = ws.at("fc_bias");
  const size_t C = fb.data.size();
  std::vector<double> logits(C);
  for (size_t c = 0; c < C; ++c) {
    double acc = fb.data[c];
    const float* w = fw.data.data() + c * H;
    for (size_t j = 0; j < H; ++j) acc += w[j] * pooled[j];
    logits[c] = acc;
  }

  ClassScores scores;
  scores.labels = ws.labels;
  scores.probs = softmax(logits);
  scores.argmax_index = 0;
  for (size_t c = 1; c < C; ++c)
    if (scores.probs[c] > scores.probs[scores.argmax_index])
      scores.argmax_index = static_cast<int>(c);
  scores.confidence = scores.probs[scores.argmax_index];
  return scores;
}

}  // namespace dynasr
