// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures for the test suites: temp directories, hand-built WAV
// bytes (independent of the library encoder), synthetic clips, stub weight
// bundles and the naive scalar LSTM reference.

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "dynasr/audio.hpp"
#include "dynasr/dsp.hpp"
#include "dynasr/mat.hpp"
#include "dynasr/nn.hpp"

namespace testutil {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "dynasr") {
    auto base = std::filesystem::temp_directory_path();
    std::mt19937_64 rng(std::random_device{}());
    for (int i = 0; i < 64; ++i) {
      auto candidate = base / (tag + "-" + std::to_string(rng() % 100000000));
      if (std::filesystem::create_directory(candidate)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("could not create temp dir");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

// ---------------------------------------------------------------------------
// Raw WAV construction, byte by byte from the RIFF layout.
// ---------------------------------------------------------------------------

inline void put_u16(std::vector<uint8_t>& v, uint16_t x) {
  v.push_back(x & 0xff);
  v.push_back(x >> 8);
}
inline void put_u32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(x & 0xff);
  v.push_back((x >> 8) & 0xff);
  v.push_back((x >> 16) & 0xff);
  v.push_back((x >> 24) & 0xff);
}

inline std::vector<uint8_t> raw_wav(const std::vector<int16_t>& samples,
                                    uint32_t rate, uint16_t channels,
                                    uint16_t format_code = 1) {
  std::vector<uint8_t> b;
  const uint32_t data_len = static_cast<uint32_t>(samples.size() * 2);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put_u32(b, 36 + data_len);
  b.insert(b.end(), {'W', 'A', 'V', 'E'});
  b.insert(b.end(), {'f', 'm', 't', ' '});
  put_u32(b, 16);
  put_u16(b, format_code);
  put_u16(b, channels);
  put_u32(b, rate);
  put_u32(b, rate * channels * 2);
  put_u16(b, channels * 2);
  put_u16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put_u32(b, data_len);
  for (int16_t s : samples) put_u16(b, static_cast<uint16_t>(s));
  return b;
}

// ---------------------------------------------------------------------------
// Synthetic clips
// ---------------------------------------------------------------------------

inline dynasr::FloatClip sine_clip(double freq_hz, int rate, double seconds,
                                   double amplitude = 0.5) {
  dynasr::FloatClip c;
  c.sample_rate = rate;
  c.channels = 1;
  const size_t n = static_cast<size_t>(seconds * rate);
  c.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    c.samples[i] =
        static_cast<float>(amplitude * std::sin(2.0 * M_PI * freq_hz * i / rate));
  return c;
}

// deterministic speech-ish signal: a few sines plus noise, nonzero everywhere
inline dynasr::AudioClip speechy_clip(int rate, double seconds, uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  dynasr::AudioClip c;
  c.sample_rate = rate;
  c.channels = 1;
  const size_t n = static_cast<size_t>(seconds * rate);
  c.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    double v = 0.35 * std::sin(2 * M_PI * 220 * t) + 0.2 * std::sin(2 * M_PI * 465 * t) +
               0.12 * std::sin(2 * M_PI * 910 * t) + jitter(rng);
    c.samples[i] = static_cast<int16_t>(std::llround(v * 20000.0));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Stub weight sets
// ---------------------------------------------------------------------------

// All-zero weight set; optionally a dense bias to force a particular argmax.
inline dynasr::WeightSet zero_weights(int F, int H, int L,
                                      std::vector<std::string> labels,
                                      std::vector<float> dense_bias = {}) {
  dynasr::WeightSet ws;
  ws.feature_dim = F;
  ws.hidden_size = H;
  ws.num_layers = L;
  ws.labels = std::move(labels);
  ws.front_end = dynasr::kFrontEndDescriptor;
  const size_t h = H, g = 4 * h, C = ws.labels.size();
  for (int l = 0; l < L; ++l) {
    const size_t d = l == 0 ? static_cast<size_t>(F) : h;
    const std::string suf = "_l" + std::to_string(l);
    ws.tensors["W_ih" + suf] = {{g, d}, std::vector<float>(g * d, 0.0f)};
    ws.tensors["W_hh" + suf] = {{g, h}, std::vector<float>(g * h, 0.0f)};
    ws.tensors["b_ih" + suf] = {{g}, std::vector<float>(g, 0.0f)};
    ws.tensors["b_hh" + suf] = {{g}, std::vector<float>(g, 0.0f)};
    ws.tensors["bn" + suf + "_gamma"] = {{h}, std::vector<float>(h, 1.0f)};
    ws.tensors["bn" + suf + "_beta"] = {{h}, std::vector<float>(h, 0.0f)};
    ws.tensors["bn" + suf + "_mean"] = {{h}, std::vector<float>(h, 0.0f)};
    ws.tensors["bn" + suf + "_var"] = {{h}, std::vector<float>(h, 1.0f)};
  }
  ws.tensors["fc_weight"] = {{C, h}, std::vector<float>(C * h, 0.0f)};
  if (dense_bias.empty()) dense_bias.assign(C, 0.0f);
  ws.tensors["fc_bias"] = {{C}, dense_bias};
  return ws;
}

// Random small weights; produces non-degenerate but deterministic scores.
inline dynasr::WeightSet random_weights(int F, int H, int L,
                                        std::vector<std::string> labels,
                                        uint64_t seed, float scale = 0.08f) {
  dynasr::WeightSet ws = zero_weights(F, H, L, std::move(labels));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-scale, scale);
  for (auto& [name, tensor] : ws.tensors) {
    if (name.rfind("bn", 0) == 0) continue;  // keep identity batch norm stats
    for (float& v : tensor.data) v = dist(rng);
  }
  return ws;
}

// ---------------------------------------------------------------------------
// Naive per-scalar LSTM reference (independent of the library implementation)
// ---------------------------------------------------------------------------

struct NaiveLstmWeights {
  int D = 0, H = 0;
  // [4H][D] and [4H][H], gate order i, f, g, o
  std::vector<std::vector<double>> w_ih, w_hh;
  std::vector<double> b_ih, b_hh;
};

inline std::vector<std::vector<double>> naive_lstm(const NaiveLstmWeights& w,
                                                   const std::vector<std::vector<double>>& x) {
  const int D = w.D, H = w.H;
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> h(H, 0.0), c(H, 0.0);
  std::vector<std::vector<double>> out;
  for (const auto& xt : x) {
    std::vector<double> gates(4 * H, 0.0);
    for (int g = 0; g < 4 * H; ++g) {
      double acc = w.b_ih[g] + w.b_hh[g];
      for (int k = 0; k < D; ++k) acc += w.w_ih[g][k] * xt[k];
      for (int k = 0; k < H; ++k) acc += w.w_hh[g][k] * h[k];
      gates[g] = acc;
    }
    std::vector<double> hn(H);
    for (int j = 0; j < H; ++j) {
      const double gi = sigmoid(gates[j]);
      const double gf = sigmoid(gates[H + j]);
      const double gg = std::tanh(gates[2 * H + j]);
      const double go = sigmoid(gates[3 * H + j]);
      c[j] = gf * c[j] + gi * gg;
      hn[j] = go * std::tanh(c[j]);
    }
    h = hn;
    out.push_back(h);
  }
  return out;
}

}  // namespace testutil
