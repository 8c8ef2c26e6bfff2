// SPDX-License-Identifier: Apache-2.0
//
// Pre-processing chain for incoming utterances: peak normalization, RMS
// silence trimming, polyphase sinc resampling and repeat-padding, plus the
// log-mel front end consumed by the LSTM classifiers.
//
// Two prepared forms exist per utterance:
//   - ASR form:  mono, 16-bit, asr_rate (16 kHz)
//   - ID form:   mono, 16-bit, id_rate (8 kHz), repeat-padded to >= 10 s

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <vector>

#include "dynasr/audio.hpp"
#include "dynasr/error.hpp"
#include "dynasr/fft.hpp"
#include "dynasr/mat.hpp"

namespace dynasr {

struct PreprocessConfig {
  double silence_threshold_db = -40.0;  // per-window RMS gate, dBFS
  int silence_window_ms = 20;
  double normalize_peak = 0.95;         // linear fraction of full scale
  double id_min_duration_s = 10.0;
  int asr_rate = 16000;
  int id_rate = 8000;

  void validate() const {
    if (silence_threshold_db >= 0) raise(Err::BadConfig, "silence_threshold_db must be < 0");
    if (silence_window_ms <= 0) raise(Err::BadConfig, "silence_window_ms must be > 0");
    if (normalize_peak <= 0 || normalize_peak > 1.0)
      raise(Err::BadConfig, "normalize_peak must be in (0, 1]");
    if (id_min_duration_s <= 0) raise(Err::BadConfig, "id_min_duration_s must be > 0");
    if (asr_rate <= 0 || id_rate <= 0) raise(Err::BadConfig, "rates must be positive");
  }
};

// Scales so the absolute peak hits `target`; all-zero input passes through.
inline FloatClip peak_normalize(const FloatClip& clip, double target) {
  if (clip.samples.empty()) raise(Err::EmptyAudio, "cannot normalize empty clip");
  float peak = 0.0f;
  for (float s : clip.samples) peak = std::max(peak, std::fabs(s));
  if (peak == 0.0f) return clip;
  FloatClip out = clip;
  const float scale = static_cast<float>(target / peak);
  for (float& s : out.samples) s *= scale;
  return out;
}

// Removes leading and trailing whole windows whose RMS is below the dBFS
// threshold. Windows are laid out from sample 0, so the operation is
// idempotent: a second pass sees the same window grid.
inline FloatClip trim_silence(const FloatClip& clip, const PreprocessConfig& cfg) {
  if (clip.channels != 1) raise(Err::DimensionMismatch, "trim_silence expects mono");
  if (clip.samples.empty()) raise(Err::EmptyAudio, "cannot trim empty clip");
  const size_t n = clip.samples.size();
  const size_t w = std::max<size_t>(
      1, static_cast<size_t>(clip.sample_rate) * cfg.silence_window_ms / 1000);
  const size_t nwin = (n + w - 1) / w;
  const double thr = std::pow(10.0, cfg.silence_threshold_db / 20.0);

  auto window_rms = [&](size_t i) {
    const size_t lo = i * w, hi = std::min(n, (i + 1) * w);
    double acc = 0.0;
    for (size_t k = lo; k < hi; ++k)
      acc += static_cast<double>(clip.samples[k]) * clip.samples[k];
    return std::sqrt(acc / static_cast<double>(hi - lo));
  };

  size_t first = nwin, last = 0;
  for (size_t i = 0; i < nwin; ++i) {
    if (window_rms(i) >= thr) {
      if (first == nwin) first = i;
      last = i;
    }
  }
  if (first == nwin) raise(Err::AudioAllSilent, "every window below threshold");

  FloatClip out;
  out.sample_rate = clip.sample_rate;
  out.channels = 1;
  const size_t lo = first * w, hi = std::min(n, (last + 1) * w);
  out.samples.assign(clip.samples.begin() + lo, clip.samples.begin() + hi);
  return out;
}

namespace detail {

// Zeroth-order modified Bessel function, power series.
inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double half_x = x / 2.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half_x / k) * (half_x / k);
    sum += term;
    if (term < sum * 1e-14) break;
  }
  return sum;
}

inline double sinc(double u) {
  if (u == 0.0) return 1.0;
  const double pu = M_PI * u;
  return std::sin(pu) / pu;
}

}  // namespace detail

// Polyphase windowed-sinc resampler. Kaiser window beta 8.6, 32 sinc zero
// crossings per side, per-phase taps normalized to unit DC gain.
// Output length is round(n * target / source).
inline FloatClip resample(const FloatClip& clip, int target_rate) {
  if (clip.channels != 1) raise(Err::DimensionMismatch, "resample expects mono");
  if (clip.sample_rate <= 0 || target_rate <= 0)
    raise(Err::BadConfig, "rates must be positive");
  if (clip.sample_rate == target_rate) return clip;
  if (clip.samples.empty()) raise(Err::EmptyAudio, "cannot resample empty clip");

  const int source = clip.sample_rate;
  const int g = std::gcd(source, target_rate);
  const int64_t up = target_rate / g;    // L
  const int64_t down = source / g;       // M

  const double ratio = static_cast<double>(target_rate) / source;
  const double fc = 0.5 * std::min(1.0, ratio);  // cycles per input sample
  const double half_width = 32.0 / (2.0 * fc);   // 32 zero crossings per side
  const int tap_reach = static_cast<int>(std::ceil(half_width));
  const double beta = 8.6;
  const double i0_beta = detail::bessel_i0(beta);

  // Phase p serves outputs with fractional input offset p*down/up mod 1.
  std::vector<std::vector<double>> phases(static_cast<size_t>(up));
  for (int64_t p = 0; p < up; ++p) {
    const double frac = static_cast<double>(p * down % up) / static_cast<double>(up);
    auto& taps = phases[static_cast<size_t>(p)];
    taps.resize(2 * tap_reach + 1);
    double sum = 0.0;
    for (int j = -tap_reach; j <= tap_reach; ++j) {
      const double t = j - frac;
      double v = 0.0;
      if (std::fabs(t) <= half_width) {
        const double win_arg = t / half_width;
        const double kaiser =
            detail::bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - win_arg * win_arg))) /
            i0_beta;
        v = 2.0 * fc * detail::sinc(2.0 * fc * t) * kaiser;
      }
      taps[static_cast<size_t>(j + tap_reach)] = v;
      sum += v;
    }
    for (double& v : taps) v /= sum;  // exact DC gain
  }

  const int64_t n = static_cast<int64_t>(clip.samples.size());
  const int64_t out_len = std::llround(static_cast<double>(n) * target_rate / source);
  FloatClip out;
  out.sample_rate = target_rate;
  out.channels = 1;
  out.samples.resize(static_cast<size_t>(out_len));
  for (int64_t i = 0; i < out_len; ++i) {
    const int64_t num = i * down;
    const int64_t base = num / up;                     // integer input index
    const auto& taps = phases[static_cast<size_t>(num % up)];
    double acc = 0.0;
    for (int j = -tap_reach; j <= tap_reach; ++j) {
      const int64_t k = base + j;
      if (k < 0 || k >= n) continue;  // zero-padded edges
      acc += clip.samples[static_cast<size_t>(k)] * taps[static_cast<size_t>(j + tap_reach)];
    }
    out.samples[static_cast<size_t>(i)] = static_cast<float>(acc);
  }
  return out;
}

// Concatenates whole copies of the clip until it spans at least
// min_duration_s. Never truncates: ceil(min_duration_s * rate / len) copies.
inline FloatClip repeat_pad(const FloatClip& clip, double min_duration_s) {
  if (clip.samples.empty()) raise(Err::EmptyAudio, "cannot pad empty clip");
  const size_t n = clip.samples.size();
  const double needed = min_duration_s * clip.sample_rate;
  const size_t copies = std::max<size_t>(
      1, static_cast<size_t>(std::ceil(needed / static_cast<double>(n))));
  if (copies == 1) return clip;
  FloatClip out;
  out.sample_rate = clip.sample_rate;
  out.channels = clip.channels;
  out.samples.reserve(n * copies);
  for (size_t c = 0; c < copies; ++c)
    out.samples.insert(out.samples.end(), clip.samples.begin(), clip.samples.end());
  return out;
}

// Full chain for recognizer input: mono 16-bit at cfg.asr_rate.
inline AudioClip prepare_for_asr(const AudioClip& clip, const PreprocessConfig& cfg) {
  if (clip.samples.empty()) raise(Err::EmptyAudio, "empty clip");
  FloatClip f = to_float(downmix_mono(clip));
  f = peak_normalize(f, cfg.normalize_peak);
  f = trim_silence(f, cfg);
  f = resample(f, cfg.asr_rate);
  return from_float(f);
}

// Full chain for classifier input: mono 16-bit at cfg.id_rate, repeat-padded
// to at least cfg.id_min_duration_s.
inline AudioClip prepare_for_id(const AudioClip& clip, const PreprocessConfig& cfg) {
  if (clip.samples.empty()) raise(Err::EmptyAudio, "empty clip");
  FloatClip f = to_float(downmix_mono(clip));
  f = peak_normalize(f, cfg.normalize_peak);
  f = trim_silence(f, cfg);
  f = resample(f, cfg.id_rate);
  f = repeat_pad(f, cfg.id_min_duration_s);
  return from_float(f);
}

// ---------------------------------------------------------------------------
// Classifier front end: 40-dim log-mel at 8 kHz with per-utterance MVN.
// The descriptor string is stored in weight bundles so a bundle trained for a
// different front end can never be paired with this one.
// ---------------------------------------------------------------------------

inline constexpr const char* kFrontEndDescriptor =
    "logmel:8000hz,win25ms,hop10ms,fft256,mel40,ln,mvn";

struct FeatureMatrix {
  Mat frames;               // T x F
  double frame_hop_ms = 10.0;

  size_t frame_count() const { return frames.rows; }
  size_t feature_dim() const { return frames.cols; }
};

namespace detail {

inline constexpr int kFeatureRate = 8000;
inline constexpr size_t kWinSamples = 200;   // 25 ms at 8 kHz
inline constexpr size_t kHopSamples = 80;    // 10 ms at 8 kHz
inline constexpr size_t kFftSize = 256;
inline constexpr size_t kNumMels = 40;
inline constexpr double kMelHighHz = 4000.0;
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kVarFloor = 1e-8;

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// 40 triangular filters over bins 0..128, built once.
inline const std::vector<std::vector<double>>& mel_filterbank() {
  static const std::vector<std::vector<double>> bank = [] {
    const size_t bins = kFftSize / 2 + 1;
    const double mel_lo = hz_to_mel(0.0), mel_hi = hz_to_mel(kMelHighHz);
    std::vector<double> centers_hz(kNumMels + 2);
    for (size_t i = 0; i < kNumMels + 2; ++i)
      centers_hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (kNumMels + 1));
    std::vector<std::vector<double>> fb(kNumMels, std::vector<double>(bins, 0.0));
    for (size_t m = 0; m < kNumMels; ++m) {
      const double lo = centers_hz[m], mid = centers_hz[m + 1], hi = centers_hz[m + 2];
      for (size_t k = 0; k < bins; ++k) {
        const double f = static_cast<double>(k) * kFeatureRate / kFftSize;
        if (f <= lo || f >= hi) continue;
        fb[m][k] = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      }
    }
    return fb;
  }();
  return bank;
}

inline const std::vector<double>& hann_window() {
  static const std::vector<double> win = [] {
    std::vector<double> w(kWinSamples);
    for (size_t i = 0; i < kWinSamples; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (kWinSamples - 1));
    return w;
  }();
  return win;
}

}  // namespace detail

// 25 ms Hann frames, 10 ms hop, 256-point FFT, 40 mel filters to 4 kHz,
// natural log, then per-coefficient mean/variance normalization.
inline FeatureMatrix log_mel_features(const AudioClip& clip) {
  using namespace detail;
  if (clip.channels != 1) raise(Err::DimensionMismatch, "features expect mono input");
  if (clip.sample_rate != kFeatureRate)
    raise(Err::DimensionMismatch,
          "features expect " + std::to_string(kFeatureRate) + " Hz input, got " +
              std::to_string(clip.sample_rate));
  const size_t n = clip.samples.size();
  if (n < kWinSamples)
    raise(Err::ClipTooShort, "need at least " + std::to_string(kWinSamples) + " samples");

  const size_t T = (n - kWinSamples) / kHopSamples + 1;
  const auto& win = hann_window();
  const auto& bank = mel_filterbank();
  const size_t bins = kFftSize / 2 + 1;

  FeatureMatrix feats;
  feats.frame_hop_ms = 1000.0 * kHopSamples / kFeatureRate;
  feats.frames = Mat(T, kNumMels);

  std::vector<std::complex<double>> buf(kFftSize);
  std::vector<double> power(bins);
  for (size_t t = 0; t < T; ++t) {
    const size_t off = t * kHopSamples;
    for (size_t i = 0; i < kWinSamples; ++i)
      buf[i] = {clip.samples[off + i] / 32768.0 * win[i], 0.0};
    std::fill(buf.begin() + kWinSamples, buf.end(), std::complex<double>(0.0, 0.0));
    fft_inplace(buf);
    for (size_t k = 0; k < bins; ++k) power[k] = std::norm(buf[k]);
    float* row = feats.frames.row(t);
    for (size_t m = 0; m < kNumMels; ++m) {
      double e = 0.0;
      const auto& filt = bank[m];
      for (size_t k = 0; k < bins; ++k) e += filt[k] * power[k];
      row[m] = static_cast<float>(std::log(std::max(e, kLogFloor)));
    }
  }

  // per-utterance MVN, one mean/variance per coefficient
  for (size_t m = 0; m < kNumMels; ++m) {
    double mean = 0.0;
    for (size_t t = 0; t < T; ++t) mean += feats.frames.at(t, m);
    mean /= static_cast<double>(T);
    double var = 0.0;
    for (size_t t = 0; t < T; ++t) {
      const double d = feats.frames.at(t, m) - mean;
      var += d * d;
    }
    var /= static_cast<double>(T);
    const double inv_std = 1.0 / std::sqrt(std::max(var, kVarFloor));
    for (size_t t = 0; t < T; ++t)
      feats.frames.at(t, m) =
          static_cast<float>((feats.frames.at(t, m) - mean) * inv_std);
  }
  return feats;
}

}  // namespace dynasr
