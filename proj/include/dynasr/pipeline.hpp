// SPDX-License-Identifier: Apache-2.0
//
// End-to-end per-utterance flow:
//   decode -> prepare for ID -> language ID -> accent ID -> resolve key ->
//   acquire model -> prepare for ASR -> decode speech -> release
//
// Each stage's duration lands in the result. Failures map onto a closed set
// of request error categories and always return any held model lease.

#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include <json.hpp>

#include "dynasr/audio.hpp"
#include "dynasr/config.hpp"
#include "dynasr/dsp.hpp"
#include "dynasr/error.hpp"
#include "dynasr/identify.hpp"
#include "dynasr/registry.hpp"

namespace dynasr {

enum class RequestErrorCategory {
  BadAudio,
  AllSilent,
  LowConfidence,
  NoModel,
  BackendFailure,
};

inline const char* to_string(RequestErrorCategory c) {
  switch (c) {
    case RequestErrorCategory::BadAudio: return "BadAudio";
    case RequestErrorCategory::AllSilent: return "AllSilent";
    case RequestErrorCategory::LowConfidence: return "LowConfidence";
    case RequestErrorCategory::NoModel: return "NoModel";
    case RequestErrorCategory::BackendFailure: return "BackendFailure";
  }
  return "Unknown";
}

inline RequestErrorCategory categorize(Err code) {
  switch (code) {
    case Err::MalformedWav:
    case Err::UnsupportedEncoding:
    case Err::EmptyAudio:
    case Err::ClipTooShort:
    case Err::DimensionMismatch:
      return RequestErrorCategory::BadAudio;
    case Err::AudioAllSilent:
      return RequestErrorCategory::AllSilent;
    case Err::LowLidConfidence:
      return RequestErrorCategory::LowConfidence;
    case Err::UnknownModel:
    case Err::BudgetExhausted:
    case Err::NoAccentModel:
      return RequestErrorCategory::NoModel;
    default:
      return RequestErrorCategory::BackendFailure;
  }
}

// Request-scoped failure carrying the category clients switch on.
class RequestError : public std::runtime_error {
 public:
  RequestError(RequestErrorCategory category, Err code, const std::string& message)
      : std::runtime_error(message), category_(category), code_(code) {}

  RequestErrorCategory category() const { return category_; }
  Err code() const { return code_; }

 private:
  RequestErrorCategory category_;
  Err code_;
};

struct StageTimings {
  double preprocess_ms = 0.0;
  double identify_ms = 0.0;
  double model_load_ms = 0.0;
  double decode_ms = 0.0;
  double total_ms = 0.0;
};

struct RecognitionResult {
  std::string transcript;
  std::string language;
  std::string accent;
  ModelKey model_key;
  double language_confidence = 0.0;
  std::optional<double> accent_confidence;
  StageTimings timings;
  bool cache_hit = false;
};

inline nlohmann::ordered_json to_json(const RecognitionResult& r) {
  nlohmann::ordered_json doc;
  doc["transcript"] = r.transcript;
  doc["language"] = r.language;
  doc["accent"] = r.accent;
  doc["model_key"] = {{"language", r.model_key.language},
                      {"accent", r.model_key.accent}};
  doc["confidences"]["language"] = r.language_confidence;
  if (r.accent_confidence) doc["confidences"]["accent"] = *r.accent_confidence;
  doc["timings_ms"] = {{"preprocess", r.timings.preprocess_ms},
                       {"identify", r.timings.identify_ms},
                       {"model_load", r.timings.model_load_ms},
                       {"decode", r.timings.decode_ms},
                       {"total", r.timings.total_ms}};
  doc["cache_hit"] = r.cache_hit;
  return doc;
}

class Pipeline {
 public:
  explicit Pipeline(ServiceConfig cfg)
      : cfg_(std::move(cfg)),
        identifier_(cfg_.identify),
        registry_(cfg_.registry.budget_bytes(), make_backend_loader(cfg_.backend)) {
    for (const auto& m : cfg_.models)
      registry_.register_model({m.key, m.path, m.size_bytes(), m.backend});
    if (cfg_.registry.mode == "preload") {
      if (cfg_.registry.preload.empty()) {
        std::vector<ModelKey> all;
        for (const auto& m : cfg_.models) all.push_back(m.key);
        registry_.preload(all);
      } else {
        registry_.preload(cfg_.registry.preload);
      }
    } else if (!cfg_.registry.preload.empty()) {
      registry_.preload(cfg_.registry.preload);
    }
  }

  RecognitionResult recognize(std::span<const uint8_t> wav_bytes) {
    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t0) {
      return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };
    const auto t_start = clock::now();
    try {
      RecognitionResult result;

      auto t = clock::now();
      const AudioClip raw = decode_wav(wav_bytes);
      const AudioClip id_audio = prepare_for_id(raw, cfg_.preprocess);
      result.timings.preprocess_ms = ms_since(t);

      t = clock::now();
      const IdOutcome outcome = identifier_.identify(id_audio);
      result.timings.identify_ms = ms_since(t);
      result.language = outcome.language;
      result.accent = outcome.accent;
      result.model_key = outcome.model_key;
      result.language_confidence = outcome.lid_scores.confidence;
      if (outcome.accent_scores)
        result.accent_confidence = outcome.accent_scores->confidence;

      t = clock::now();
      ModelHandle handle = registry_.acquire(outcome.model_key);
      result.timings.model_load_ms = ms_since(t);
      result.cache_hit = handle.was_cache_hit();

      t = clock::now();
      const AudioClip asr_audio = prepare_for_asr(raw, cfg_.preprocess);
      result.timings.preprocess_ms += ms_since(t);

      t = clock::now();
      Transcript transcript = handle.recognizer().recognize(asr_audio);
      result.timings.decode_ms = ms_since(t);
      handle.release();

      result.transcript = std::move(transcript.text);
      result.timings.total_ms = ms_since(t_start);
      return result;
    } catch (const Error& e) {
      // any held ModelHandle released by RAII on unwind
      throw RequestError(categorize(e.code()), e.code(), e.what());
    }
  }

  const ServiceConfig& config() const { return cfg_; }
  const Identifier& identifier() const { return identifier_; }
  ModelRegistry& registry() { return registry_; }

 private:
  ServiceConfig cfg_;
  Identifier identifier_;
  ModelRegistry registry_;
};

}  // namespace dynasr
