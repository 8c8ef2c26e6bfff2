// SPDX-License-Identifier: Apache-2.0
//
// Two-stage identification cascade: one language classifier, then the accent
// classifier for the identified language, resolving to a ModelKey under an
// explicit fallback policy. At most one accent model runs per utterance.

#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dynasr/dsp.hpp"
#include "dynasr/error.hpp"
#include "dynasr/model_key.hpp"
#include "dynasr/nn.hpp"

namespace dynasr {

struct IdPolicy {
  // 0.0 accepts every LID decision; higher values reject low-confidence
  // utterances with LowLidConfidence.
  double lid_confidence_threshold = 0.0;
  // accent used when a language has no accent model (or none registered)
  std::map<std::string, std::string> accent_fallback;
};

struct IdentifyConfig {
  std::vector<std::string> languages;
  std::map<std::string, std::vector<std::string>> accents;  // per language
  std::filesystem::path lid_bundle;
  std::map<std::string, std::filesystem::path> accent_bundles;
  IdPolicy policy;

  void validate() const {
    if (languages.empty()) raise(Err::BadConfig, "no languages configured");
    for (const auto& lang : languages) {
      auto it = accents.find(lang);
      if (it == accents.end() || it->second.empty())
        raise(Err::BadConfig, "language '" + lang + "' has no accent list");
      auto fb = policy.accent_fallback.find(lang);
      if (fb == policy.accent_fallback.end())
        raise(Err::BadConfig, "language '" + lang + "' has no fallback accent");
      if (std::find(it->second.begin(), it->second.end(), fb->second) ==
          it->second.end())
        raise(Err::BadConfig, "fallback accent '" + fb->second +
                                  "' not registered for language '" + lang + "'");
    }
    for (const auto& [lang, path] : accent_bundles)
      if (std::find(languages.begin(), languages.end(), lang) == languages.end())
        raise(Err::BadConfig, "accent bundle for unregistered language '" + lang + "'");
    if (policy.lid_confidence_threshold < 0.0 || policy.lid_confidence_threshold > 1.0)
      raise(Err::BadConfig, "lid_confidence_threshold must be in [0, 1]");
  }
};

struct IdOutcome {
  std::string language;
  std::string accent;
  ClassScores lid_scores;
  std::optional<ClassScores> accent_scores;
  ModelKey model_key;
};

// Assembles the final key from classifier outputs. The language must clear
// the confidence threshold; the accent falls back per policy when no accent
// scores exist.
inline IdOutcome resolve_model_key(const ClassScores& lid,
                                   const std::optional<ClassScores>& accent,
                                   const IdPolicy& policy) {
  if (lid.confidence < policy.lid_confidence_threshold)
    raise(Err::LowLidConfidence,
          "confidence " + std::to_string(lid.confidence) + " below threshold " +
              std::to_string(policy.lid_confidence_threshold));
  IdOutcome out;
  out.language = lid.argmax_label();
  out.lid_scores = lid;
  if (accent.has_value()) {
    out.accent = accent->argmax_label();
    out.accent_scores = accent;
  } else {
    auto it = policy.accent_fallback.find(out.language);
    if (it == policy.accent_fallback.end())
      raise(Err::BadConfig, "no fallback accent for language '" + out.language + "'");
    out.accent = it->second;
  }
  out.model_key = {out.language, out.accent};
  return out;
}

// Owns the LID and per-language accent weight sets. Immutable after
// construction; identification calls are safe to run concurrently.
class Identifier {
 public:
  explicit Identifier(IdentifyConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    lid_ = load_weights(cfg_.lid_bundle);
    check_front_end(lid_, "LID");
    check_labels(lid_.labels, cfg_.languages, "LID bundle");
    for (const auto& [lang, path] : cfg_.accent_bundles) {
      WeightSet ws = load_weights(path);
      check_front_end(ws, "accent/" + lang);
      check_labels(ws.labels, cfg_.accents.at(lang), "accent bundle for " + lang);
      accent_.emplace(lang, std::move(ws));
    }
  }

  // LID scores over the configured languages; expects prepare_for_id output.
  ClassScores identify_language(const AudioClip& id_audio) const {
    return classify(lid_, log_mel_features(id_audio));
  }

  // Accent scores from the given language's accent model.
  ClassScores identify_accent(const AudioClip& id_audio,
                              const std::string& language) const {
    auto it = accent_.find(language);
    if (it == accent_.end())
      raise(Err::NoAccentModel, "no accent model for language '" + language + "'");
    return classify(it->second, log_mel_features(id_audio));
  }

  IdOutcome resolve(const ClassScores& lid,
                    const std::optional<ClassScores>& accent) const {
    return resolve_model_key(lid, accent, cfg_.policy);
  }

  // Full cascade on one prepared clip. The accent stage runs only for the
  // accepted language, and only when that language has an accent model.
  IdOutcome identify(const AudioClip& id_audio) const {
    ClassScores lid = identify_language(id_audio);
    if (lid.confidence < cfg_.policy.lid_confidence_threshold)
      raise(Err::LowLidConfidence,
            "confidence " + std::to_string(lid.confidence) + " below threshold " +
                std::to_string(cfg_.policy.lid_confidence_threshold));
    std::optional<ClassScores> accent;
    if (accent_.count(lid.argmax_label()))
      accent = identify_accent(id_audio, lid.argmax_label());
    return resolve(lid, accent);
  }

  const IdentifyConfig& config() const { return cfg_; }
  bool has_accent_model(const std::string& language) const {
    return accent_.count(language) > 0;
  }

 private:
  static void check_front_end(const WeightSet& ws, const std::string& which) {
    if (ws.front_end != kFrontEndDescriptor)
      raise(Err::FrontEndMismatch, which + " bundle was built for front end '" +
                                       ws.front_end + "', runtime uses '" +
                                       kFrontEndDescriptor + "'");
  }

  static void check_labels(const std::vector<std::string>& bundle,
                           const std::vector<std::string>& configured,
                           const std::string& which) {
    std::set<std::string> a(bundle.begin(), bundle.end());
    std::set<std::string> b(configured.begin(), configured.end());
    if (a != b) raise(Err::BadConfig, which + " label set differs from configuration");
  }

  IdentifyConfig cfg_;
  WeightSet lid_;
  std::map<std::string, WeightSet> accent_;
};

}  // namespace dynasr
