// SPDX-License-Identifier: Apache-2.0
//
// Service configuration: TOML file with sections [service], [preprocess],
// [identify], [registry], [backend] and one [[models]] entry per catalog
// model. Relative paths are resolved against the config file's directory.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dynasr/backend.hpp"
#include "dynasr/dsp.hpp"
#include "dynasr/error.hpp"
#include "dynasr/identify.hpp"
#include "dynasr/model_key.hpp"
#include "dynasr/toml.hpp"

namespace dynasr {

struct RegistryConfig {
  uint64_t budget_mb = 775;
  std::string mode = "lazy";  // "lazy" or "preload"
  std::vector<ModelKey> preload;  // empty in preload mode means "all"

  uint64_t budget_bytes() const { return budget_mb * 1024 * 1024; }
};

struct ModelEntry {
  ModelKey key;
  std::filesystem::path path;
  double size_mb = 0.0;
  std::string backend = "mock";

  uint64_t size_bytes() const {
    return static_cast<uint64_t>(size_mb * 1024.0 * 1024.0);
  }
};

struct ServiceConfig {
  std::string listen = "127.0.0.1:8080";
  int latency_slo_ms = 1000;
  PreprocessConfig preprocess;
  IdentifyConfig identify;
  RegistryConfig registry;
  BackendSpec backend;
  std::vector<ModelEntry> models;

  void validate() const {
    preprocess.validate();
    identify.validate();
    backend.validate();
    if (latency_slo_ms <= 0) raise(Err::BadConfig, "latency_slo_ms must be > 0");
    if (registry.mode != "lazy" && registry.mode != "preload")
      raise(Err::BadConfig, "registry mode must be lazy or preload");
    if (registry.budget_mb == 0) raise(Err::BadConfig, "registry budget_mb must be > 0");
    for (const auto& m : models) {
      const auto& langs = identify.languages;
      if (std::find(langs.begin(), langs.end(), m.key.language) == langs.end())
        raise(Err::BadConfig, "model " + m.key.str() + " uses unknown language");
      const auto& accents = identify.accents.at(m.key.language);
      if (std::find(accents.begin(), accents.end(), m.key.accent) == accents.end())
        raise(Err::BadConfig, "model " + m.key.str() + " uses unknown accent");
      if (m.backend != "mock" && m.backend != "external")
        raise(Err::BadConfig, "model " + m.key.str() + " has unknown backend kind");
      if (m.size_mb <= 0) raise(Err::BadConfig, "model " + m.key.str() + " needs size_mb > 0");
    }
  }
};

namespace config_detail {

inline std::filesystem::path resolve(const std::filesystem::path& base,
                                     const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace config_detail

inline ServiceConfig load_config(const std::filesystem::path& file) {
  using namespace minitoml;
  const Document doc = parse_file(file);
  const std::filesystem::path base = file.has_parent_path()
                                         ? file.parent_path()
                                         : std::filesystem::path(".");
  ServiceConfig cfg;

  const Table& service = doc.table("service");
  cfg.listen = get_str(service, "listen", cfg.listen);
  cfg.latency_slo_ms = static_cast<int>(get_int(service, "latency_slo_ms", 1000));

  const Table& pp = doc.table("preprocess");
  cfg.preprocess.silence_threshold_db =
      get_num(pp, "silence_threshold_db", cfg.preprocess.silence_threshold_db);
  cfg.preprocess.silence_window_ms =
      static_cast<int>(get_int(pp, "silence_window_ms", cfg.preprocess.silence_window_ms));
  cfg.preprocess.normalize_peak = get_num(pp, "normalize_peak", cfg.preprocess.normalize_peak);
  cfg.preprocess.id_min_duration_s =
      get_num(pp, "id_min_duration_s", cfg.preprocess.id_min_duration_s);
  cfg.preprocess.asr_rate = static_cast<int>(get_int(pp, "asr_rate", cfg.preprocess.asr_rate));
  cfg.preprocess.id_rate = static_cast<int>(get_int(pp, "id_rate", cfg.preprocess.id_rate));

  const Table& ident = doc.table("identify");
  cfg.identify.languages = get_str_array(ident, "languages");
  cfg.identify.lid_bundle = config_detail::resolve(base, req_str(ident, "lid_bundle"));
  cfg.identify.policy.lid_confidence_threshold =
      get_num(ident, "lid_confidence_threshold", 0.0);
  const Table& accents = doc.table("identify.accents");
  for (const auto& [lang, value] : accents.entries) {
    if (value.kind != Value::Kind::StrArray)
      raise(Err::BadConfig, "identify.accents." + lang + " must be a string array");
    cfg.identify.accents[lang] = value.array;
  }
  const Table& bundles = doc.table("identify.accent_bundles");
  for (const auto& [lang, value] : bundles.entries) {
    if (value.kind != Value::Kind::Str)
      raise(Err::BadConfig, "identify.accent_bundles." + lang + " must be a string");
    cfg.identify.accent_bundles[lang] = config_detail::resolve(base, value.str);
  }
  const Table& fallback = doc.table("identify.fallback");
  for (const auto& [lang, value] : fallback.entries) {
    if (value.kind != Value::Kind::Str)
      raise(Err::BadConfig, "identify.fallback." + lang + " must be a string");
    cfg.identify.policy.accent_fallback[lang] = value.str;
  }

  const Table& reg = doc.table("registry");
  cfg.registry.budget_mb =
      static_cast<uint64_t>(get_int(reg, "budget_mb", static_cast<int64_t>(cfg.registry.budget_mb)));
  cfg.registry.mode = get_str(reg, "mode", cfg.registry.mode);
  for (const auto& key : get_str_array(reg, "preload"))
    cfg.registry.preload.push_back(ModelKey::parse(key));

  const Table& be = doc.table("backend");
  cfg.backend.kind = get_str(be, "kind", cfg.backend.kind);
  cfg.backend.external_command = get_str(be, "command", "");
  cfg.backend.timeout_ms =
      static_cast<int>(get_int(be, "timeout_ms", cfg.backend.timeout_ms));
  const Table& mock = doc.table("backend.mock_transcripts");
  for (const auto& [key, value] : mock.entries) {
    if (value.kind != Value::Kind::Str)
      raise(Err::BadConfig, "backend.mock_transcripts entries must be strings");
    cfg.backend.mock_transcripts[ModelKey::parse(key)] = value.str;
  }

  auto it = doc.table_arrays.find("models");
  if (it != doc.table_arrays.end()) {
    for (const auto& t : it->second) {
      ModelEntry m;
      m.key.language = req_str(t, "language");
      m.key.accent = req_str(t, "accent");
      m.path = config_detail::resolve(base, req_str(t, "path"));
      m.size_mb = req_num(t, "size_mb");
      m.backend = get_str(t, "backend", cfg.backend.kind);
      cfg.models.push_back(std::move(m));
    }
  }

  cfg.validate();
  return cfg;
}

}  // namespace dynasr
