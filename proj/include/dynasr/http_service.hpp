// SPDX-License-Identifier: Apache-2.0
//
// HTTP/1.1 surface over the pipeline:
//   POST /v1/recognize   audio/wav body -> RecognitionResult JSON
//   GET  /v1/health      liveness probe
//   GET  /v1/models      catalog with loaded flags
//   GET  /v1/metrics     request counters, per-category errors, registry
//                        stats and a latency histogram

#pragma once

#include <atomic>
#include <array>
#include <mutex>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "dynasr/pipeline.hpp"

namespace dynasr {

inline std::pair<std::string, int> parse_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos)
    raise(Err::BadConfig, "listen must be host:port, got '" + listen + "'");
  const std::string host = listen.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(listen.substr(colon + 1));
  } catch (const std::exception&) {
    raise(Err::BadConfig, "bad port in '" + listen + "'");
  }
  if (port <= 0 || port > 65535) raise(Err::BadConfig, "bad port in '" + listen + "'");
  return {host, port};
}

class HttpService {
 public:
  explicit HttpService(Pipeline& pipeline) : pipeline_(pipeline) { wire_routes(); }

  // Blocks serving requests; returns false if the address cannot be bound.
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  httplib::Server& server() { return server_; }

 private:
  static constexpr std::array<double, 9> kLatencyBoundsMs = {10,  25,   50,   100, 250,
                                                             500, 1000, 2500, 5000};

  void wire_routes() {
    server_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok", "text/plain");
    });

    server_.Post("/v1/recognize", [this](const httplib::Request& req,
                                         httplib::Response& res) {
      {
        std::lock_guard lk(metrics_mutex_);
        requests_++;
      }
      try {
        const auto* bytes = reinterpret_cast<const uint8_t*>(req.body.data());
        RecognitionResult result =
            pipeline_.recognize(std::span<const uint8_t>(bytes, req.body.size()));
        record_latency(result.timings.total_ms);
        res.set_content(to_json(result).dump(), "application/json");
      } catch (const RequestError& e) {
        record_error(e.category());
        nlohmann::ordered_json err;
        err["error"] = {{"category", to_string(e.category())}, {"message", e.what()}};
        res.status = status_for(e.category());
        res.set_content(err.dump(), "application/json");
      } catch (const std::exception& e) {
        nlohmann::ordered_json err;
        err["error"] = {{"category", "Internal"}, {"message", e.what()}};
        res.status = 500;
        res.set_content(err.dump(), "application/json");
      }
    });

    server_.Get("/v1/models", [this](const httplib::Request&, httplib::Response& res) {
      const RegistryStats stats = pipeline_.registry().stats();
      nlohmann::ordered_json doc = nlohmann::ordered_json::array();
      for (const auto& m : pipeline_.registry().catalog()) {
        nlohmann::ordered_json entry;
        entry["language"] = m.key.language;
        entry["accent"] = m.key.accent;
        entry["path"] = m.artifact_path.string();
        entry["size_bytes"] = m.declared_size_bytes;
        entry["backend"] = m.backend_kind;
        entry["loaded"] = stats.is_loaded(m.key);
        doc.push_back(std::move(entry));
      }
      res.set_content(doc.dump(), "application/json");
    });

    server_.Get("/v1/metrics", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(metrics_json().dump(), "application/json");
    });
  }

  static int status_for(RequestErrorCategory c) {
    switch (c) {
      case RequestErrorCategory::BadAudio: return 400;
      case RequestErrorCategory::AllSilent: return 422;
      case RequestErrorCategory::LowConfidence: return 422;
      case RequestErrorCategory::NoModel: return 404;
      case RequestErrorCategory::BackendFailure: return 502;
    }
    return 500;
  }

  void record_latency(double ms) {
    std::lock_guard lk(metrics_mutex_);
    ok_++;
    latency_sum_ms_ += ms;
    for (size_t i = 0; i < kLatencyBoundsMs.size(); ++i) {
      if (ms <= kLatencyBoundsMs[i]) {
        latency_buckets_[i]++;
        return;
      }
    }
    latency_overflow_++;
  }

  void record_error(RequestErrorCategory c) {
    std::lock_guard lk(metrics_mutex_);
    errors_[static_cast<size_t>(c)]++;
  }

  nlohmann::ordered_json metrics_json() {
    std::lock_guard lk(metrics_mutex_);
    nlohmann::ordered_json doc;
    doc["requests"] = requests_;
    doc["ok"] = ok_;
    nlohmann::ordered_json errs;
    static constexpr RequestErrorCategory kCats[] = {
        RequestErrorCategory::BadAudio, RequestErrorCategory::AllSilent,
        RequestErrorCategory::LowConfidence, RequestErrorCategory::NoModel,
        RequestErrorCategory::BackendFailure};
    for (auto c : kCats) errs[to_string(c)] = errors_[static_cast<size_t>(c)];
    doc["errors"] = std::move(errs);

    const RegistryStats stats = pipeline_.registry().stats();
    doc["registry"] = {{"budget_bytes", stats.budget_bytes},
                       {"loaded_bytes", stats.loaded_bytes},
                       {"loaded_models", stats.loaded.size()},
                       {"loads", stats.loads},
                       {"evictions", stats.evictions},
                       {"hits", stats.hits},
                       {"misses", stats.misses}};

    nlohmann::ordered_json buckets = nlohmann::ordered_json::array();
    for (size_t i = 0; i < kLatencyBoundsMs.size(); ++i)
      buckets.push_back({{"le_ms", kLatencyBoundsMs[i]}, {"count", latency_buckets_[i]}});
    buckets.push_back({{"le_ms", "inf"}, {"count", latency_overflow_}});
    doc["latency"] = {{"buckets", std::move(buckets)}, {"sum_ms", latency_sum_ms_}};
    return doc;
  }

  Pipeline& pipeline_;
  httplib::Server server_;

  std::mutex metrics_mutex_;
  uint64_t requests_ = 0, ok_ = 0;
  std::array<uint64_t, 5> errors_{};
  std::array<uint64_t, kLatencyBoundsMs.size()> latency_buckets_{};
  uint64_t latency_overflow_ = 0;
  double latency_sum_ms_ = 0.0;
};

}  // namespace dynasr
