// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include <httplib.h>

#include "dynasr/http_service.hpp"
#include "dynasr/pipeline.hpp"
#include "helpers.hpp"

using namespace dynasr;
using testutil::TempDir;

namespace {

// Stub service: LID forced to `lang_index`, en-accent forced to india.
// Small hidden size keeps classification fast; the label sets are the
// paper's. Models: en/india and en/usa (mock), nothing for ta or cmn.
ServiceConfig stub_config(const TempDir& dir, int lang_index = 0,
                          const std::string& backend_kind = "mock",
                          const std::string& external_command = "") {
  using testutil::zero_weights;
  const std::vector<std::string> en_accents = {"scotland", "australia", "england",
                                               "india",    "usa",       "china",
                                               "malaysia", "other"};
  std::vector<float> lid_bias(3, 0.0f);
  lid_bias[static_cast<size_t>(lang_index)] = 5.0f;
  std::vector<float> en_bias(8, 0.0f);
  en_bias[3] = 5.0f;  // india
  save_weights(dir / "weights/lid",
               zero_weights(40, 6, 2, {"en", "ta", "cmn"}, lid_bias));
  save_weights(dir / "weights/accent_en", zero_weights(40, 6, 2, en_accents, en_bias));
  save_weights(dir / "weights/accent_cmn",
               zero_weights(40, 6, 2, {"mainland", "taiwan", "hongkong"}));
  testutil::write_file(dir / "models/en_india.model", "stub");
  testutil::write_file(dir / "models/en_usa.model", "stub");

  ServiceConfig cfg;
  cfg.listen = "127.0.0.1:0";
  cfg.identify.languages = {"en", "ta", "cmn"};
  cfg.identify.accents["en"] = en_accents;
  cfg.identify.accents["ta"] = {"default"};
  cfg.identify.accents["cmn"] = {"mainland", "taiwan", "hongkong"};
  cfg.identify.lid_bundle = dir / "weights/lid";
  cfg.identify.accent_bundles["en"] = dir / "weights/accent_en";
  cfg.identify.accent_bundles["cmn"] = dir / "weights/accent_cmn";
  cfg.identify.policy.accent_fallback = {
      {"en", "other"}, {"ta", "default"}, {"cmn", "mainland"}};
  cfg.registry.budget_mb = 775;
  cfg.registry.mode = "lazy";
  cfg.backend.kind = backend_kind;
  cfg.backend.external_command = external_command;
  cfg.backend.timeout_ms = 2000;
  cfg.backend.mock_transcripts[{"en", "india"}] = "namaste";
  cfg.models.push_back({{"en", "india"}, dir / "models/en_india.model", 150.0,
                        backend_kind});
  cfg.models.push_back({{"en", "usa"}, dir / "models/en_usa.model", 150.0,
                        backend_kind});
  cfg.validate();
  return cfg;
}

std::vector<uint8_t> utterance_wav(double seconds = 2.0, int rate = 16000) {
  return encode_wav(testutil::speechy_clip(rate, seconds));
}

}  // namespace

TEST_CASE("pipeline recognizes through stub classifiers and the mock backend") {
  TempDir dir;
  Pipeline pipeline(stub_config(dir));
  const auto wav = utterance_wav();

  RecognitionResult first = pipeline.recognize(wav);
  CHECK(first.transcript == "namaste");
  CHECK(first.language == "en");
  CHECK(first.accent == "india");
  CHECK(first.model_key == ModelKey{"en", "india"});
  CHECK_FALSE(first.cache_hit);
  CHECK(first.language_confidence > 0.9);
  REQUIRE(first.accent_confidence.has_value());

  RecognitionResult second = pipeline.recognize(wav);
  CHECK(second.cache_hit);
  CHECK(second.transcript == "namaste");

  // stage timings populated and consistent
  CHECK(first.timings.total_ms >= first.timings.preprocess_ms);
  CHECK(first.timings.total_ms >= first.timings.identify_ms);
  CHECK(first.timings.total_ms >= first.timings.model_load_ms);
  CHECK(first.timings.total_ms >= first.timings.decode_ms);
}

TEST_CASE("request error taxonomy") {
  TempDir dir;
  SECTION("malformed bytes are BadAudio") {
    Pipeline pipeline(stub_config(dir));
    const std::vector<uint8_t> garbage = {'n', 'o', 't', ' ', 'a', ' ', 'w', 'a', 'v'};
    try {
      pipeline.recognize(garbage);
      FAIL("expected BadAudio");
    } catch (const RequestError& e) {
      CHECK(e.category() == RequestErrorCategory::BadAudio);
    }
  }
  SECTION("all-silent input is AllSilent with its own category") {
    Pipeline pipeline(stub_config(dir));
    AudioClip silent;
    silent.sample_rate = 16000;
    silent.channels = 1;
    silent.samples.assign(16000, 0);
    try {
      pipeline.recognize(encode_wav(silent));
      FAIL("expected AllSilent");
    } catch (const RequestError& e) {
      CHECK(e.category() == RequestErrorCategory::AllSilent);
    }
  }
  SECTION("identified language without a registered model is NoModel") {
    Pipeline pipeline(stub_config(dir, /*lang_index=*/1));  // forces ta
    try {
      pipeline.recognize(utterance_wav());
      FAIL("expected NoModel");
    } catch (const RequestError& e) {
      CHECK(e.category() == RequestErrorCategory::NoModel);
    }
  }
  SECTION("low LID confidence surfaces as LowConfidence") {
    ServiceConfig cfg = stub_config(dir);
    save_weights(dir / "weights/lid",
                 testutil::zero_weights(40, 6, 2, {"en", "ta", "cmn"}));  // uniform
    cfg.identify.policy.lid_confidence_threshold = 0.9;
    Pipeline pipeline(cfg);
    try {
      pipeline.recognize(utterance_wav());
      FAIL("expected LowConfidence");
    } catch (const RequestError& e) {
      CHECK(e.category() == RequestErrorCategory::LowConfidence);
    }
  }
  SECTION("crashing backend is BackendFailure and leaves zero leases") {
    Pipeline pipeline(stub_config(dir, 0, "external", "cat >/dev/null; exit 9"));
    try {
      pipeline.recognize(utterance_wav());
      FAIL("expected BackendFailure");
    } catch (const RequestError& e) {
      CHECK(e.category() == RequestErrorCategory::BackendFailure);
    }
    for (const auto& entry : pipeline.registry().stats().loaded)
      CHECK(entry.active_leases == 0);
  }
}

TEST_CASE("zero leases after every request, success or failure", "[property]") {
  TempDir dir;
  Pipeline pipeline(stub_config(dir));
  const auto good = utterance_wav();
  const std::vector<uint8_t> bad = {'x'};
  for (int i = 0; i < 6; ++i) {
    if (i % 2 == 0) {
      pipeline.recognize(good);
    } else {
      try {
        pipeline.recognize(bad);
      } catch (const RequestError&) {
      }
    }
    for (const auto& entry : pipeline.registry().stats().loaded)
      REQUIRE(entry.active_leases == 0);
  }
  // lazy mode, one distinct key observed -> exactly one load
  CHECK(pipeline.registry().stats().loads == 1);
}

TEST_CASE("responses are stable for identical input bytes") {
  TempDir dir;
  const auto wav = utterance_wav();
  const ServiceConfig cfg = stub_config(dir);

  nlohmann::ordered_json previous;
  for (int run = 0; run < 3; ++run) {
    Pipeline pipeline(cfg);
    const RecognitionResult r = pipeline.recognize(wav);
    nlohmann::ordered_json doc = to_json(r);
    doc.erase("timings_ms");  // wall-clock jitter; everything else must match
    if (run > 0) REQUIRE(doc == previous);
    previous = doc;
  }
}

TEST_CASE("result document mirrors the RecognitionResult fields") {
  TempDir dir;
  Pipeline pipeline(stub_config(dir));
  const RecognitionResult r = pipeline.recognize(utterance_wav());
  const nlohmann::ordered_json doc = to_json(r);
  CHECK(doc.at("transcript") == "namaste");
  CHECK(doc.at("language") == "en");
  CHECK(doc.at("accent") == "india");
  CHECK(doc.at("model_key").at("language") == "en");
  CHECK(doc.at("model_key").at("accent") == "india");
  CHECK(doc.at("confidences").contains("language"));
  CHECK(doc.at("confidences").contains("accent"));
  for (const char* stage : {"preprocess", "identify", "model_load", "decode", "total"})
    CHECK(doc.at("timings_ms").contains(stage));
  CHECK(doc.at("cache_hit").is_boolean());
}

TEST_CASE("http endpoints") {
  TempDir dir;
  Pipeline pipeline(stub_config(dir));
  HttpService service(pipeline);

  const int port = service.server().bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { service.server().listen_after_bind(); });
  service.server().wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(60, 0);

  SECTION("health") {
    auto res = client.Get("/v1/health");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->body == "ok");
  }
  SECTION("recognize returns the result document") {
    const auto wav = utterance_wav();
    auto res = client.Post("/v1/recognize",
                           reinterpret_cast<const char*>(wav.data()), wav.size(),
                           "audio/wav");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto doc = nlohmann::json::parse(res->body);
    CHECK(doc.at("transcript") == "namaste");
    CHECK(doc.at("model_key").at("accent") == "india");
  }
  SECTION("bad audio yields 400 with the category") {
    auto res = client.Post("/v1/recognize", "garbage", "audio/wav");
    REQUIRE(res);
    CHECK(res->status == 400);
    const auto doc = nlohmann::json::parse(res->body);
    CHECK(doc.at("error").at("category") == "BadAudio");
  }
  SECTION("models lists the catalog with loaded flags") {
    const auto wav = utterance_wav();
    client.Post("/v1/recognize", reinterpret_cast<const char*>(wav.data()),
                wav.size(), "audio/wav");
    auto res = client.Get("/v1/models");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const auto doc = nlohmann::json::parse(res->body);
    REQUIRE(doc.size() == 2);
    bool india_loaded = false, usa_loaded = true;
    for (const auto& entry : doc) {
      if (entry.at("accent") == "india") india_loaded = entry.at("loaded");
      if (entry.at("accent") == "usa") usa_loaded = entry.at("loaded");
    }
    CHECK(india_loaded);
    CHECK_FALSE(usa_loaded);
  }
  SECTION("metrics counts requests, errors and registry activity") {
    const auto wav = utterance_wav();
    client.Post("/v1/recognize", reinterpret_cast<const char*>(wav.data()),
                wav.size(), "audio/wav");
    client.Post("/v1/recognize", "junk", "audio/wav");
    auto res = client.Get("/v1/metrics");
    REQUIRE(res);
    const auto doc = nlohmann::json::parse(res->body);
    CHECK(doc.at("requests").get<int>() == 2);
    CHECK(doc.at("errors").at("BadAudio").get<int>() == 1);
    CHECK(doc.at("registry").at("loads").get<int>() == 1);
    CHECK(doc.at("latency").at("buckets").is_array());
  }

  service.server().stop();
  server_thread.join();
}

TEST_CASE("preload mode loads the whole catalog at startup") {
  TempDir dir;
  ServiceConfig cfg = stub_config(dir);
  cfg.registry.mode = "preload";
  Pipeline pipeline(cfg);
  const RegistryStats s = pipeline.registry().stats();
  CHECK(s.loads == 2);
  CHECK(s.is_loaded({"en", "india"}));
  CHECK(s.is_loaded({"en", "usa"}));
  // recognizing now hits the cache
  const RecognitionResult r = pipeline.recognize(utterance_wav());
  CHECK(r.cache_hit);
}
