// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dynasr/eval.hpp"
#include "helpers.hpp"

using namespace dynasr;
using testutil::TempDir;

namespace {

// Exhaustive edit-path search. Enumerates every monotone alignment path and
// keeps the (cost, insertions)-lexicographically smallest one, the same
// canonical decomposition the DP is specified to produce.
struct OracleCounts {
  size_t cost = SIZE_MAX, s = 0, d = 0, i = 0;
};

void oracle_search(const std::vector<std::string>& ref,
                   const std::vector<std::string>& hyp, size_t pi, size_t pj,
                   size_t s, size_t d, size_t ins, OracleCounts& best) {
  if (pi == ref.size() && pj == hyp.size()) {
    const size_t cost = s + d + ins;
    if (cost < best.cost || (cost == best.cost && ins < best.i)) {
      best = {cost, s, d, ins};
    }
    return;
  }
  if (pi < ref.size() && pj < hyp.size()) {
    const bool match = ref[pi] == hyp[pj];
    oracle_search(ref, hyp, pi + 1, pj + 1, s + (match ? 0 : 1), d, ins, best);
  }
  if (pi < ref.size()) oracle_search(ref, hyp, pi + 1, pj, s, d + 1, ins, best);
  if (pj < hyp.size()) oracle_search(ref, hyp, pi, pj + 1, s, d, ins + 1, best);
}

OracleCounts oracle_wer(const std::vector<std::string>& ref,
                        const std::vector<std::string>& hyp) {
  OracleCounts best;
  oracle_search(ref, hyp, 0, 0, 0, 0, 0, best);
  return best;
}

std::vector<std::string> random_tokens(std::mt19937_64& rng, size_t max_len,
                                       int alphabet) {
  const size_t len = rng() % (max_len + 1);
  std::vector<std::string> out(len);
  for (auto& t : out) t = std::string(1, static_cast<char>('a' + rng() % alphabet));
  return out;
}

}  // namespace

TEST_CASE("tokenize lowercases and strips edge punctuation") {
  CHECK(tokenize("The CAT, sat!") == std::vector<std::string>{"the", "cat", "sat"});
  CHECK(tokenize("  don't   stop ") == std::vector<std::string>{"don't", "stop"});
  CHECK(tokenize("...") == std::vector<std::string>{});
  CHECK(tokenize("") == std::vector<std::string>{});
}

TEST_CASE("wer on the worked examples") {
  SECTION("identity") {
    const WerResult r = wer("the cat sat", "the cat sat");
    CHECK(r.wer == 0.0);
    CHECK(r.errors() == 0);
    CHECK(r.reference_words == 3);
  }
  SECTION("one deletion") {
    const WerResult r = wer("the cat sat", "the cat");
    CHECK(r.substitutions == 0);
    CHECK(r.deletions == 1);
    CHECK(r.insertions == 0);
    CHECK(r.wer == Catch::Approx(1.0 / 3));
  }
  SECTION("substitution plus deletion") {
    const WerResult r = wer("a b c d", "a x c");
    CHECK(r.substitutions == 1);
    CHECK(r.deletions == 1);
    CHECK(r.insertions == 0);
    CHECK(r.wer == 0.5);
  }
  SECTION("empty reference with non-empty hypothesis errors") {
    try {
      wer("", "something");
      FAIL("expected EmptyReference");
    } catch (const Error& e) {
      CHECK(e.code() == Err::EmptyReference);
    }
  }
  SECTION("both empty is a zero result") {
    const WerResult r = wer("", "");
    CHECK(r.wer == 0.0);
    CHECK(r.reference_words == 0);
  }
  SECTION("empty hypothesis deletes everything") {
    const WerResult r = wer("a b c", "");
    CHECK(r.deletions == 3);
    CHECK(r.wer == 1.0);
  }
  SECTION("wer can exceed 1") {
    const WerResult r = wer("a", "x y z");
    CHECK(r.wer > 1.0);
  }
}

TEST_CASE("wer counts equal exhaustive edit-path search", "[property]") {
  std::mt19937_64 rng(2718);
  for (int trial = 0; trial < 300; ++trial) {
    const auto ref = random_tokens(rng, 6, 4);
    const auto hyp = random_tokens(rng, 6, 4);
    if (ref.empty() && !hyp.empty()) continue;
    const WerResult dp = wer_tokens(ref, hyp);
    const OracleCounts expected = oracle_wer(ref, hyp);
    REQUIRE(dp.errors() == expected.cost);
    REQUIRE(dp.substitutions == expected.s);
    REQUIRE(dp.deletions == expected.d);
    REQUIRE(dp.insertions == expected.i);
  }
}

TEST_CASE("aggregate_wer pools counts before dividing") {
  SECTION("two pairs, one perfect and one fully wrong, pool to 50%") {
    const std::vector<WerPair> pairs = {
        {"india", "one two three", "one two three"},
        {"india", "four five six", "a b c"},
    };
    const auto rows = aggregate_wer(pairs);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].first == "india");
    CHECK(rows[0].second.wer == Catch::Approx(0.5));
    CHECK(rows[0].second.reference_words == 6);
  }
  SECTION("identical pairs pool to zero") {
    const std::vector<WerPair> pairs = {{"a", "x y", "x y"}, {"b", "z", "z"}};
    for (const auto& [accent, r] : aggregate_wer(pairs)) CHECK(r.wer == 0.0);
  }
  SECTION("pooled result is invariant under pair order", "[property]") {
    std::mt19937_64 rng(5);
    std::vector<WerPair> pairs;
    for (int i = 0; i < 20; ++i) {
      auto mk = [&] {
        std::string s;
        for (size_t k = 0; k < 1 + rng() % 6; ++k)
          s += std::string(1, static_cast<char>('a' + rng() % 4)) + " ";
        return s;
      };
      pairs.push_back({i % 2 ? "x" : "y", mk(), mk()});
    }
    const auto before = aggregate_wer(pairs);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    auto after = aggregate_wer(pairs);
    // row order follows first appearance; compare as maps
    std::map<std::string, double> a, b;
    for (const auto& [k, v] : before) a[k] = v.wer;
    for (const auto& [k, v] : after) b[k] = v.wer;
    CHECK(a == b);
  }
}

TEST_CASE("wer table renders accent rows and system columns") {
  std::vector<WerPair> pairs;
  auto add_ratio = [&](const std::string& accent, int errors, int words) {
    // `errors` substitutions across `words` reference words, in 100-word rows
    while (words > 0) {
      const int chunk = std::min(100, words);
      std::string ref, hyp;
      for (int i = 0; i < chunk; ++i) {
        ref += "w" + std::to_string(i) + " ";
        hyp += (errors-- > 0 ? "x " : "w" + std::to_string(i) + " ");
      }
      pairs.push_back({accent, ref, hyp});
      words -= chunk;
    }
  };
  add_ratio("India", 1589, 10000);
  add_ratio("China", 2605, 10000);
  add_ratio("Malaysia", 1159, 10000);

  const WerTable table = make_wer_table({{"Dyn-ASR", aggregate_wer(pairs)}});
  const std::string csv = render_report(table, ReportFormat::Csv);
  CHECK(csv.find("accent,Dyn-ASR\n") == 0);
  CHECK(csv.find("India,15.89") != std::string::npos);
  CHECK(csv.find("China,26.05") != std::string::npos);
  CHECK(csv.find("Malaysia,11.59") != std::string::npos);
}

TEST_CASE("confusion matrix validation") {
  ConfusionMatrix m;
  m.labels = {"a", "b"};
  m.rows = {{0.9, 0.1}, {0.2, 0.8}};
  CHECK_NOTHROW(m.validate());
  SECTION("row sum off by more than 1e-9") {
    m.rows[0][0] = 0.95;
    try {
      m.validate();
      FAIL("expected InvalidMatrix");
    } catch (const Error& e) {
      CHECK(e.code() == Err::InvalidMatrix);
    }
  }
  SECTION("negative entry") {
    m.rows = {{1.1, -0.1}, {0.2, 0.8}};
    CHECK_THROWS_AS(m.validate(), Error);
  }
  SECTION("diagonal constructor spreads the off-diagonal mass uniformly") {
    const auto d = ConfusionMatrix::diagonal({"a", "b", "c"}, 0.8499);
    CHECK_NOTHROW(d.validate());
    CHECK(d.rows[1][1] == Catch::Approx(0.8499));
    CHECK(d.rows[1][0] == Catch::Approx((1 - 0.8499) / 2));
  }
}

TEST_CASE("simulate_routing") {
  SECTION("identity matrices give perfect rates") {
    RoutingSetup setup;
    setup.lid = ConfusionMatrix::diagonal({"en", "ta", "cmn"}, 1.0);
    setup.accents["en"] = ConfusionMatrix::diagonal({"usa", "india"}, 1.0);
    const SelectionStats s = simulate_routing(setup, 5000, 1);
    CHECK(s.language_correct_rate == 1.0);
    CHECK(s.fully_correct_rate == 1.0);
  }
  SECTION("fixed seed is bit-reproducible") {
    RoutingSetup setup;
    setup.lid = ConfusionMatrix::diagonal({"en", "ta", "cmn"}, 0.8499);
    setup.accents["en"] = ConfusionMatrix::diagonal({"usa", "india"}, 0.7441);
    const SelectionStats a = simulate_routing(setup, 20000, 99);
    const SelectionStats b = simulate_routing(setup, 20000, 99);
    CHECK(a.language_correct_rate == b.language_correct_rate);
    CHECK(a.fully_correct_rate == b.fully_correct_rate);
    const SelectionStats c = simulate_routing(setup, 20000, 100);
    CHECK(a.fully_correct_rate != c.fully_correct_rate);  // seed actually matters
  }
  SECTION("fully correct never exceeds language correct", "[property]") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
      RoutingSetup setup;
      const double lid_acc = 0.3 + (rng() % 70) / 100.0;
      const double acc_acc = 0.3 + (rng() % 70) / 100.0;
      setup.lid = ConfusionMatrix::diagonal({"en", "ta", "cmn"}, lid_acc);
      setup.accents["en"] =
          ConfusionMatrix::diagonal({"u", "i", "o"}, acc_acc);
      const SelectionStats s = simulate_routing(setup, 3000, 7 + trial);
      REQUIRE(s.fully_correct_rate <= s.language_correct_rate);
      REQUIRE(s.trials == 3000);
    }
  }
  SECTION("languages without accent matrices count as fully correct on language hit") {
    RoutingSetup setup;
    setup.lid = ConfusionMatrix::diagonal({"en", "ta"}, 0.9);
    const SelectionStats s = simulate_routing(setup, 20000, 3);
    CHECK(s.language_correct_rate == Catch::Approx(s.fully_correct_rate));
    CHECK(s.language_correct_rate == Catch::Approx(0.9).margin(0.02));
  }
  SECTION("restricting true languages isolates one cascade") {
    RoutingSetup setup;
    setup.lid = ConfusionMatrix::diagonal({"en", "ta", "cmn"}, 0.8499);
    setup.accents["en"] = ConfusionMatrix::diagonal(
        {"a", "b", "c", "d", "e", "f", "g", "h"}, 0.7441);
    setup.true_languages = {"en"};
    const SelectionStats s = simulate_routing(setup, 100000, 1);
    CHECK(s.language_correct_rate == Catch::Approx(0.8499).margin(0.01));
    CHECK(s.fully_correct_rate == Catch::Approx(0.8499 * 0.7441).margin(0.01));
  }
  SECTION("invalid inputs rejected") {
    RoutingSetup setup;
    setup.lid = ConfusionMatrix::diagonal({"en"}, 1.0);
    setup.accents["fr"] = ConfusionMatrix::diagonal({"x"}, 1.0);  // unknown language
    CHECK_THROWS_AS(simulate_routing(setup, 10, 1), Error);
  }
}

TEST_CASE("measure_resources with an in-process pipeline") {
  // tiny stub service; see test_service.cpp for the full version
  TempDir dir;
  using testutil::zero_weights;
  save_weights(dir / "lid", zero_weights(40, 4, 2, {"en", "ta"}, {3.0f, 0.0f}));
  testutil::write_file(dir / "m.model", "x");
  ServiceConfig cfg;
  cfg.identify.languages = {"en", "ta"};
  cfg.identify.accents["en"] = {"default"};
  cfg.identify.accents["ta"] = {"default"};
  cfg.identify.lid_bundle = dir / "lid";
  cfg.identify.policy.accent_fallback = {{"en", "default"}, {"ta", "default"}};
  cfg.backend.mock_transcripts[{"en", "default"}] = "ok";
  cfg.models.push_back({{"en", "default"}, dir / "m.model", 10.0, "mock"});
  cfg.validate();
  Pipeline pipeline(cfg);

  std::filesystem::create_directories(dir / "workload");
  for (int i = 0; i < 3; ++i) {
    const auto wav = encode_wav(testutil::speechy_clip(16000, 1.0, 100 + i));
    std::ofstream out(dir / ("workload/u" + std::to_string(i) + ".wav"),
                      std::ios::binary);
    out.write(reinterpret_cast<const char*>(wav.data()),
              static_cast<std::streamsize>(wav.size()));
  }

  SECTION("one run collects one latency sample per utterance") {
    const ResourceReport report =
        measure_resources(dir / "workload", &pipeline, 1);
    REQUIRE(report.runs.size() == 1);
    CHECK(report.runs[0].latency_ms.size() == 3);
    CHECK(report.runs[0].cpu_core_seconds >= 0.0);
    CHECK(report.runs[0].peak_resident_memory_bytes > 0);
    REQUIRE(report.p95_latency_ms.has_value());
    CHECK(*report.p95_latency_ms >= *report.p50_latency_ms);
  }
  SECTION("repetitions produce independent series") {
    const ResourceReport report =
        measure_resources(dir / "workload", &pipeline, 3);
    REQUIRE(report.runs.size() == 3);
    for (const auto& run : report.runs) CHECK(run.latency_ms.size() == 3);
  }
  SECTION("empty workload directory errors") {
    std::filesystem::create_directories(dir / "empty");
    try {
      measure_resources(dir / "empty", &pipeline, 1);
      FAIL("expected EmptyWorkload");
    } catch (const Error& e) {
      CHECK(e.code() == Err::EmptyWorkload);
    }
  }
}

TEST_CASE("report emission") {
  TempDir dir;
  SECTION("storage/memory table renders the documented CSV row") {
    StorageMemoryTable table;
    table.rows.push_back({"Dyn-ASR", 317, 775});
    table.rows.push_back({"VS-EN", 3200, 3049});
    const std::string csv = render_report(table, ReportFormat::Csv);
    CHECK(csv == "system,storage_mb,memory_mb\nDyn-ASR,317,775\nVS-EN,3200,3049\n");
  }
  SECTION("empty latency summary is null, not zero") {
    ResourceReport report;
    report.runs.push_back({});  // a run with no samples
    const std::string json = render_report(report, ReportFormat::Json);
    const auto doc = nlohmann::json::parse(json);
    CHECK(doc.at("summary").at("mean_latency_ms").is_null());
    CHECK(doc.at("summary").at("p95_latency_ms").is_null());
    const std::string csv = render_report(report, ReportFormat::Csv);
    CHECK(csv.find(",,,") != std::string::npos);
  }
  SECTION("emission is deterministic byte for byte") {
    SelectionStats stats{100000, 0.8499, 0.6324, 0.003};
    emit_report(stats, ReportFormat::Json, dir / "a.json");
    emit_report(stats, ReportFormat::Json, dir / "b.json");
    std::ifstream a(dir / "a.json"), b(dir / "b.json");
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
    CHECK(!sa.empty());
  }
  SECTION("simulation report carries the independence assumption") {
    SelectionStats stats{1000, 0.9, 0.8, 0.01};
    const std::string json = render_report(stats, ReportFormat::Json);
    CHECK(json.find("independent") != std::string::npos);
    const std::string csv = render_report(stats, ReportFormat::Csv);
    CHECK(csv.find("# assumption:") == 0);
  }
}
