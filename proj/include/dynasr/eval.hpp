// SPDX-License-Identifier: Apache-2.0
//
// Evaluation machinery: word error rate with a deterministic edit-path
// decomposition, pooled per-accent tables, Monte Carlo routing-accuracy
// simulation, and a resource/latency measurement harness.

#pragma once

#include <sys/resource.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "dynasr/error.hpp"
#include "dynasr/pipeline.hpp"

namespace dynasr {

// ---------------------------------------------------------------------------
// Word error rate
// ---------------------------------------------------------------------------

struct WerResult {
  size_t substitutions = 0;
  size_t deletions = 0;
  size_t insertions = 0;
  size_t reference_words = 0;
  double wer = 0.0;  // (S+D+I)/reference_words; may exceed 1

  size_t errors() const { return substitutions + deletions + insertions; }
};

// Lowercases (ASCII), strips leading/trailing punctuation per token, splits
// on whitespace.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    size_t b = 0, e = cur.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(cur[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(cur[e - 1]))) --e;
    if (e > b) tokens.push_back(cur.substr(b, e - b));
    cur.clear();
  };
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  flush();
  return tokens;
}

// Word-level minimum edit distance with unit costs. Among co-optimal
// alignments the decomposition with the most substitutions is reported
// (equivalently: fewest insertions; D - I is fixed by the length difference),
// matching a traceback that prefers substitution over deletion over insertion.
inline WerResult wer_tokens(const std::vector<std::string>& ref,
                            const std::vector<std::string>& hyp) {
  const size_t n = ref.size(), m = hyp.size();
  if (n == 0 && m > 0)
    raise(Err::EmptyReference, "empty reference with non-empty hypothesis");

  struct Cell {
    uint32_t cost = 0, s = 0, d = 0, i = 0;
  };
  std::vector<Cell> dp((n + 1) * (m + 1));
  auto at = [&](size_t i, size_t j) -> Cell& { return dp[i * (m + 1) + j]; };
  for (size_t j = 1; j <= m; ++j)
    at(0, j) = {static_cast<uint32_t>(j), 0, 0, static_cast<uint32_t>(j)};
  for (size_t i = 1; i <= n; ++i)
    at(i, 0) = {static_cast<uint32_t>(i), 0, static_cast<uint32_t>(i), 0};

  auto better = [](const Cell& a, const Cell& b) {
    return a.cost != b.cost ? a.cost < b.cost : a.i < b.i;  // min cost, then max S
  };
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      const bool match = ref[i - 1] == hyp[j - 1];
      Cell diag = at(i - 1, j - 1);
      if (!match) {
        diag.cost++;
        diag.s++;
      }
      Cell del = at(i - 1, j);
      del.cost++;
      del.d++;
      Cell ins = at(i, j - 1);
      ins.cost++;
      ins.i++;
      Cell best = diag;  // substitution preferred on ties
      if (better(del, best)) best = del;
      if (better(ins, best)) best = ins;
      at(i, j) = best;
    }
  }

  const Cell& final_cell = at(n, m);
  WerResult r;
  r.substitutions = final_cell.s;
  r.deletions = final_cell.d;
  r.insertions = final_cell.i;
  r.reference_words = n;
  r.wer = n == 0 ? 0.0 : static_cast<double>(r.errors()) / static_cast<double>(n);
  return r;
}

inline WerResult wer(std::string_view reference, std::string_view hypothesis) {
  return wer_tokens(tokenize(reference), tokenize(hypothesis));
}

// ---------------------------------------------------------------------------
// Pooled per-accent WER table (accent rows, system columns)
// ---------------------------------------------------------------------------

struct WerTable {
  std::vector<std::string> accents;        // row order = first appearance
  std::vector<std::string> systems;        // column order
  std::vector<std::vector<double>> wer_percent;  // [accent][system]
  std::vector<std::vector<WerResult>> pooled;    // same layout
};

struct WerPair {
  std::string accent;
  std::string reference;
  std::string hypothesis;
};

// Pooled WER per accent: error counts summed over the accent's utterances
// before dividing by the summed reference words.
inline std::vector<std::pair<std::string, WerResult>> aggregate_wer(
    const std::vector<WerPair>& pairs) {
  std::vector<std::string> order;
  std::map<std::string, WerResult> pool;
  for (const auto& p : pairs) {
    if (!pool.count(p.accent)) {
      order.push_back(p.accent);
      pool[p.accent] = WerResult{};
    }
    const WerResult one = wer(p.reference, p.hypothesis);
    WerResult& acc = pool[p.accent];
    acc.substitutions += one.substitutions;
    acc.deletions += one.deletions;
    acc.insertions += one.insertions;
    acc.reference_words += one.reference_words;
  }
  std::vector<std::pair<std::string, WerResult>> out;
  for (const auto& accent : order) {
    WerResult& r = pool[accent];
    r.wer = r.reference_words == 0
                ? 0.0
                : static_cast<double>(r.errors()) / static_cast<double>(r.reference_words);
    out.emplace_back(accent, r);
  }
  return out;
}

inline WerTable make_wer_table(
    const std::vector<std::pair<std::string, std::vector<std::pair<std::string, WerResult>>>>&
        systems) {
  WerTable table;
  for (const auto& [system, rows] : systems) {
    table.systems.push_back(system);
    for (const auto& [accent, result] : rows) {
      if (std::find(table.accents.begin(), table.accents.end(), accent) ==
          table.accents.end())
        table.accents.push_back(accent);
    }
  }
  table.wer_percent.assign(table.accents.size(),
                           std::vector<double>(table.systems.size(), 0.0));
  table.pooled.assign(table.accents.size(),
                      std::vector<WerResult>(table.systems.size()));
  for (size_t s = 0; s < systems.size(); ++s) {
    for (const auto& [accent, result] : systems[s].second) {
      const size_t row = static_cast<size_t>(
          std::find(table.accents.begin(), table.accents.end(), accent) -
          table.accents.begin());
      table.wer_percent[row][s] = result.wer * 100.0;
      table.pooled[row][s] = result;
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Routing-accuracy Monte Carlo simulation
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> rows;  // rows[i][j] = P(pred j | true i)

  void validate() const {
    if (labels.empty() || rows.size() != labels.size())
      raise(Err::InvalidMatrix, "matrix must be square over its labels");
    for (const auto& row : rows) {
      if (row.size() != labels.size())
        raise(Err::InvalidMatrix, "matrix must be square over its labels");
      double sum = 0.0;
      for (double p : row) {
        if (p < 0.0 || !std::isfinite(p))
          raise(Err::InvalidMatrix, "entries must be finite and >= 0");
        sum += p;
      }
      if (std::fabs(sum - 1.0) > 1e-9)
        raise(Err::InvalidMatrix, "row must sum to 1, got " + std::to_string(sum));
    }
  }

  size_t index_of(const std::string& label) const {
    for (size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return i;
    raise(Err::InvalidMatrix, "label '" + label + "' not in matrix");
  }

  // diagonal accuracy with the remaining mass spread uniformly off-diagonal
  static ConfusionMatrix diagonal(std::vector<std::string> labels, double accuracy) {
    ConfusionMatrix m;
    m.labels = std::move(labels);
    const size_t k = m.labels.size();
    if (k == 0) raise(Err::InvalidMatrix, "no labels");
    const double off = k > 1 ? (1.0 - accuracy) / static_cast<double>(k - 1) : 0.0;
    m.rows.assign(k, std::vector<double>(k, off));
    for (size_t i = 0; i < k; ++i) m.rows[i][i] = k > 1 ? accuracy : 1.0;
    return m;
  }
};

struct SelectionStats {
  uint64_t trials = 0;
  double language_correct_rate = 0.0;
  double fully_correct_rate = 0.0;
  double confidence_interval_95 = 0.0;  // half-width, for fully_correct_rate
};

struct RoutingSetup {
  ConfusionMatrix lid;
  std::map<std::string, ConfusionMatrix> accents;  // per language; absent = 1-accent identity
  std::vector<std::string> true_languages;         // empty = all LID labels
};

namespace eval_detail {

// Deterministic uniform double in [0, 1); identical across platforms.
inline double next_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline size_t sample_row(const std::vector<double>& row, double u) {
  double acc = 0.0;
  for (size_t i = 0; i < row.size(); ++i) {
    acc += row[i];
    if (u < acc) return i;
  }
  return row.size() - 1;  // guard against rounding at the tail
}

}  // namespace eval_detail

// Draws a true (language, accent) pair per trial — language uniform over the
// configured set, accent uniform within the language — then samples the
// predicted language and, when the language was correct, the predicted
// accent. LID and accent errors are treated as independent, which is the
// assumption behind composing the marginal accuracies.
inline SelectionStats simulate_routing(const RoutingSetup& setup, uint64_t trials,
                                       uint64_t seed) {
  if (trials < 1) raise(Err::InvalidMatrix, "trials must be >= 1");
  setup.lid.validate();
  for (const auto& [lang, m] : setup.accents) {
    m.validate();
    setup.lid.index_of(lang);  // must be a known language
  }
  std::vector<std::string> universe =
      setup.true_languages.empty() ? setup.lid.labels : setup.true_languages;
  for (const auto& lang : universe) setup.lid.index_of(lang);

  static const ConfusionMatrix kSingle = ConfusionMatrix::diagonal({"default"}, 1.0);
  std::mt19937_64 rng(seed);
  uint64_t lang_correct = 0, fully_correct = 0;
  for (uint64_t t = 0; t < trials; ++t) {
    const size_t lang_pick = std::min<size_t>(
        static_cast<size_t>(eval_detail::next_unit(rng) * universe.size()),
        universe.size() - 1);
    const std::string& true_lang = universe[lang_pick];
    const auto accent_it = setup.accents.find(true_lang);
    const ConfusionMatrix& accent_m =
        accent_it == setup.accents.end() ? kSingle : accent_it->second;
    const size_t true_accent = std::min<size_t>(
        static_cast<size_t>(eval_detail::next_unit(rng) * accent_m.labels.size()),
        accent_m.labels.size() - 1);

    const size_t true_lang_idx = setup.lid.index_of(true_lang);
    const size_t pred_lang =
        eval_detail::sample_row(setup.lid.rows[true_lang_idx], eval_detail::next_unit(rng));
    if (pred_lang != true_lang_idx) continue;
    lang_correct++;
    const size_t pred_accent = eval_detail::sample_row(accent_m.rows[true_accent],
                                                       eval_detail::next_unit(rng));
    if (pred_accent == true_accent) fully_correct++;
  }

  SelectionStats stats;
  stats.trials = trials;
  stats.language_correct_rate =
      static_cast<double>(lang_correct) / static_cast<double>(trials);
  stats.fully_correct_rate =
      static_cast<double>(fully_correct) / static_cast<double>(trials);
  const double p = stats.fully_correct_rate;
  stats.confidence_interval_95 =
      1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  return stats;
}

// ---------------------------------------------------------------------------
// Resource measurement harness
// ---------------------------------------------------------------------------

struct ResourceReport {
  struct Series {
    double cpu_core_seconds = 0.0;
    uint64_t peak_resident_memory_bytes = 0;
    std::vector<double> latency_ms;
  };
  std::vector<Series> runs;
  std::optional<double> mean_latency_ms;
  std::optional<double> p50_latency_ms;
  std::optional<double> p95_latency_ms;
  uint64_t peak_resident_memory_bytes = 0;
};

// either an in-process pipeline or a remote /v1/recognize endpoint
using BenchTarget = std::variant<Pipeline*, std::string>;

namespace eval_detail {

inline uint64_t current_rss_bytes() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmRSS:", 0) == 0) {
      uint64_t kb = 0;
      std::sscanf(line.c_str(), "VmRSS: %lu", &kb);
      return kb * 1024;
    }
  }
  return 0;
}

inline double cpu_seconds() {
  struct rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  auto tv = [](const timeval& t) {
    return static_cast<double>(t.tv_sec) + static_cast<double>(t.tv_usec) * 1e-6;
  };
  return tv(ru.ru_utime) + tv(ru.ru_stime);
}

// Samples resident memory at >= 10 Hz for the lifetime of the object.
class RssSampler {
 public:
  RssSampler() {
    thread_ = std::thread([this] {
      while (!stop_.load(std::memory_order_relaxed)) {
        peak_ = std::max(peak_, current_rss_bytes());
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
      }
      peak_ = std::max(peak_, current_rss_bytes());
    });
  }
  ~RssSampler() {
    if (thread_.joinable()) {
      stop_.store(true);
      thread_.join();
    }
  }
  uint64_t finish() {
    stop_.store(true);
    thread_.join();
    return peak_;
  }

 private:
  std::thread thread_;
  std::atomic<bool> stop_{false};
  uint64_t peak_ = 0;
};

inline double nearest_rank(const std::vector<double>& sorted, double q) {
  const size_t n = sorted.size();
  const size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(n)));
  return sorted[std::min(n - 1, rank > 0 ? rank - 1 : 0)];
}

}  // namespace eval_detail

inline ResourceReport measure_resources(const std::filesystem::path& workload_dir,
                                        BenchTarget target, int repetitions = 1) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(workload_dir))
    raise(Err::EmptyWorkload, workload_dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(workload_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) raise(Err::EmptyWorkload, "no .wav files in " + workload_dir.string());
  if (repetitions < 1) repetitions = 1;

  ResourceReport report;
  for (int rep = 0; rep < repetitions; ++rep) {
    ResourceReport::Series series;
    eval_detail::RssSampler sampler;
    const double cpu0 = eval_detail::cpu_seconds();
    for (const auto& file : files) {
      std::ifstream in(file, std::ios::binary);
      std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
      const auto t0 = std::chrono::steady_clock::now();
      if (std::holds_alternative<Pipeline*>(target)) {
        std::get<Pipeline*>(target)->recognize(bytes);
      } else {
        const std::string& url = std::get<std::string>(target);
        httplib::Client client(url);
        client.set_read_timeout(60, 0);
        auto res = client.Post("/v1/recognize",
                               reinterpret_cast<const char*>(bytes.data()),
                               bytes.size(), "audio/wav");
        if (!res)
          raise(Err::TargetUnreachable, url + ": no response");
        if (res->status != 200)
          raise(Err::TargetUnreachable,
                url + ": HTTP " + std::to_string(res->status) + " for " +
                    file.filename().string());
      }
      series.latency_ms.push_back(
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
              .count());
    }
    series.cpu_core_seconds = eval_detail::cpu_seconds() - cpu0;
    series.peak_resident_memory_bytes = sampler.finish();
    report.runs.push_back(std::move(series));
  }

  std::vector<double> all;
  for (const auto& run : report.runs)
    all.insert(all.end(), run.latency_ms.begin(), run.latency_ms.end());
  if (!all.empty()) {
    std::sort(all.begin(), all.end());
    double sum = 0.0;
    for (double v : all) sum += v;
    report.mean_latency_ms = sum / static_cast<double>(all.size());
    report.p50_latency_ms = eval_detail::nearest_rank(all, 0.50);
    report.p95_latency_ms = eval_detail::nearest_rank(all, 0.95);
  }
  for (const auto& run : report.runs)
    report.peak_resident_memory_bytes =
        std::max(report.peak_resident_memory_bytes, run.peak_resident_memory_bytes);
  return report;
}

// ---------------------------------------------------------------------------
// Report emission (deterministic CSV / JSON)
// ---------------------------------------------------------------------------

struct StorageMemoryTable {
  struct Row {
    std::string system;
    double storage_mb = 0.0;
    double memory_mb = 0.0;
  };
  std::vector<Row> rows;
};

enum class ReportFormat { Csv, Json };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "json") return ReportFormat::Json;
  raise(Err::BadConfig, "format must be csv or json, got '" + s + "'");
}

namespace eval_detail {

inline std::string fmt_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// integral values print without a decimal point ("317", not "317.00")
inline std::string fmt_number(double v) {
  if (std::floor(v) == v && std::fabs(v) < 1e15)
    return std::to_string(static_cast<long long>(v));
  return fmt_fixed(v, 6);
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(Err::IoFailure, "cannot open " + path.string());
  out << content;
  if (!out) raise(Err::IoFailure, "write failed for " + path.string());
}

}  // namespace eval_detail

inline std::string render_report(const WerTable& table, ReportFormat format) {
  using namespace eval_detail;
  if (format == ReportFormat::Csv) {
    std::string out = "accent";
    for (const auto& sys : table.systems) out += "," + sys;
    out += "\n";
    for (size_t r = 0; r < table.accents.size(); ++r) {
      out += table.accents[r];
      for (size_t s = 0; s < table.systems.size(); ++s)
        out += "," + fmt_fixed(table.wer_percent[r][s], 2);
      out += "\n";
    }
    return out;
  }
  nlohmann::ordered_json doc;
  doc["systems"] = table.systems;
  doc["rows"] = nlohmann::ordered_json::array();
  for (size_t r = 0; r < table.accents.size(); ++r) {
    nlohmann::ordered_json row;
    row["accent"] = table.accents[r];
    for (size_t s = 0; s < table.systems.size(); ++s) {
      const WerResult& res = table.pooled[r][s];
      row[table.systems[s]] = {{"wer_percent", table.wer_percent[r][s]},
                               {"substitutions", res.substitutions},
                               {"deletions", res.deletions},
                               {"insertions", res.insertions},
                               {"reference_words", res.reference_words}};
    }
    doc["rows"].push_back(std::move(row));
  }
  return doc.dump(2) + "\n";
}

inline std::string render_report(const SelectionStats& stats, ReportFormat format) {
  using namespace eval_detail;
  static constexpr const char* kAssumption =
      "language and accent identification errors are independent";
  if (format == ReportFormat::Csv) {
    std::string out = "# assumption: ";
    out += kAssumption;
    out += "\ntrials,language_correct_rate,fully_correct_rate,confidence_interval_95\n";
    out += std::to_string(stats.trials) + "," + fmt_fixed(stats.language_correct_rate, 6) +
           "," + fmt_fixed(stats.fully_correct_rate, 6) + "," +
           fmt_fixed(stats.confidence_interval_95, 6) + "\n";
    return out;
  }
  nlohmann::ordered_json doc;
  doc["trials"] = stats.trials;
  doc["language_correct_rate"] = stats.language_correct_rate;
  doc["fully_correct_rate"] = stats.fully_correct_rate;
  doc["confidence_interval_95"] = stats.confidence_interval_95;
  doc["assumption"] = kAssumption;
  return doc.dump(2) + "\n";
}

inline std::string render_report(const ResourceReport& report, ReportFormat format) {
  using namespace eval_detail;
  if (format == ReportFormat::Csv) {
    std::string out =
        "run,cpu_core_seconds,peak_resident_memory_bytes,samples,mean_latency_ms,"
        "p50_latency_ms,p95_latency_ms\n";
    for (size_t i = 0; i < report.runs.size(); ++i) {
      const auto& run = report.runs[i];
      std::vector<double> sorted = run.latency_ms;
      std::sort(sorted.begin(), sorted.end());
      out += std::to_string(i) + "," + fmt_fixed(run.cpu_core_seconds, 3) + "," +
             std::to_string(run.peak_resident_memory_bytes) + "," +
             std::to_string(run.latency_ms.size());
      if (sorted.empty()) {
        out += ",,,";  // absent, not zero
      } else {
        double sum = 0.0;
        for (double v : sorted) sum += v;
        out += "," + fmt_fixed(sum / static_cast<double>(sorted.size()), 3) + "," +
               fmt_fixed(nearest_rank(sorted, 0.50), 3) + "," +
               fmt_fixed(nearest_rank(sorted, 0.95), 3);
      }
      out += "\n";
    }
    return out;
  }
  nlohmann::ordered_json doc;
  doc["runs"] = nlohmann::ordered_json::array();
  for (const auto& run : report.runs) {
    doc["runs"].push_back({{"cpu_core_seconds", run.cpu_core_seconds},
                           {"peak_resident_memory_bytes", run.peak_resident_memory_bytes},
                           {"latency_ms", run.latency_ms}});
  }
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  doc["summary"] = {{"mean_latency_ms", opt(report.mean_latency_ms)},
                    {"p50_latency_ms", opt(report.p50_latency_ms)},
                    {"p95_latency_ms", opt(report.p95_latency_ms)},
                    {"peak_resident_memory_bytes", report.peak_resident_memory_bytes}};
  return doc.dump(2) + "\n";
}

inline std::string render_report(const StorageMemoryTable& table, ReportFormat format) {
  using namespace eval_detail;
  if (format == ReportFormat::Csv) {
    std::string out = "system,storage_mb,memory_mb\n";
    for (const auto& row : table.rows)
      out += row.system + "," + fmt_number(row.storage_mb) + "," +
             fmt_number(row.memory_mb) + "\n";
    return out;
  }
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& row : table.rows)
    doc.push_back({{"system", row.system},
                   {"storage_mb", row.storage_mb},
                   {"memory_mb", row.memory_mb}});
  return doc.dump(2) + "\n";
}

template <typename Report>
inline void emit_report(const Report& report, ReportFormat format,
                        const std::filesystem::path& path) {
  eval_detail::write_file(path, render_report(report, format));
}

}  // namespace dynasr
