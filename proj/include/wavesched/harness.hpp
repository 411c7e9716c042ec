#pragma once

// Synthetic segment tasks, single-run setup, and experiment sweeps with CSV
// summaries.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "wavesched/decode.hpp"
#include "wavesched/denoise.hpp"
#include "wavesched/errors.hpp"
#include "wavesched/external.hpp"
#include "wavesched/hash.hpp"
#include "wavesched/metrics.hpp"
#include "wavesched/sched.hpp"
#include "wavesched/trace.hpp"
#include "wavesched/trace_io.hpp"

namespace wavesched {

struct SegmentTask {
  GenSequence target;
  std::vector<Segment> segments;
  std::int64_t seed = 0;

  [[nodiscard]] std::vector<TokenId> tokens() const { return *target.target; }

  [[nodiscard]] std::vector<std::size_t> segment_of() const {
    std::vector<std::size_t> out(target.size());
    for (std::size_t i = 0; i < segments.size(); ++i)
      for (std::size_t p = 0; p < segments[i].length; ++p) out[segments[i].start + p] = i;
    return out;
  }
};

/// Tiles [0, n) with segments whose lengths are drawn from
/// [min_len, max_len]; the last segment is truncated to fit.
inline SegmentTask gen_task(std::size_t n, std::uint32_t vocab_size, std::size_t min_len,
                            std::size_t max_len, std::int64_t seed) {
  if (n < 1) throw DomainError("gen_task: N must be >= 1");
  if (vocab_size < 2) throw DomainError("gen_task: V must be >= 2");
  if (min_len < 1 || min_len > max_len || max_len > n) {
    throw DomainError("gen_task: need 1 <= min_len <= max_len <= N");
  }
  using hashing::Tag;
  SegmentTask task;
  task.seed = seed;
  const std::uint64_t span = max_len - min_len + 1;
  for (std::size_t start = 0, i = 0; start < n; ++i) {
    std::size_t len = min_len + hashing::hash(seed, Tag::SegmentLength, i, 0) % span;
    len = std::min(len, n - start);
    task.segments.push_back(Segment{start, len});
    start += len;
  }
  std::vector<TokenId> tokens(n);
  for (Position p = 0; p < n; ++p) {
    tokens[p] = TokenId{static_cast<std::uint32_t>(hashing::hash(seed, Tag::TaskToken, p, 0) % vocab_size)};
  }
  task.target = GenSequence::from_tokens(tokens);
  return task;
}

struct TaskParams {
  std::uint32_t vocab_size = 64;
  std::size_t min_segment = 3;
  std::size_t max_segment = 20;
};

inline std::unique_ptr<Denoiser> make_denoiser(const DenoiserSpec& spec, std::int64_t seed,
                                               const std::vector<TokenId>& target,
                                               const std::vector<std::size_t>& segment_of,
                                               const ExternalOptions& ext = {}) {
  switch (spec.kind) {
    case DenoiserKind::Uniform:
      return std::make_unique<UniformDenoiser>(seed, spec.vocab_size);
    case DenoiserKind::Oracle:
      return std::make_unique<OracleDenoiser>(spec.oracle, target, segment_of, spec.vocab_size, seed);
    case DenoiserKind::External:
      return std::make_unique<ExternalDenoiser>(spec.command, seed, spec.vocab_size, ext);
  }
  throw DomainError("unknown denoiser kind");
}

inline std::vector<std::size_t> segment_map(std::size_t n, const std::vector<Segment>& segments) {
  if (segments.empty()) return {};
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < segments.size(); ++i)
    for (std::size_t p = 0; p < segments[i].length && segments[i].start + p < n; ++p)
      out[segments[i].start + p] = i;
  return out;
}

struct RunSetup {
  ScheduleConfig config;
  DenoiserSpec denoiser;
  TaskParams task;
  ExternalOptions external;
};

/// Decodes against an already generated task and stamps the trace header.
inline RunTrace run_on_task(const ScheduleConfig& cfg, const DenoiserSpec& den,
                            const std::vector<TokenId>& target,
                            const std::vector<Segment>& segments,
                            const ExternalOptions& ext = {}) {
  auto denoiser = make_denoiser(den, cfg.seed, target, segment_map(cfg.length, segments), ext);
  RunTrace trace = run_decode(cfg, *denoiser);
  trace.denoiser = den;
  trace.target = target;
  trace.segments = segments;
  return trace;
}

/// Generates the task for `setup.config.seed` and decodes it.
inline RunTrace execute_run(const RunSetup& setup) {
  setup.config.validate();
  const SegmentTask task =
      gen_task(setup.config.length, setup.task.vocab_size,
               std::min(setup.task.min_segment, setup.config.length),
               std::min(setup.task.max_segment, setup.config.length), setup.config.seed);
  DenoiserSpec den = setup.denoiser;
  den.vocab_size = setup.task.vocab_size;
  return run_on_task(setup.config, den, task.tokens(), task.segments, setup.external);
}

// --- experiments -----------------------------------------------------------

struct GridCell {
  std::size_t wave_size = 8;
  std::size_t radius = 2;

  friend auto operator<=>(const GridCell&, const GridCell&) = default;
};

struct ExperimentSpec {
  std::size_t length = 128;
  std::size_t steps = 32;
  std::size_t block_size = 8;
  TaskParams task;
  std::vector<Strategy> strategies{Strategy::Standard, Strategy::Block, Strategy::Wavefront};
  std::vector<GridCell> cells{GridCell{}};
  ExpandRule expand = ExpandRule::SetDefinition;
  OutsideRule outside = OutsideRule::PreStep;
  DenoiserSpec denoiser;
  std::vector<std::int64_t> seeds;
  std::string output_dir;
  bool write_traces = true;

  void validate() const {
    if (strategies.empty()) throw DomainError("experiment: strategy list is empty");
    if (seeds.empty()) throw DomainError("experiment: seed list is empty");
    if (cells.empty()) throw DomainError("experiment: schedule grid is empty");
  }

  /// Standard sweep grid: F in {4, 8, 16} at R = 2, and R in {2, 4, 8} at F = 8.
  static std::vector<GridCell> hyperparameter_grid() {
    return {{4, 2}, {8, 2}, {16, 2}, {8, 4}, {8, 8}};
  }
};

namespace detail {

template <typename T>
T opt(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys,
                           const char* where) {
  if (!j.is_object()) throw DomainError(std::string(where) + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* x) { return k == x; }) == keys.end()) {
      throw DomainError(std::string(where) + ": unknown key '" + k + "'");
    }
  }
}

}  // namespace detail

/// Parses the JSON experiment spec; see experiments/*.json for examples.
inline ExperimentSpec parse_experiment_spec(const nlohmann::json& j) {
  using detail::opt;
  using detail::reject_unknown;
  ExperimentSpec s;
  try {
    reject_unknown(j, {"task", "schedule", "denoiser", "seeds", "output_dir", "write_traces"}, "spec");
    if (j.contains("task")) {
      const auto& t = j.at("task");
      reject_unknown(t, {"n", "vocab_size", "min_segment", "max_segment"}, "task");
      s.length = opt<std::size_t>(t, "n", s.length);
      s.task.vocab_size = opt<std::uint32_t>(t, "vocab_size", s.task.vocab_size);
      s.task.min_segment = opt<std::size_t>(t, "min_segment", s.task.min_segment);
      s.task.max_segment = opt<std::size_t>(t, "max_segment", s.task.max_segment);
    }
    if (j.contains("schedule")) {
      const auto& g = j.at("schedule");
      reject_unknown(g, {"strategies", "t", "b", "f", "r", "cells", "expand", "nout"}, "schedule");
      s.steps = opt<std::size_t>(g, "t", s.steps);
      s.block_size = opt<std::size_t>(g, "b", s.block_size);
      if (g.contains("strategies")) {
        s.strategies.clear();
        for (const auto& name : g.at("strategies")) s.strategies.push_back(parse_strategy(name.get<std::string>()));
      }
      if (g.contains("cells")) {
        s.cells.clear();
        for (const auto& c : g.at("cells")) {
          reject_unknown(c, {"f", "r"}, "cell");
          s.cells.push_back(GridCell{c.at("f").get<std::size_t>(), c.at("r").get<std::size_t>()});
        }
      } else if (g.contains("f") || g.contains("r")) {
        const auto fs = opt<std::vector<std::size_t>>(g, "f", {8});
        const auto rs = opt<std::vector<std::size_t>>(g, "r", {2});
        s.cells.clear();
        for (auto f : fs)
          for (auto r : rs) s.cells.push_back(GridCell{f, r});
      }
      if (g.contains("expand")) s.expand = parse_expand_rule(g.at("expand").get<std::string>());
      if (g.contains("nout")) s.outside = parse_outside_rule(g.at("nout").get<std::string>());
    }
    if (j.contains("denoiser")) {
      const auto& d = j.at("denoiser");
      reject_unknown(d, {"kind", "oracle", "command"}, "denoiser");
      s.denoiser.kind = parse_denoiser_kind(opt<std::string>(d, "kind", "oracle"));
      if (d.contains("oracle")) {
        const auto& o = d.at("oracle");
        reject_unknown(o, {"base", "gain", "window", "noise_amp", "segment_discount", "prompt_context"},
                       "oracle");
        auto& p = s.denoiser.oracle;
        p.base = opt<double>(o, "base", p.base);
        p.gain = opt<double>(o, "gain", p.gain);
        p.window = opt<std::size_t>(o, "window", p.window);
        p.noise_amp = opt<double>(o, "noise_amp", p.noise_amp);
        p.segment_discount = opt<double>(o, "segment_discount", p.segment_discount);
        p.prompt_context = opt<bool>(o, "prompt_context", p.prompt_context);
        p.validate();
      }
      if (d.contains("command")) s.denoiser.command = d.at("command").get<std::vector<std::string>>();
    }
    if (j.contains("seeds")) {
      const auto& sd = j.at("seeds");
      if (sd.is_array()) {
        s.seeds = sd.get<std::vector<std::int64_t>>();
      } else {
        reject_unknown(sd, {"from", "count"}, "seeds");
        const auto from = opt<std::int64_t>(sd, "from", 0);
        const auto count = sd.at("count").get<std::int64_t>();
        for (std::int64_t i = 0; i < count; ++i) s.seeds.push_back(from + i);
      }
    }
    s.output_dir = opt<std::string>(j, "output_dir", "");
    s.write_traces = opt<bool>(j, "write_traces", true);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("experiment spec: ") + e.what());
  }
  s.denoiser.vocab_size = s.task.vocab_size;
  s.validate();
  return s;
}

struct SummaryRow {
  Strategy strategy = Strategy::Wavefront;
  std::size_t wave_size = 0;
  std::size_t radius = 0;
  std::size_t block_size = 0;
  std::int64_t seed = 0;
  double exact_match = std::numeric_limits<double>::quiet_NaN();
  double mean_mhco = std::numeric_limits<double>::quiet_NaN();
  std::size_t forward_passes = 0;
  std::size_t token_updates = 0;
  double wall_ms = 0.0;
  std::string status = "completed";
  std::size_t violations = 0;
  std::string error;
  std::string trace_file;
};

struct Stat {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stddev = std::numeric_limits<double>::quiet_NaN();
};

/// Mean and sample standard deviation (n - 1); stddev is 0 for one value.
inline Stat describe(const std::vector<double>& xs) {
  Stat s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() == 1) {
    s.stddev = 0.0;
    return s;
  }
  double sq = 0.0;
  for (double x : xs) sq += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(xs.size() - 1));
  return s;
}

struct AggregateRow {
  Strategy strategy = Strategy::Wavefront;
  std::size_t wave_size = 0;
  std::size_t radius = 0;
  std::size_t block_size = 0;
  std::size_t runs = 0;
  std::size_t failures = 0;
  Stat exact_match;
  Stat mean_mhco;
  Stat forward_passes;
  Stat token_updates;
};

struct ExperimentSummary {
  std::vector<SummaryRow> rows;
  std::vector<AggregateRow> aggregates;
};

/// Row metrics as recomputed from a trace. Used for the summary and for
/// round-trip checks against trace files.
inline SummaryRow row_from_trace(const RunTrace& trace) {
  SummaryRow row;
  const auto& c = trace.config;
  row.strategy = c.strategy;
  row.wave_size = c.wave_size;
  row.radius = c.radius;
  row.block_size = c.block_size;
  row.seed = c.seed;
  const RunMetric m = accounting(trace);
  row.exact_match = m.exact_match;
  row.mean_mhco = trace.steps.empty() ? m.mean_mhco : mhco_run(trace);
  row.forward_passes = m.total_forward_passes;
  row.token_updates = m.total_token_updates;
  row.status = trace.completed() ? "completed" : "aborted";
  row.violations = m.violations.size();
  row.error = trace.error;
  return row;
}

inline std::vector<AggregateRow> aggregate(const std::vector<SummaryRow>& rows) {
  using Key = std::tuple<int, std::size_t, std::size_t, std::size_t>;
  std::map<Key, std::vector<const SummaryRow*>> groups;
  for (const auto& r : rows) {
    groups[{static_cast<int>(r.strategy), r.wave_size, r.radius, r.block_size}].push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (const auto& [key, members] : groups) {
    AggregateRow a;
    a.strategy = members.front()->strategy;
    a.wave_size = members.front()->wave_size;
    a.radius = members.front()->radius;
    a.block_size = members.front()->block_size;
    a.runs = members.size();
    std::vector<double> em, mh, fp, tu;
    for (const auto* r : members) {
      if (r->status != "completed") {
        ++a.failures;
        continue;
      }
      em.push_back(r->exact_match);
      mh.push_back(r->mean_mhco);
      fp.push_back(static_cast<double>(r->forward_passes));
      tu.push_back(static_cast<double>(r->token_updates));
    }
    a.exact_match = describe(em);
    a.mean_mhco = describe(mh);
    a.forward_passes = describe(fp);
    a.token_updates = describe(tu);
    out.push_back(a);
  }
  return out;
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string trace_file_name(const ScheduleConfig& c) {
  std::ostringstream os;
  os << to_string(c.strategy) << "_f" << c.wave_size << "_r" << c.radius << "_b" << c.block_size
     << "_s" << c.seed << ".jsonl";
  return os.str();
}

inline constexpr const char* kSummaryHeader =
    "strategy,F,R,B,seed,exact_match,mean_mhco,forward_passes,token_updates,wall_ms,status,"
    "violations,error";

inline constexpr const char* kAggregateHeader =
    "strategy,F,R,B,runs,failures,exact_match_mean,exact_match_std,mean_mhco_mean,mean_mhco_std,"
    "forward_passes_mean,forward_passes_std,token_updates_mean,token_updates_std";

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else if (ch == '\n') out += ' ';
    else out += ch;
  }
  return out + "\"";
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  os << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    os << to_string(r.strategy) << ',' << r.wave_size << ',' << r.radius << ',' << r.block_size
       << ',' << r.seed << ',' << format_double(r.exact_match) << ','
       << format_double(r.mean_mhco) << ',' << r.forward_passes << ',' << r.token_updates << ','
       << format_double(r.wall_ms) << ',' << r.status << ',' << r.violations << ','
       << csv_escape(r.error) << '\n';
  }
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << kAggregateHeader << '\n';
  for (const auto& a : rows) {
    os << to_string(a.strategy) << ',' << a.wave_size << ',' << a.radius << ',' << a.block_size
       << ',' << a.runs << ',' << a.failures << ',' << format_double(a.exact_match.mean) << ','
       << format_double(a.exact_match.stddev) << ',' << format_double(a.mean_mhco.mean) << ','
       << format_double(a.mean_mhco.stddev) << ',' << format_double(a.forward_passes.mean) << ','
       << format_double(a.forward_passes.stddev) << ',' << format_double(a.token_updates.mean)
       << ',' << format_double(a.token_updates.stddev) << '\n';
  }
}

/// Runs every (strategy, cell, seed) combination. Failures are recorded in
/// their row and do not stop the sweep. Rows come back sorted by
/// (strategy, F, R, seed) regardless of worker count.
inline ExperimentSummary run_experiment(const ExperimentSpec& spec, unsigned workers = 1) {
  spec.validate();
  std::vector<ScheduleConfig> jobs;
  for (Strategy st : spec.strategies) {
    for (const GridCell& cell : spec.cells) {
      for (std::int64_t seed : spec.seeds) {
        ScheduleConfig c;
        c.length = spec.length;
        c.steps = spec.steps;
        c.wave_size = cell.wave_size;
        c.radius = cell.radius;
        c.block_size = spec.block_size;
        c.strategy = st;
        c.seed = seed;
        c.expand = spec.expand;
        c.outside = spec.outside;
        jobs.push_back(c);
      }
    }
  }

  std::filesystem::path trace_dir;
  if (!spec.output_dir.empty() && spec.write_traces) {
    trace_dir = std::filesystem::path(spec.output_dir) / "traces";
    std::filesystem::create_directories(trace_dir);
  }

  ExperimentSummary summary;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const ScheduleConfig& cfg = jobs[i];
      SummaryRow row;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        RunSetup setup{cfg, spec.denoiser, spec.task, {}};
        RunTrace trace = execute_run(setup);
        row = row_from_trace(trace);
        if (!trace_dir.empty()) {
          row.trace_file = (trace_dir / trace_file_name(cfg)).string();
          write_trace_file(row.trace_file, trace);
        }
      } catch (const std::exception& e) {
        row.strategy = cfg.strategy;
        row.wave_size = cfg.wave_size;
        row.radius = cfg.radius;
        row.block_size = cfg.block_size;
        row.seed = cfg.seed;
        row.status = "failed";
        row.error = e.what();
      }
      row.wall_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      std::lock_guard lock(mu);
      summary.rows.push_back(std::move(row));
    }
  };

  const unsigned n_workers = std::max(1u, workers);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }

  std::sort(summary.rows.begin(), summary.rows.end(), [](const SummaryRow& a, const SummaryRow& b) {
    return std::tie(a.strategy, a.wave_size, a.radius, a.seed) <
           std::tie(b.strategy, b.wave_size, b.radius, b.seed);
  });
  summary.aggregates = aggregate(summary.rows);

  if (!spec.output_dir.empty()) {
    std::filesystem::create_directories(spec.output_dir);
    std::ofstream rows(std::filesystem::path(spec.output_dir) / "summary.csv");
    write_summary_csv(rows, summary.rows);
    std::ofstream agg(std::filesystem::path(spec.output_dir) / "aggregate.csv");
    write_aggregate_csv(agg, summary.aggregates);
  }
  return summary;
}

}  // namespace wavesched
