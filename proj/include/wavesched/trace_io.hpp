#pragma once

// JSON-lines trace files: one header object, one object per step, one footer.
// Keys are written in a fixed order and doubles in shortest round-trip form,
// so identical runs produce byte-identical files.

#include <cstddef>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wavesched/errors.hpp"
#include "wavesched/trace.hpp"

namespace wavesched {

inline constexpr int kTraceFormatVersion = 1;

namespace trace_json {

using ojson = nlohmann::ordered_json;

inline ojson positions(const auto& ps) {
  ojson a = ojson::array();
  for (Position p : ps) a.push_back(p);
  return a;
}

inline ojson tokens(const std::vector<TokenId>& ts) {
  ojson a = ojson::array();
  for (TokenId t : ts) a.push_back(t.value);
  return a;
}

inline ojson config(const ScheduleConfig& c) {
  return ojson{{"n", c.length},
               {"t", c.steps},
               {"f", c.wave_size},
               {"r", c.radius},
               {"b", c.block_size},
               {"strategy", to_string(c.strategy)},
               {"seed", c.seed},
               {"expand", to_string(c.expand)},
               {"nout", to_string(c.outside)},
               {"full_scores", c.full_scores}};
}

inline ojson oracle(const OracleParams& o) {
  return ojson{{"base", o.base},
               {"gain", o.gain},
               {"window", o.window},
               {"noise_amp", o.noise_amp},
               {"segment_discount", o.segment_discount},
               {"prompt_context", o.prompt_context}};
}

inline ojson denoiser(const DenoiserSpec& d) {
  ojson j{{"kind", to_string(d.kind)}, {"vocab_size", d.vocab_size}};
  if (d.kind == DenoiserKind::Oracle) j["oracle"] = oracle(d.oracle);
  if (d.kind == DenoiserKind::External) j["command"] = d.command;
  return j;
}

inline ojson header(const RunTrace& tr) {
  ojson segs = ojson::array();
  for (const auto& s : tr.segments) segs.push_back(ojson::array({s.start, s.length}));
  return ojson{{"type", "header"},
               {"format", "wavesched-trace"},
               {"version", kTraceFormatVersion},
               {"config", config(tr.config)},
               {"denoiser", denoiser(tr.denoiser)},
               {"task", ojson{{"target", tokens(tr.target)}, {"segments", segs}}}};
}

inline ojson scores(const std::vector<std::pair<Position, double>>& s) {
  ojson a = ojson::array();
  for (const auto& [p, v] : s) a.push_back(ojson::array({p, v}));
  return a;
}

inline ojson mhco(const StepMetric& m) { return m.mhco ? ojson(*m.mhco) : ojson(nullptr); }

inline ojson step(const StepRecord& r) {
  const auto& d = r.decision;
  return ojson{{"type", "step"},
               {"t", d.step},
               {"budget", d.budget},
               {"selected", positions(d.selected)},
               {"spilled", positions(d.spilled)},
               {"wavefront_before", positions(d.wavefront_before)},
               {"wavefront_after", positions(d.wavefront_after)},
               {"tokens", tokens(r.tokens)},
               {"mhco", mhco(r.metric)},
               {"forward_passes", r.metric.forward_passes_so_far},
               {"tokens_finalized", r.metric.tokens_finalized_so_far},
               {"scores", scores(r.scores)}};
}

inline ojson slots(const std::vector<Slot>& ss) {
  ojson a = ojson::array();
  for (const auto& s : ss) {
    if (s.masked()) a.push_back(nullptr);
    else a.push_back(s.token->value);
  }
  return a;
}

inline ojson footer(const RunTrace& tr) {
  return ojson{{"type", "footer"},
               {"status", tr.completed() ? "completed" : "aborted"},
               {"error", tr.error},
               {"final", slots(tr.final_sequence)}};
}

// --- reading ---------------------------------------------------------------

using json = nlohmann::json;

template <typename T>
T get(const json& j, const char* key) {
  if (!j.contains(key)) throw TraceFormatError(std::string("trace: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw TraceFormatError(std::string("trace: bad field '") + key + "': " + e.what());
  }
}

inline std::vector<TokenId> read_tokens(const json& a) {
  std::vector<TokenId> out;
  for (const auto& v : a) out.push_back(TokenId{v.get<std::uint32_t>()});
  return out;
}

inline ScheduleConfig read_config(const json& j) {
  ScheduleConfig c;
  c.length = get<std::size_t>(j, "n");
  c.steps = get<std::size_t>(j, "t");
  c.wave_size = get<std::size_t>(j, "f");
  c.radius = get<std::size_t>(j, "r");
  c.block_size = get<std::size_t>(j, "b");
  c.strategy = parse_strategy(get<std::string>(j, "strategy"));
  c.seed = get<std::int64_t>(j, "seed");
  c.expand = parse_expand_rule(get<std::string>(j, "expand"));
  c.outside = parse_outside_rule(get<std::string>(j, "nout"));
  c.full_scores = get<bool>(j, "full_scores");
  return c;
}

inline OracleParams read_oracle(const json& j) {
  OracleParams o;
  o.base = get<double>(j, "base");
  o.gain = get<double>(j, "gain");
  o.window = get<std::size_t>(j, "window");
  o.noise_amp = get<double>(j, "noise_amp");
  o.segment_discount = get<double>(j, "segment_discount");
  o.prompt_context = get<bool>(j, "prompt_context");
  return o;
}

inline DenoiserSpec read_denoiser(const json& j) {
  DenoiserSpec d;
  d.kind = parse_denoiser_kind(get<std::string>(j, "kind"));
  d.vocab_size = get<std::uint32_t>(j, "vocab_size");
  if (d.kind == DenoiserKind::Oracle) d.oracle = read_oracle(j.at("oracle"));
  if (d.kind == DenoiserKind::External) d.command = get<std::vector<std::string>>(j, "command");
  return d;
}

inline StepRecord read_step(const json& j) {
  StepRecord r;
  auto& d = r.decision;
  d.step = get<std::size_t>(j, "t");
  d.budget = get<std::size_t>(j, "budget");
  d.selected = get<std::vector<Position>>(j, "selected");
  d.spilled = get<std::vector<Position>>(j, "spilled");
  for (Position p : get<std::vector<Position>>(j, "wavefront_before")) d.wavefront_before.insert(p);
  for (Position p : get<std::vector<Position>>(j, "wavefront_after")) d.wavefront_after.insert(p);
  r.tokens = read_tokens(j.at("tokens"));
  r.metric.step = d.step;
  if (!j.at("mhco").is_null()) r.metric.mhco = get<double>(j, "mhco");
  r.metric.forward_passes_so_far = get<std::size_t>(j, "forward_passes");
  r.metric.tokens_finalized_so_far = get<std::size_t>(j, "tokens_finalized");
  for (const auto& pair : j.at("scores")) {
    r.scores.emplace_back(pair.at(0).get<Position>(), pair.at(1).get<double>());
  }
  return r;
}

}  // namespace trace_json

inline void write_trace(std::ostream& os, const RunTrace& tr) {
  os << trace_json::header(tr).dump() << '\n';
  for (const auto& rec : tr.steps) os << trace_json::step(rec).dump() << '\n';
  os << trace_json::footer(tr).dump() << '\n';
}

inline std::string trace_to_string(const RunTrace& tr) {
  std::ostringstream os;
  write_trace(os, tr);
  return os.str();
}

inline void write_trace_file(const std::string& path, const RunTrace& tr) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open trace file for writing: " + path);
  write_trace(f, tr);
  if (!f) throw Error("failed writing trace file: " + path);
}

inline RunTrace read_trace(std::istream& is) {
  using trace_json::json;
  RunTrace tr;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  bool have_footer = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (have_footer) throw TraceFormatError("trace: content after footer");
    json j;
    try {
      j = json::parse(line);
      const auto type = trace_json::get<std::string>(j, "type");
      if (!have_header) {
        if (type != "header") throw TraceFormatError("trace: first line must be a header");
        if (trace_json::get<int>(j, "version") != kTraceFormatVersion) {
          throw TraceFormatError("trace: unsupported format version");
        }
        tr.config = trace_json::read_config(j.at("config"));
        tr.denoiser = trace_json::read_denoiser(j.at("denoiser"));
        const auto& task = j.at("task");
        tr.target = trace_json::read_tokens(task.at("target"));
        for (const auto& s : task.at("segments")) {
          tr.segments.push_back(Segment{s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
        }
        have_header = true;
      } else if (type == "step") {
        tr.steps.push_back(trace_json::read_step(j));
      } else if (type == "footer") {
        const auto status = trace_json::get<std::string>(j, "status");
        if (status != "completed" && status != "aborted") {
          throw TraceFormatError("trace: unknown status '" + status + "'");
        }
        tr.status = status == "completed" ? RunStatus::Completed : RunStatus::Aborted;
        tr.error = trace_json::get<std::string>(j, "error");
        for (const auto& v : j.at("final")) {
          tr.final_sequence.push_back(v.is_null() ? Slot::mask()
                                                  : Slot::of(TokenId{v.get<std::uint32_t>()}));
        }
        have_footer = true;
      } else {
        throw TraceFormatError("trace: unknown record type '" + type + "'");
      }
    } catch (const TraceFormatError& e) {
      throw TraceFormatError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw TraceFormatError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw TraceFormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw TraceFormatError("trace: empty file");
  if (!have_footer) throw TraceFormatError("trace: missing footer");
  return tr;
}

inline RunTrace read_trace_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open trace file: " + path);
  return read_trace(f);
}

/// Strategy-neutral projection of a trace: per-step budget, selection,
/// predicted tokens, metrics and score snapshot, plus the final sequence.
/// Used to compare runs of different strategies step by step.
inline std::string selection_record(const RunTrace& tr) {
  using trace_json::ojson;
  std::ostringstream os;
  for (const auto& r : tr.steps) {
    ojson j{{"t", r.decision.step},
            {"budget", r.decision.budget},
            {"selected", trace_json::positions(r.decision.selected)},
            {"tokens", trace_json::tokens(r.tokens)},
            {"mhco", trace_json::mhco(r.metric)},
            {"scores", trace_json::scores(r.scores)}};
    os << j.dump() << '\n';
  }
  os << trace_json::slots(tr.final_sequence).dump() << '\n';
  return os.str();
}

}  // namespace wavesched
