// wavesched: run, sweep, score and verify diffusion decoding schedules.
//
// Exit codes: 0 success, 1 invariant or acceptance failure, 2 usage error,
// 3 external denoiser protocol error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wavesched/wavesched.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolation = 1;
constexpr int kExitUsage = 2;
constexpr int kExitProtocol = 3;

std::vector<std::string> split_command(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

struct RunArgs {
  std::string strategy = "wavefront";
  std::size_t n = 128;
  std::size_t t = 32;
  std::size_t f = 8;
  std::size_t r = 2;
  std::size_t b = 8;
  std::int64_t seed = 0;
  std::string denoiser = "oracle";
  std::string external_cmd;
  std::string trace;
  std::string expand = "setdef";
  std::string nout = "prestep";
  bool full_scores = false;
  std::uint32_t vocab = 64;
  std::size_t min_seg = 3;
  std::size_t max_seg = 20;
  wavesched::OracleParams oracle;
};

int cmd_run(const RunArgs& a) {
  using namespace wavesched;
  RunSetup setup;
  auto& c = setup.config;
  c.length = a.n;
  c.steps = a.t;
  c.wave_size = a.f;
  c.radius = a.r;
  c.block_size = a.b;
  c.strategy = parse_strategy(a.strategy);
  c.seed = a.seed;
  c.expand = parse_expand_rule(a.expand);
  c.outside = parse_outside_rule(a.nout);
  c.full_scores = a.full_scores;
  setup.denoiser.kind = parse_denoiser_kind(a.denoiser);
  setup.denoiser.oracle = a.oracle;
  setup.denoiser.oracle.validate();
  if (setup.denoiser.kind == DenoiserKind::External) {
    setup.denoiser.command = split_command(a.external_cmd);
    if (setup.denoiser.command.empty()) {
      std::cerr << "run: --denoiser external requires --external-cmd\n";
      return kExitUsage;
    }
  }
  setup.task = TaskParams{a.vocab, a.min_seg, a.max_seg};

  const RunTrace trace = execute_run(setup);
  if (!a.trace.empty()) write_trace_file(a.trace, trace);

  const RunMetric m = accounting(trace);
  std::printf("strategy=%s status=%s steps=%zu forward_passes=%zu token_updates=%zu "
              "exact_match=%s mean_mhco=%s within_FxT=%s\n",
              a.strategy.c_str(), trace.completed() ? "completed" : "aborted", trace.steps.size(),
              m.total_forward_passes, m.total_token_updates, format_double(m.exact_match).c_str(),
              format_double(m.mean_mhco).c_str(), m.within_compute_bound ? "yes" : "no");
  for (const auto& v : m.violations) std::printf("violation: %s\n", v.c_str());
  if (!trace.completed()) {
    std::fprintf(stderr, "run aborted: %s\n", trace.error.c_str());
    return kExitProtocol;
  }
  return m.violations.empty() ? kExitOk : kExitViolation;
}

int cmd_sweep(const std::string& spec_path, const std::string& out, unsigned workers) {
  using namespace wavesched;
  std::ifstream f(spec_path);
  if (!f) {
    std::cerr << "sweep: cannot open " << spec_path << "\n";
    return kExitUsage;
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "sweep: " << e.what() << "\n";
    return kExitUsage;
  }
  ExperimentSpec spec = parse_experiment_spec(j);
  if (!out.empty()) spec.output_dir = out;
  const ExperimentSummary summary = run_experiment(spec, workers);

  write_aggregate_csv(std::cout, summary.aggregates);
  std::size_t bad = 0;
  for (const auto& r : summary.rows) bad += (r.status != "completed" || r.violations) ? 1 : 0;
  if (bad) std::cerr << "sweep: " << bad << " run(s) failed or violated invariants\n";
  return bad ? kExitViolation : kExitOk;
}

int cmd_mhco(const std::string& path, std::optional<std::size_t> r, const std::string& nout) {
  using namespace wavesched;
  const RunTrace tr = read_trace_file(path);
  std::optional<OutsideRule> rule;
  if (!nout.empty()) rule = parse_outside_rule(nout);
  const auto per_step = mhco_steps(tr, r, rule);
  std::printf("step,mhco\n");
  for (std::size_t i = 0; i < per_step.size(); ++i) {
    std::printf("%zu,%s\n", tr.steps[i].decision.step,
                per_step[i] ? format_double(*per_step[i]).c_str() : "");
  }
  std::printf("mean,%s\n", format_double(mean_defined(per_step)).c_str());
  return kExitOk;
}

int cmd_verify(const std::string& path, bool rerun) {
  using namespace wavesched;
  const RunTrace tr = read_trace_file(path);
  const auto bad = verify_trace(tr, VerifyOptions{rerun});
  for (const auto& v : bad) std::printf("violation: %s\n", v.c_str());
  if (bad.empty()) {
    std::printf("ok: %zu steps, strategy=%s, status=%s\n", tr.steps.size(),
                std::string(to_string(tr.config.strategy)).c_str(),
                tr.completed() ? "completed" : "aborted");
    return kExitOk;
  }
  return kExitViolation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion LM decoding schedules: standard, block and wavefront"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Decode one synthetic task and optionally write its trace");
  run->add_option("--strategy", ra.strategy)->check(CLI::IsMember({"standard", "block", "wavefront"}));
  run->add_option("--n", ra.n, "Sequence length N");
  run->add_option("--t", ra.t, "Total steps T");
  run->add_option("--f", ra.f, "Max wavefront size F");
  run->add_option("--r", ra.r, "Expansion radius R (also the MHCO radius)");
  run->add_option("--b", ra.b, "Block size B");
  run->add_option("--seed", ra.seed);
  run->add_option("--denoiser", ra.denoiser)->check(CLI::IsMember({"oracle", "uniform", "external"}));
  run->add_option("--external-cmd", ra.external_cmd, "Adapter command line (whitespace separated)");
  run->add_option("--trace", ra.trace, "Write the JSON-lines trace here");
  run->add_option("--variant-expand", ra.expand)->check(CLI::IsMember({"setdef", "incremental"}));
  run->add_option("--variant-nout", ra.nout)->check(CLI::IsMember({"prestep", "poststep"}));
  run->add_flag("--full-scores", ra.full_scores, "Store scores of every masked position");
  run->add_option("--vocab", ra.vocab, "Vocabulary size V");
  run->add_option("--min-seg", ra.min_seg, "Minimum segment length");
  run->add_option("--max-seg", ra.max_seg, "Maximum segment length");
  run->add_option("--base", ra.oracle.base, "Oracle context-free confidence");
  run->add_option("--gain", ra.oracle.gain, "Oracle confidence gain per unit context");
  run->add_option("--window", ra.oracle.window, "Oracle context half-width");
  run->add_option("--noise", ra.oracle.noise_amp, "Oracle noise amplitude");
  run->add_option("--discount", ra.oracle.segment_discount, "Oracle cross-segment weight");

  std::string spec_path;
  std::string out_dir;
  unsigned workers = 1;
  auto* sweep = app.add_subcommand("sweep", "Run a JSON experiment spec");
  sweep->add_option("--spec", spec_path)->required();
  sweep->add_option("--out", out_dir, "Output directory for summary.csv, aggregate.csv, traces/");
  sweep->add_option("--workers", workers)->check(CLI::PositiveNumber);

  std::string trace_path;
  std::optional<std::size_t> mhco_r;
  std::string mhco_nout;
  auto* mhco = app.add_subcommand("mhco", "Print per-step and mean MHCO of a trace");
  mhco->add_option("--trace", trace_path)->required();
  mhco->add_option("--r", mhco_r, "Override the comparison radius");
  mhco->add_option("--nout", mhco_nout)->check(CLI::IsMember({"prestep", "poststep"}));

  bool no_rerun = false;
  auto* verify = app.add_subcommand("verify", "Replay a trace and report invariant violations");
  verify->add_option("--trace", trace_path)->required();
  verify->add_flag("--no-rerun", no_rerun, "Skip re-executing built-in denoiser runs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run) return cmd_run(ra);
    if (*sweep) return cmd_sweep(spec_path, out_dir, workers);
    if (*mhco) return cmd_mhco(trace_path, mhco_r, mhco_nout);
    if (*verify) return cmd_verify(trace_path, !no_rerun);
  } catch (const wavesched::ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const wavesched::DomainError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const wavesched::InsufficientTraceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitViolation;
  } catch (const wavesched::TraceFormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitViolation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitViolation;
  }
  return kExitUsage;
}
