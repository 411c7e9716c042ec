#pragma once

// Trace replay: re-derives the decode state step by step from a trace and
// reports every broken scheduling invariant. For built-in denoisers the run
// is also re-executed and compared byte for byte.

#include <cstddef>
#include <string>
#include <vector>

#include "wavesched/harness.hpp"
#include "wavesched/metrics.hpp"
#include "wavesched/sched.hpp"
#include "wavesched/trace.hpp"
#include "wavesched/trace_io.hpp"

namespace wavesched {

struct VerifyOptions {
  bool rerun = true;
};

inline std::vector<std::string> verify_trace(const RunTrace& tr, VerifyOptions opts = {}) {
  std::vector<std::string> bad;
  const ScheduleConfig& cfg = tr.config;
  const std::size_t n = cfg.length;
  try {
    cfg.validate();
  } catch (const Error& e) {
    bad.emplace_back(e.what());
    return bad;
  }

  auto at = [](std::size_t t) { return "step " + std::to_string(t) + ": "; };

  std::vector<bool> done(n, false);
  std::vector<Slot> seq(n);
  std::size_t finalized = 0;
  PositionSet prev_wave =
      cfg.strategy == Strategy::Wavefront ? init_wavefront(cfg) : PositionSet{};

  std::vector<std::optional<double>> recomputed;
  try {
    recomputed = mhco_steps(tr);
  } catch (const Error& e) {
    bad.push_back(std::string("mhco recompute failed: ") + e.what());
  }

  for (std::size_t i = 0; i < tr.steps.size(); ++i) {
    const StepRecord& rec = tr.steps[i];
    const StepDecision& d = rec.decision;
    const std::size_t t = d.step;
    if (t != i + 1) {
      bad.push_back(at(t) + "step numbers are not 1, 2, 3, ...");
      break;
    }
    if (t > cfg.steps) bad.push_back(at(t) + "beyond T");
    const std::size_t k = t <= cfg.steps ? step_budget(t, n, cfg.steps) : 0;
    if (d.budget != k) bad.push_back(at(t) + "budget " + std::to_string(d.budget) + " != k_t " + std::to_string(k));

    const std::size_t masked_before = n - finalized;
    if (masked_before == 0) bad.push_back(at(t) + "step recorded after completion");
    if (d.selected.size() != std::min(k, masked_before)) {
      bad.push_back(at(t) + "selected " + std::to_string(d.selected.size()) + " positions, expected " +
                    std::to_string(std::min(k, masked_before)));
    }
    if (rec.tokens.size() != d.selected.size()) bad.push_back(at(t) + "token count differs from selection");

    PositionSet picked;
    for (std::size_t s = 0; s < d.selected.size(); ++s) {
      const Position p = d.selected[s];
      if (p >= n) {
        bad.push_back(at(t) + "position out of range");
        continue;
      }
      if (done[p]) bad.push_back(at(t) + "position " + std::to_string(p) + " was already finalized");
      if (!picked.insert(p).second) bad.push_back(at(t) + "position " + std::to_string(p) + " selected twice");
      if (cfg.strategy == Strategy::Block) {
        const std::size_t block = p / cfg.block_size;
        for (Position q = 0; q < block * cfg.block_size; ++q) {
          if (!done[q] && !picked.count(q)) {
            bad.push_back(at(t) + "block order: position " + std::to_string(p) + " finalized while " +
                          std::to_string(q) + " in an earlier block is masked");
            break;
          }
        }
      }
    }

    for (Position p : d.spilled) {
      if (!picked.count(p)) bad.push_back(at(t) + "spilled position not selected");
      if (d.wavefront_before.count(p)) bad.push_back(at(t) + "spilled position was inside the wavefront");
    }

    if (cfg.strategy == Strategy::Wavefront) {
      if (d.wavefront_before != prev_wave) bad.push_back(at(t) + "wavefront_before differs from previous wavefront");
      for (Position p : d.wavefront_after) {
        if (p >= n || done[p] || picked.count(p)) bad.push_back(at(t) + "wavefront holds a finalized position");
      }
      if (d.wavefront_after.size() > cfg.wave_size) bad.push_back(at(t) + "wavefront larger than F");
      prev_wave = d.wavefront_after;
    } else if (!d.wavefront_before.empty() || !d.wavefront_after.empty() || !d.spilled.empty()) {
      bad.push_back(at(t) + "non-wavefront strategy recorded wavefront data");
    }

    for (std::size_t s = 0; s < d.selected.size() && s < rec.tokens.size(); ++s) {
      const Position p = d.selected[s];
      if (p >= n) continue;
      if (rec.tokens[s].value >= tr.denoiser.vocab_size) bad.push_back(at(t) + "token outside vocabulary");
      if (!done[p]) ++finalized;
      done[p] = true;
      seq[p] = Slot::of(rec.tokens[s]);
    }

    if (rec.metric.forward_passes_so_far != t) bad.push_back(at(t) + "forward pass counter mismatch");
    if (rec.metric.tokens_finalized_so_far != finalized) bad.push_back(at(t) + "finalized counter mismatch");
    if (i < recomputed.size() && recomputed[i] != rec.metric.mhco) {
      bad.push_back(at(t) + "recorded MHCO differs from recomputation");
    }
    if (rec.metric.mhco && (*rec.metric.mhco < 0.0 || *rec.metric.mhco > 1.0)) {
      bad.push_back(at(t) + "MHCO outside [0, 1]");
    }
  }

  if (tr.completed()) {
    if (finalized != n) bad.push_back("completed run left " + std::to_string(n - finalized) + " positions masked");
    for (const auto& v : accounting(tr).violations) bad.push_back("accounting: " + v);
  }
  if (tr.final_sequence != seq) bad.push_back("final sequence differs from replayed selections");

  if (opts.rerun && tr.denoiser.kind != DenoiserKind::External && tr.completed()) {
    try {
      const RunTrace again = run_on_task(cfg, tr.denoiser, tr.target, tr.segments);
      if (trace_to_string(again) != trace_to_string(tr)) {
        bad.push_back("re-executing the recorded configuration produced a different trace");
      }
    } catch (const std::exception& e) {
      bad.push_back(std::string("re-execution failed: ") + e.what());
    }
  }
  return bad;
}

}  // namespace wavesched
