#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "wavesched/denoise.hpp"
#include "wavesched/errors.hpp"
#include "wavesched/metrics.hpp"
#include "wavesched/sched.hpp"
#include "wavesched/seqcore.hpp"
#include "wavesched/trace.hpp"

namespace wavesched {

/// Runs one decode: per step, one forward pass, one selection, one
/// finalization. Stops early once every position is finalized. A denoiser
/// protocol failure ends the run with a partial trace marked Aborted.
inline RunTrace run_decode(const ScheduleConfig& cfg, Denoiser& denoiser) {
  cfg.validate();
  RunTrace trace;
  trace.config = cfg;

  DecodeState state = DecodeState::fresh(cfg.length);
  if (cfg.strategy == Strategy::Wavefront) state.wavefront = init_wavefront(cfg);

  std::size_t finalized_so_far = 0;
  for (std::size_t t = 1; t <= cfg.steps && !state.complete(); ++t) {
    const std::size_t k = step_budget(t, cfg.length, cfg.steps);
    ConfidenceField field;
    try {
      field = denoiser.score_all(state, t);
    } catch (const ProtocolError& e) {
      trace.status = RunStatus::Aborted;
      trace.error = e.what();
      break;
    }

    StepDecision decision;
    switch (cfg.strategy) {
      case Strategy::Standard:
        decision.selected = select_standard(field, k);
        break;
      case Strategy::Block:
        decision.selected = select_block(field, state, k, cfg.block_size);
        break;
      case Strategy::Wavefront:
        decision = wavefront_step(field, state, k, cfg);
        break;
    }
    decision.step = t;
    decision.budget = k;

    StepRecord rec;
    std::vector<std::pair<Position, TokenId>> assignments;
    std::vector<double> selected_scores;
    for (Position p : decision.selected) {
      const ScoredToken& e = field.at(p);
      rec.tokens.push_back(e.prediction);
      assignments.emplace_back(p, e.prediction);
      selected_scores.push_back(e.score);
    }

    const auto outside =
        outside_positions(cfg.length, state.finalized, decision.selected, cfg.radius, cfg.outside);
    std::vector<double> outside_scores;
    for (Position p : outside) outside_scores.push_back(field.score(p));

    finalized_so_far += decision.selected.size();
    rec.metric.step = t;
    rec.metric.forward_passes_so_far = t;
    rec.metric.tokens_finalized_so_far = finalized_so_far;
    if (!decision.selected.empty()) rec.metric.mhco = mhco_step(selected_scores, outside_scores);

    // Snapshot the selected positions plus the post-step neighbourhood, which
    // contains the pre-step one, so either MHCO variant can be recomputed.
    if (cfg.full_scores) {
      for (Position p : field.positions()) rec.scores.emplace_back(p, field.score(p));
    } else {
      PositionSet keep(decision.selected.begin(), decision.selected.end());
      for (Position p : outside_positions(cfg.length, state.finalized, decision.selected,
                                          cfg.radius, OutsideRule::PostStep))
        keep.insert(p);
      for (Position p : keep) rec.scores.emplace_back(p, field.score(p));
    }

    state = finalize(std::move(state), assignments);
    state.wavefront = decision.wavefront_after;
    state.step = t;

    rec.decision = std::move(decision);
    trace.steps.push_back(std::move(rec));
  }

  trace.final_sequence = state.sequence.slots;
  return trace;
}

}  // namespace wavesched
