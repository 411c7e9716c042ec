#pragma once

// MHCO (masked higher-confidence outside), compute accounting and per-token
// exact match.
//
// MHCO_t is the fraction of tokens selected at step t for which some masked,
// unselected position within radius R of the finalized set had a strictly
// higher confidence in the same forward pass.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wavesched/errors.hpp"
#include "wavesched/sched.hpp"
#include "wavesched/seqcore.hpp"
#include "wavesched/trace.hpp"

namespace wavesched {

inline double mhco_step(std::span<const double> selected, std::span<const double> outside) {
  if (selected.empty()) throw UndefinedMetricError("mhco_step: empty selection");
  if (outside.empty()) return 0.0;
  const double top = *std::max_element(outside.begin(), outside.end());
  std::size_t violated = 0;
  for (double s : selected) violated += top > s ? 1 : 0;
  return static_cast<double>(violated) / static_cast<double>(selected.size());
}

/// The comparison neighbourhood N_out: masked positions not selected this
/// step whose distance to the finalized set is at most `radius`. PreStep
/// measures distance to the set before this step's finalizations, PostStep
/// after.
inline std::vector<Position> outside_positions(std::size_t n, const PositionSet& finalized_before,
                                               std::span<const Position> selected,
                                               std::size_t radius, OutsideRule rule) {
  PositionSet picked(selected.begin(), selected.end());
  PositionSet reference = finalized_before;
  if (rule == OutsideRule::PostStep) reference.insert(picked.begin(), picked.end());
  std::vector<Position> out;
  for (Position j = 0; j < n; ++j) {
    if (finalized_before.count(j) || picked.count(j)) continue;
    if (dist(j, reference, n) <= radius) out.push_back(j);
  }
  return out;
}

namespace detail {

/// Replays finalized sets from a trace, calling fn(record, finalized_before).
template <typename Fn>
void for_each_step(const RunTrace& trace, Fn&& fn) {
  PositionSet finalized;
  for (const auto& rec : trace.steps) {
    fn(rec, std::as_const(finalized));
    finalized.insert(rec.decision.selected.begin(), rec.decision.selected.end());
  }
}

}  // namespace detail

/// Per-step MHCO recomputed from a trace's score snapshots. `radius` and
/// `rule` default to the trace's own configuration.
inline std::vector<std::optional<double>> mhco_steps(const RunTrace& trace,
                                                     std::optional<std::size_t> radius = {},
                                                     std::optional<OutsideRule> rule = {}) {
  const std::size_t r = radius.value_or(trace.config.radius);
  const OutsideRule o = rule.value_or(trace.config.outside);
  std::vector<std::optional<double>> out;
  detail::for_each_step(trace, [&](const StepRecord& rec, const PositionSet& before) {
    const auto& sel = rec.decision.selected;
    if (sel.empty()) {
      out.emplace_back();
      return;
    }
    std::map<Position, double> snapshot(rec.scores.begin(), rec.scores.end());
    auto lookup = [&](Position p) {
      auto it = snapshot.find(p);
      if (it == snapshot.end()) {
        throw InsufficientTraceError("step " + std::to_string(rec.decision.step) +
                                     ": no score snapshot for position " + std::to_string(p));
      }
      return it->second;
    };
    std::vector<double> s_sel;
    std::vector<double> s_out;
    for (Position p : sel) s_sel.push_back(lookup(p));
    for (Position p : outside_positions(trace.config.length, before, sel, r, o))
      s_out.push_back(lookup(p));
    out.emplace_back(mhco_step(s_sel, s_out));
  });
  return out;
}

/// Mean of per-step MHCO over steps with a non-empty selection. NaN when no
/// such step exists.
inline double mean_defined(const std::vector<std::optional<double>>& xs) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& x : xs) {
    if (!x) continue;
    sum += *x;
    ++count;
  }
  return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

inline double mhco_run(const RunTrace& trace, std::optional<std::size_t> radius = {},
                       std::optional<OutsideRule> rule = {}) {
  return mean_defined(mhco_steps(trace, radius, rule));
}

inline double exact_match(std::span<const Slot> final_sequence, std::span<const TokenId> target) {
  if (target.empty()) throw DomainError("exact_match: no target available");
  if (target.size() != final_sequence.size()) {
    throw DomainError("exact_match: target length differs from sequence length");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    hits += (!final_sequence[i].masked() && *final_sequence[i].token == target[i]) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(target.size());
}

inline double exact_match(const RunTrace& trace, const GenSequence& target) {
  if (!target.target) throw DomainError("exact_match: sequence carries no target");
  return exact_match(trace.final_sequence, *target.target);
}

struct RunMetric {
  double mean_mhco = std::numeric_limits<double>::quiet_NaN();
  double exact_match = std::numeric_limits<double>::quiet_NaN();
  std::size_t total_forward_passes = 0;
  std::size_t total_token_updates = 0;
  // updates <= F*T. Informational: the spill rule lets a run finish even
  // when N > F*T.
  bool within_compute_bound = true;
  std::vector<std::string> violations;

  [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
};

/// Counts passes and updates and checks them against the budget contract.
/// Violations are reported, not thrown.
inline RunMetric accounting(const RunTrace& trace) {
  const ScheduleConfig& cfg = trace.config;
  RunMetric m;
  m.total_forward_passes = trace.steps.size();
  std::vector<std::optional<double>> per_step;
  for (const auto& rec : trace.steps) {
    m.total_token_updates += rec.decision.selected.size();
    per_step.push_back(rec.metric.mhco);
    if (trace.completed() && rec.decision.step >= 1 && rec.decision.step <= cfg.steps &&
        rec.decision.selected.size() > step_budget(rec.decision.step, cfg.length, cfg.steps)) {
      m.violations.push_back("step " + std::to_string(rec.decision.step) + " exceeds its budget");
    }
  }
  m.mean_mhco = mean_defined(per_step);
  if (!trace.target.empty() && trace.target.size() == trace.final_sequence.size()) {
    m.exact_match = exact_match(trace.final_sequence, trace.target);
  }
  if (m.total_forward_passes > cfg.steps) {
    m.violations.push_back("forward passes exceed T");
  }
  if (trace.completed() && m.total_token_updates != cfg.length) {
    m.violations.push_back("token updates " + std::to_string(m.total_token_updates) +
                           " differ from N=" + std::to_string(cfg.length));
  }
  m.within_compute_bound = m.total_token_updates <= cfg.wave_size * cfg.steps;
  return m;
}

}  // namespace wavesched
