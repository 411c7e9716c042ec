#pragma once

// Selection policies: Standard (global top-k), Block (fixed left-to-right
// blocks) and Wavefront (confidence-ranked frontier that grows around
// finalized positions).
//
// Every ranking in this file orders by (score descending, position
// ascending). That total order is what makes runs reproducible and lets a
// wavefront with F >= N and R >= N reduce exactly to Standard.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wavesched/denoise.hpp"
#include "wavesched/errors.hpp"
#include "wavesched/seqcore.hpp"

namespace wavesched {

enum class Strategy { Standard, Block, Wavefront };

/// How EXPAND builds the next candidate set.
enum class ExpandRule {
  SetDefinition,  // all masked j within R of the cumulative finalized set
  Incremental,    // previous wavefront plus neighbours of this step's picks
};

/// Which finalized set defines the MHCO comparison neighbourhood.
enum class OutsideRule { PreStep, PostStep };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Standard: return "standard";
    case Strategy::Block: return "block";
    case Strategy::Wavefront: return "wavefront";
  }
  return "?";
}

inline std::string_view to_string(ExpandRule e) {
  return e == ExpandRule::SetDefinition ? "setdef" : "incremental";
}

inline std::string_view to_string(OutsideRule o) {
  return o == OutsideRule::PreStep ? "prestep" : "poststep";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "standard") return Strategy::Standard;
  if (s == "block") return Strategy::Block;
  if (s == "wavefront") return Strategy::Wavefront;
  throw DomainError("unknown strategy '" + std::string(s) + "'");
}

inline ExpandRule parse_expand_rule(std::string_view s) {
  if (s == "setdef") return ExpandRule::SetDefinition;
  if (s == "incremental") return ExpandRule::Incremental;
  throw DomainError("unknown expand variant '" + std::string(s) + "'");
}

inline OutsideRule parse_outside_rule(std::string_view s) {
  if (s == "prestep") return OutsideRule::PreStep;
  if (s == "poststep") return OutsideRule::PostStep;
  throw DomainError("unknown N_out variant '" + std::string(s) + "'");
}

struct ScheduleConfig {
  std::size_t length = 128;     // N
  std::size_t steps = 32;       // T
  std::size_t wave_size = 8;    // F
  std::size_t radius = 2;       // R; also the MHCO neighbourhood for every strategy
  std::size_t block_size = 8;   // B
  Strategy strategy = Strategy::Wavefront;
  std::int64_t seed = 0;
  ExpandRule expand = ExpandRule::SetDefinition;
  OutsideRule outside = OutsideRule::PreStep;
  bool full_scores = false;

  void validate() const {
    if (length < 1) throw DomainError("config: N must be >= 1");
    if (steps < 1) throw DomainError("config: T must be >= 1");
    if (wave_size < 1) throw DomainError("config: F must be >= 1");
    if (block_size < 1) throw DomainError("config: B must be >= 1");
  }

  friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

struct StepDecision {
  std::size_t step = 0;
  std::size_t budget = 0;
  std::vector<Position> selected;  // in selection order
  std::vector<Position> spilled;   // subset of selected, chosen outside the wavefront
  PositionSet wavefront_before;
  PositionSet wavefront_after;

  friend bool operator==(const StepDecision&, const StepDecision&) = default;
};

/// k_t = floor(N/T) + [t <= N mod T], for t in 1..T.
constexpr std::size_t step_budget(std::size_t t, std::size_t n, std::size_t total_steps) {
  if (t < 1 || t > total_steps) throw RangeError("step_budget: t outside 1..T");
  return n / total_steps + (t <= n % total_steps ? 1 : 0);
}

/// W_0: the first F positions after the prompt.
inline PositionSet init_wavefront(const ScheduleConfig& cfg) {
  PositionSet w;
  const std::size_t m = std::min(cfg.wave_size, cfg.length);
  for (Position p = 0; p < m; ++p) w.insert(w.end(), p);
  return w;
}

namespace detail {

/// Sorts in place by (score desc, position asc).
inline void rank_by_confidence(std::vector<Position>& ps, const ConfidenceField& field) {
  std::sort(ps.begin(), ps.end(), [&](Position a, Position b) {
    const double sa = field.score(a);
    const double sb = field.score(b);
    if (sa != sb) return sa > sb;
    return a < b;
  });
}

}  // namespace detail

inline std::vector<Position> select_standard(const ConfidenceField& field, std::size_t k) {
  std::vector<Position> all = field.positions();
  detail::rank_by_confidence(all, field);
  all.resize(std::min(k, all.size()));
  return all;
}

/// Fills the budget from the lowest block that still has masked positions,
/// overflowing into later blocks in order. Output is grouped by block.
inline std::vector<Position> select_block(const ConfidenceField& field, const DecodeState& state,
                                          std::size_t k, std::size_t block_size) {
  if (block_size == 0) throw DomainError("select_block: block size must be positive");
  std::vector<Position> out;
  const std::size_t n = state.size();
  for (Position start = 0; start < n && out.size() < k; start += block_size) {
    std::vector<Position> members;
    for (Position p = start; p < std::min(n, start + block_size); ++p)
      if (state.is_masked(p) && field.contains(p)) members.push_back(p);
    if (members.empty()) continue;
    detail::rank_by_confidence(members, field);
    const std::size_t take = std::min(k - out.size(), members.size());
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

/// One wavefront iteration: SELECT from W, SPILL outside W if short, EXPAND
/// around the updated finalized set, PRUNE to the top F. The caller applies
/// the finalization.
inline StepDecision wavefront_step(const ConfidenceField& field, const DecodeState& state,
                                   std::size_t k, const ScheduleConfig& cfg) {
  StepDecision d;
  d.step = state.step + 1;
  d.budget = k;
  d.wavefront_before = state.wavefront;

  std::vector<Position> inside;
  std::vector<Position> outside;
  for (Position p : field.positions()) {
    (state.wavefront.count(p) ? inside : outside).push_back(p);
  }
  for (Position p : state.wavefront) {
    if (!field.contains(p)) {
      throw InvariantViolation("wavefront contains finalized position " + std::to_string(p));
    }
  }

  detail::rank_by_confidence(inside, field);
  const std::size_t from_inside = std::min(k, inside.size());
  d.selected.assign(inside.begin(), inside.begin() + static_cast<std::ptrdiff_t>(from_inside));

  if (d.selected.size() < k && !outside.empty()) {
    detail::rank_by_confidence(outside, field);
    const std::size_t extra = std::min(k - d.selected.size(), outside.size());
    d.spilled.assign(outside.begin(), outside.begin() + static_cast<std::ptrdiff_t>(extra));
    d.selected.insert(d.selected.end(), d.spilled.begin(), d.spilled.end());
  }

  PositionSet picked(d.selected.begin(), d.selected.end());
  const std::size_t n = state.size();
  std::vector<Position> candidates;
  if (cfg.expand == ExpandRule::SetDefinition) {
    PositionSet finalized_after = state.finalized;
    finalized_after.insert(picked.begin(), picked.end());
    for (Position j = 0; j < n; ++j) {
      if (!state.is_masked(j) || picked.count(j)) continue;
      if (dist(j, finalized_after, n) <= cfg.radius) candidates.push_back(j);
    }
  } else {
    PositionSet grown;
    for (Position p : state.wavefront)
      if (!picked.count(p)) grown.insert(p);
    for (Position i : picked) {
      const Position lo = i >= cfg.radius ? i - cfg.radius : 0;
      const Position hi = std::min(n - 1, i + cfg.radius);
      for (Position j = lo; j <= hi; ++j)
        if (state.is_masked(j) && !picked.count(j)) grown.insert(j);
    }
    candidates.assign(grown.begin(), grown.end());
  }

  if (candidates.size() > cfg.wave_size) {
    detail::rank_by_confidence(candidates, field);
    candidates.resize(cfg.wave_size);
  }
  d.wavefront_after = PositionSet(candidates.begin(), candidates.end());
  return d;
}

}  // namespace wavesched
