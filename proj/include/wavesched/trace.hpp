#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wavesched/denoise.hpp"
#include "wavesched/errors.hpp"
#include "wavesched/sched.hpp"
#include "wavesched/seqcore.hpp"

namespace wavesched {

enum class DenoiserKind { Oracle, Uniform, External };

inline std::string_view to_string(DenoiserKind k) {
  switch (k) {
    case DenoiserKind::Oracle: return "oracle";
    case DenoiserKind::Uniform: return "uniform";
    case DenoiserKind::External: return "external";
  }
  return "?";
}

inline DenoiserKind parse_denoiser_kind(std::string_view s) {
  if (s == "oracle") return DenoiserKind::Oracle;
  if (s == "uniform") return DenoiserKind::Uniform;
  if (s == "external") return DenoiserKind::External;
  throw DomainError("unknown denoiser '" + std::string(s) + "'");
}

/// Enough to rebuild a denoiser session for replay.
struct DenoiserSpec {
  DenoiserKind kind = DenoiserKind::Oracle;
  std::uint32_t vocab_size = 64;
  OracleParams oracle;
  std::vector<std::string> command;  // external only

  friend bool operator==(const DenoiserSpec&, const DenoiserSpec&) = default;
};

struct Segment {
  std::size_t start = 0;
  std::size_t length = 0;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct StepMetric {
  std::size_t step = 0;
  std::optional<double> mhco;  // empty when nothing was selected
  std::size_t forward_passes_so_far = 0;
  std::size_t tokens_finalized_so_far = 0;

  friend bool operator==(const StepMetric&, const StepMetric&) = default;
};

struct StepRecord {
  StepDecision decision;
  std::vector<TokenId> tokens;  // parallel to decision.selected
  StepMetric metric;
  // Scores of selected and nearby masked positions, ascending by position.
  std::vector<std::pair<Position, double>> scores;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

enum class RunStatus { Completed, Aborted };

struct RunTrace {
  ScheduleConfig config;
  DenoiserSpec denoiser;
  std::vector<TokenId> target;     // empty when the task carries no target
  std::vector<Segment> segments;
  std::vector<StepRecord> steps;
  std::vector<Slot> final_sequence;
  RunStatus status = RunStatus::Completed;
  std::string error;

  [[nodiscard]] bool completed() const noexcept { return status == RunStatus::Completed; }

  friend bool operator==(const RunTrace&, const RunTrace&) = default;
};

}  // namespace wavesched
