#pragma once

// Masked sequences, finalization bookkeeping, positional distance and the
// forward corruption process.
//
// The prompt is never materialized. It is treated as a finalized block that
// ends at virtual position -1, so position 0 is always at distance 1 from
// finalized context.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wavesched/errors.hpp"
#include "wavesched/hash.hpp"

namespace wavesched {

using Position = std::size_t;
using PositionSet = std::set<Position>;
using Distance = std::size_t;

/// Strictly greater than any sequence length.
inline constexpr Distance kInfiniteDistance = std::numeric_limits<Distance>::max();

struct TokenId {
  std::uint32_t value = 0;

  friend constexpr auto operator<=>(const TokenId&, const TokenId&) = default;
};

struct Slot {
  std::optional<TokenId> token;

  [[nodiscard]] bool masked() const noexcept { return !token.has_value(); }
  static Slot mask() { return {}; }
  static Slot of(TokenId t) { return Slot{t}; }

  friend bool operator==(const Slot&, const Slot&) = default;
};

struct GenSequence {
  std::vector<Slot> slots;
  std::optional<std::vector<TokenId>> target;

  static GenSequence all_masked(std::size_t n) {
    return GenSequence{std::vector<Slot>(n), std::nullopt};
  }

  static GenSequence from_tokens(std::span<const TokenId> tokens) {
    GenSequence seq;
    seq.slots.reserve(tokens.size());
    for (TokenId t : tokens) seq.slots.push_back(Slot::of(t));
    seq.target = std::vector<TokenId>(tokens.begin(), tokens.end());
    return seq;
  }

  [[nodiscard]] std::size_t size() const noexcept { return slots.size(); }

  [[nodiscard]] std::size_t masked_count() const noexcept {
    std::size_t c = 0;
    for (const auto& s : slots) c += s.masked() ? 1 : 0;
    return c;
  }

  friend bool operator==(const GenSequence&, const GenSequence&) = default;
};

struct DecodeState {
  GenSequence sequence;
  PositionSet finalized;
  PositionSet wavefront;
  std::size_t step = 0;

  static DecodeState fresh(std::size_t n) {
    return DecodeState{GenSequence::all_masked(n), {}, {}, 0};
  }

  [[nodiscard]] std::size_t size() const noexcept { return sequence.size(); }
  [[nodiscard]] bool is_masked(Position p) const { return sequence.slots.at(p).masked(); }
  [[nodiscard]] std::size_t masked_count() const noexcept {
    return sequence.size() - finalized.size();
  }
  [[nodiscard]] bool complete() const noexcept { return masked_count() == 0; }

  [[nodiscard]] std::vector<Position> masked_positions() const {
    std::vector<Position> out;
    out.reserve(masked_count());
    for (Position p = 0; p < size(); ++p)
      if (sequence.slots[p].masked()) out.push_back(p);
    return out;
  }
};

/// Minimum index distance from `i` to any finalized position. With
/// `prompt_adjacent` the prompt counts as finalized at index -1.
inline Distance dist(Position i, const PositionSet& finalized, std::size_t n,
                     bool prompt_adjacent = true) {
  if (i >= n) {
    throw RangeError("dist: position " + std::to_string(i) +
                     " out of range for length " + std::to_string(n));
  }
  Distance best = prompt_adjacent ? i + 1 : kInfiniteDistance;
  auto hi = finalized.lower_bound(i);
  if (hi != finalized.end()) best = std::min(best, *hi - i);
  if (hi != finalized.begin()) best = std::min(best, i - *std::prev(hi));
  return best;
}

/// Independently masks each position with probability `t`. The decision at
/// position p is a function of (seed, p, t) only.
inline GenSequence corrupt(const GenSequence& x0, double t, std::int64_t seed) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("corrupt: masking probability must lie in [0, 1]");
  }
  GenSequence out = x0;
  for (Position p = 0; p < x0.size(); ++p) {
    if (x0.slots[p].masked()) {
      throw DomainError("corrupt: input must be fully finalized");
    }
    if (hashing::uniform01(seed, hashing::Tag::Corrupt, p, 0) < t) {
      out.slots[p] = Slot::mask();
    }
  }
  return out;
}

/// Finalizes each (position, token) pair. Throws if a position is already
/// finalized, out of range or repeated.
inline DecodeState finalize(DecodeState state,
                            std::span<const std::pair<Position, TokenId>> assignments) {
  for (const auto& [pos, tok] : assignments) {
    if (pos >= state.size()) {
      throw RangeError("finalize: position " + std::to_string(pos) + " out of range");
    }
    if (!state.sequence.slots[pos].masked()) {
      throw InvariantViolation("finalize: position " + std::to_string(pos) +
                               " is already finalized");
    }
    state.sequence.slots[pos] = Slot::of(tok);
    state.finalized.insert(pos);
    state.wavefront.erase(pos);
  }
  return state;
}

}  // namespace wavesched
