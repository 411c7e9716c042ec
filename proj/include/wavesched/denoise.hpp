#pragma once

// Denoiser interface and the two built-in deterministic denoisers.
//
// One call to Denoiser::score_all is one forward pass: it scores every
// masked position of the queried state and returns the argmax prediction
// with its confidence.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wavesched/errors.hpp"
#include "wavesched/hash.hpp"
#include "wavesched/seqcore.hpp"

namespace wavesched {

struct ScoredToken {
  TokenId prediction;
  double score = 0.0;

  friend bool operator==(const ScoredToken&, const ScoredToken&) = default;
};

/// Per-position scores and predictions for one forward pass. Dense over the
/// sequence length; only masked positions carry an entry.
class ConfidenceField {
 public:
  ConfidenceField() = default;
  explicit ConfidenceField(std::size_t length) : slots_(length) {}

  void set(Position p, ScoredToken entry) {
    if (p >= slots_.size()) throw RangeError("ConfidenceField: position out of range");
    if (!slots_[p]) ++count_;
    slots_[p] = entry;
  }

  [[nodiscard]] bool contains(Position p) const noexcept {
    return p < slots_.size() && slots_[p].has_value();
  }

  [[nodiscard]] const ScoredToken& at(Position p) const {
    if (!contains(p)) {
      throw RangeError("ConfidenceField: no entry for position " + std::to_string(p));
    }
    return *slots_[p];
  }

  [[nodiscard]] double score(Position p) const { return at(p).score; }

  /// Number of scored positions.
  [[nodiscard]] std::size_t size() const noexcept { return count_; }
  [[nodiscard]] bool empty() const noexcept { return count_ == 0; }
  /// Sequence length the field was built for.
  [[nodiscard]] std::size_t length() const noexcept { return slots_.size(); }

  [[nodiscard]] std::vector<Position> positions() const {
    std::vector<Position> out;
    out.reserve(count_);
    for (Position p = 0; p < slots_.size(); ++p)
      if (slots_[p]) out.push_back(p);
    return out;
  }

  friend bool operator==(const ConfidenceField&, const ConfidenceField&) = default;

 private:
  std::vector<std::optional<ScoredToken>> slots_;
  std::size_t count_ = 0;
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;

  /// Scores all masked positions of `state`. Throws EmptyQueryError when
  /// nothing is masked.
  ConfidenceField score_all(const DecodeState& state, std::size_t step) {
    if (state.complete()) throw EmptyQueryError("score_all: no masked positions");
    ConfidenceField field = score_masked(state, step);
    check_field(state, field);
    return field;
  }

  [[nodiscard]] virtual std::string kind() const = 0;

 protected:
  virtual ConfidenceField score_masked(const DecodeState& state, std::size_t step) = 0;

  virtual void check_field(const DecodeState& state, const ConfidenceField& field) const {
    if (field.length() != state.size() || field.size() != state.masked_count()) {
      throw InvariantViolation("denoiser returned a field whose domain differs from the masked set");
    }
    for (Position p = 0; p < state.size(); ++p) {
      if (field.contains(p) != state.is_masked(p)) {
        throw InvariantViolation("denoiser scored a finalized position");
      }
      if (field.contains(p)) {
        double s = field.score(p);
        if (!(s >= 0.0 && s <= 1.0)) throw InvariantViolation("denoiser score outside [0, 1]");
      }
    }
  }
};

/// Context-free hash scores. Bit-compatible with the echo backend of the
/// external protocol.
class UniformDenoiser final : public Denoiser {
 public:
  UniformDenoiser(std::int64_t seed, std::uint32_t vocab_size)
      : seed_(seed), vocab_size_(vocab_size) {
    if (vocab_size == 0) throw DomainError("UniformDenoiser: vocab_size must be positive");
  }

  [[nodiscard]] std::string kind() const override { return "uniform"; }

  static ScoredToken entry(std::int64_t seed, std::uint32_t vocab_size, Position p,
                           std::size_t step) {
    using hashing::Tag;
    const auto tok = hashing::hash(seed, Tag::Token, p, step) % vocab_size;
    return ScoredToken{TokenId{static_cast<std::uint32_t>(tok)},
                       hashing::uniform01(seed, Tag::Score, p, step)};
  }

 protected:
  ConfidenceField score_masked(const DecodeState& state, std::size_t step) override {
    ConfidenceField field(state.size());
    for (Position p = 0; p < state.size(); ++p)
      if (state.is_masked(p)) field.set(p, entry(seed_, vocab_size_, p, step));
    return field;
  }

 private:
  std::int64_t seed_;
  std::uint32_t vocab_size_;
};

struct OracleParams {
  double base = 0.1;
  double gain = 0.8;
  std::size_t window = 2;
  double noise_amp = 0.05;
  double segment_discount = 0.25;
  // Count the virtual prompt block (its own segment) as finalized context.
  bool prompt_context = true;

  void validate() const {
    if (!(base >= 0.0 && base <= 1.0)) throw DomainError("oracle: base must lie in [0, 1]");
    if (!(gain >= 0.0)) throw DomainError("oracle: gain must be non-negative");
    if (window == 0) throw DomainError("oracle: window must be positive");
    if (!(noise_amp >= 0.0)) throw DomainError("oracle: noise_amp must be non-negative");
    if (!(segment_discount >= 0.0 && segment_discount <= 1.0)) {
      throw DomainError("oracle: segment_discount must lie in [0, 1]");
    }
  }

  friend bool operator==(const OracleParams&, const OracleParams&) = default;
};

/// Synthetic stand-in for a trained model: confidence grows with the amount
/// of finalized same-segment context within `window`, and the prediction is
/// correct with probability equal to that confidence.
///
///   s_j = clamp(base + gain * W_j + noise_amp * u(seed, j, step), 0, 1)
///   W_j = sum of weights of finalized p with |p - j| <= window, over 2*window
///
/// weight is 1 inside j's segment and segment_discount across segments.
class OracleDenoiser final : public Denoiser {
 public:
  OracleDenoiser(OracleParams params, std::vector<TokenId> target,
                 std::vector<std::size_t> segment_of, std::uint32_t vocab_size,
                 std::int64_t seed)
      : params_(params),
        target_(std::move(target)),
        segment_of_(std::move(segment_of)),
        vocab_size_(vocab_size),
        seed_(seed) {
    params_.validate();
    if (vocab_size_ < 2) throw DomainError("OracleDenoiser: vocab_size must be at least 2");
    if (!segment_of_.empty() && segment_of_.size() != target_.size()) {
      throw DomainError("OracleDenoiser: segment map length differs from target length");
    }
    for (TokenId t : target_)
      if (t.value >= vocab_size_) throw DomainError("OracleDenoiser: target token out of vocabulary");
  }

  [[nodiscard]] std::string kind() const override { return "oracle"; }
  [[nodiscard]] const OracleParams& params() const noexcept { return params_; }

  /// Weighted fraction of finalized context around j, in [0, 1].
  [[nodiscard]] double context_fraction(const DecodeState& state, Position j) const {
    const std::size_t w = params_.window;
    double sum = 0.0;
    const Position lo = j >= w ? j - w : 0;
    const Position hi = std::min(state.size() - 1, j + w);
    for (Position p = lo; p <= hi; ++p) {
      if (p == j || state.is_masked(p)) continue;
      sum += same_segment(p, j) ? 1.0 : params_.segment_discount;
    }
    if (params_.prompt_context && j < w) {
      sum += static_cast<double>(w - j) * params_.segment_discount;
    }
    return sum / static_cast<double>(2 * w);
  }

  [[nodiscard]] ScoredToken evaluate(const DecodeState& state, Position j, std::size_t step) const {
    using hashing::Tag;
    double s = params_.base + params_.gain * context_fraction(state, j) +
               params_.noise_amp * hashing::uniform_signed(seed_, Tag::Noise, j, step);
    s = std::clamp(s, 0.0, 1.0);
    const double v = hashing::uniform01(seed_, Tag::Prediction, j, 0);
    const TokenId truth = target_.at(j);
    const TokenId pred = v < s ? truth : TokenId{(truth.value + 1) % vocab_size_};
    return ScoredToken{pred, s};
  }

 protected:
  ConfidenceField score_masked(const DecodeState& state, std::size_t step) override {
    if (state.size() != target_.size()) {
      throw DomainError("OracleDenoiser: state length differs from target length");
    }
    ConfidenceField field(state.size());
    for (Position p = 0; p < state.size(); ++p)
      if (state.is_masked(p)) field.set(p, evaluate(state, p, step));
    return field;
  }

 private:
  [[nodiscard]] bool same_segment(Position a, Position b) const {
    return segment_of_.empty() || segment_of_[a] == segment_of_[b];
  }

  OracleParams params_;
  std::vector<TokenId> target_;
  std::vector<std::size_t> segment_of_;
  std::uint32_t vocab_size_;
  std::int64_t seed_;
};

}  // namespace wavesched
