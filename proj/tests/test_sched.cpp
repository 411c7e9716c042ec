#include <gtest/gtest.h>

#include <map>
#include <random>

#include "wavesched/decode.hpp"
#include "wavesched/sched.hpp"

using namespace wavesched;

namespace {

ConfidenceField field_of(std::size_t n, const std::map<Position, double>& scores) {
  ConfidenceField f(n);
  for (const auto& [p, s] : scores) f.set(p, ScoredToken{TokenId{static_cast<std::uint32_t>(p)}, s});
  return f;
}

DecodeState state_with(std::size_t n, const PositionSet& done, const PositionSet& wave) {
  DecodeState s = DecodeState::fresh(n);
  std::vector<std::pair<Position, TokenId>> a;
  for (Position p : done) a.emplace_back(p, TokenId{0});
  s = finalize(s, a);
  s.wavefront = wave;
  return s;
}

ConfidenceField random_field(const DecodeState& s, std::mt19937_64& rng, int levels) {
  ConfidenceField f(s.size());
  for (Position p = 0; p < s.size(); ++p)
    if (s.is_masked(p)) f.set(p, ScoredToken{TokenId{0}, static_cast<double>(rng() % levels) / levels});
  return f;
}

// Straight-line restatement of one wavefront step, kept independent of the
// library's helpers.
struct NaiveStep {
  std::vector<Position> selected;
  PositionSet wave_after;
};

NaiveStep naive_wavefront(const ConfidenceField& f, const DecodeState& s, std::size_t k,
                          std::size_t f_cap, std::size_t radius) {
  auto better = [&](Position a, Position b) {
    return f.score(a) > f.score(b) || (f.score(a) == f.score(b) && a < b);
  };
  NaiveStep out;
  std::vector<bool> taken(s.size(), false);
  auto pick_best = [&](bool from_wave) {
    std::optional<Position> best;
    for (Position p = 0; p < s.size(); ++p) {
      if (!s.is_masked(p) || taken[p]) continue;
      if ((s.wavefront.count(p) > 0) != from_wave) continue;
      if (!best || better(p, *best)) best = p;
    }
    return best;
  };
  for (bool from_wave : {true, false}) {
    while (out.selected.size() < k) {
      auto p = pick_best(from_wave);
      if (!p) break;
      taken[*p] = true;
      out.selected.push_back(*p);
    }
  }
  std::vector<Position> cand;
  for (Position j = 0; j < s.size(); ++j) {
    if (!s.is_masked(j) || taken[j]) continue;
    std::size_t d = j + 1;
    for (Position i = 0; i < s.size(); ++i) {
      if (s.is_masked(i) && !taken[i]) continue;
      d = std::min<std::size_t>(d, i > j ? i - j : j - i);
    }
    if (d <= radius) cand.push_back(j);
  }
  std::sort(cand.begin(), cand.end(), better);
  if (cand.size() > f_cap) cand.resize(f_cap);
  out.wave_after = PositionSet(cand.begin(), cand.end());
  return out;
}

}  // namespace

TEST(StepBudget, Examples) {
  std::vector<std::size_t> got;
  for (std::size_t t = 1; t <= 4; ++t) got.push_back(step_budget(t, 10, 4));
  EXPECT_EQ(got, (std::vector<std::size_t>{3, 3, 2, 2}));
  got.clear();
  for (std::size_t t = 1; t <= 4; ++t) got.push_back(step_budget(t, 8, 4));
  EXPECT_EQ(got, (std::vector<std::size_t>{2, 2, 2, 2}));
  for (std::size_t t = 1; t <= 1024; ++t) ASSERT_EQ(step_budget(t, 1024, 1024), 1u);
}

TEST(StepBudget, SumsToLengthAndDiffersByAtMostOne) {
  for (std::size_t n = 1; n <= 60; ++n) {
    for (std::size_t steps = 1; steps <= 70; ++steps) {
      std::size_t sum = 0;
      std::size_t lo = SIZE_MAX;
      std::size_t hi = 0;
      for (std::size_t t = 1; t <= steps; ++t) {
        const std::size_t k = step_budget(t, n, steps);
        sum += k;
        lo = std::min(lo, k);
        hi = std::max(hi, k);
      }
      ASSERT_EQ(sum, n);
      ASSERT_LE(hi - lo, 1u);
    }
  }
  EXPECT_THROW(step_budget(0, 4, 4), RangeError);
  EXPECT_THROW(step_budget(5, 4, 4), RangeError);
}

TEST(InitWavefront, FirstPositions) {
  ScheduleConfig c;
  c.length = 10;
  c.wave_size = 3;
  EXPECT_EQ(init_wavefront(c), (PositionSet{0, 1, 2}));
  c.wave_size = 20;
  EXPECT_EQ(init_wavefront(c).size(), 10u);
}

TEST(SelectStandard, TopKWithIndexTieBreak) {
  const auto f = field_of(6, {{0, 0.5}, {1, 0.9}, {2, 0.5}, {4, 0.7}, {5, 0.1}});
  EXPECT_EQ(select_standard(f, 3), (std::vector<Position>{1, 4, 0}));
  EXPECT_EQ(select_standard(f, 10).size(), 5u);
}

TEST(SelectBlock, LowestBlockFirstThenOverflow) {
  const DecodeState s = state_with(8, {0, 1}, {});
  const auto f = field_of(8, {{2, 0.1}, {3, 0.2}, {4, 0.9}, {5, 0.8}, {6, 0.3}, {7, 0.4}});
  EXPECT_EQ(select_block(f, s, 3, 4), (std::vector<Position>{3, 2, 4}));
  EXPECT_EQ(select_block(f, s, 1, 4), (std::vector<Position>{3}));
  EXPECT_THROW(select_block(f, s, 1, 0), DomainError);
}

TEST(WavefrontStep, HandExample) {
  // N = 6, W = {0, 1}, k = 1, R = 1. Position 2 scores highest but sits
  // outside W, so 1 is chosen.
  const DecodeState s = state_with(6, {}, {0, 1});
  const auto f = field_of(6, {{0, 0.3}, {1, 0.9}, {2, 0.95}, {3, 0.2}, {4, 0.1}, {5, 0.05}});
  ScheduleConfig c;
  c.length = 6;
  c.radius = 1;
  c.wave_size = 2;
  StepDecision d = wavefront_step(f, s, 1, c);
  EXPECT_EQ(d.selected, (std::vector<Position>{1}));
  EXPECT_TRUE(d.spilled.empty());
  EXPECT_EQ(d.wavefront_after, (PositionSet{0, 2}));

  c.wave_size = 1;
  d = wavefront_step(f, s, 1, c);
  EXPECT_EQ(d.wavefront_after, (PositionSet{2}));
}

TEST(WavefrontStep, SpillsFromOutsideWhenFrontierIsEmpty) {
  const DecodeState s = state_with(5, {}, {});
  const auto f = field_of(5, {{0, 0.1}, {1, 0.2}, {2, 0.8}, {3, 0.7}, {4, 0.3}});
  ScheduleConfig c;
  c.length = 5;
  c.radius = 1;
  c.wave_size = 4;
  const StepDecision d = wavefront_step(f, s, 2, c);
  EXPECT_EQ(d.selected, (std::vector<Position>{2, 3}));
  EXPECT_EQ(d.spilled, (std::vector<Position>{2, 3}));
  EXPECT_EQ(d.wavefront_after, (PositionSet{0, 1, 4}));
}

TEST(WavefrontStep, PartialSpill) {
  const DecodeState s = state_with(6, {}, {0});
  const auto f = field_of(6, {{0, 0.1}, {1, 0.2}, {2, 0.8}, {3, 0.7}, {4, 0.3}, {5, 0.0}});
  ScheduleConfig c;
  c.length = 6;
  c.radius = 1;
  c.wave_size = 8;
  const StepDecision d = wavefront_step(f, s, 2, c);
  EXPECT_EQ(d.selected, (std::vector<Position>{0, 2}));
  EXPECT_EQ(d.spilled, (std::vector<Position>{2}));
}

TEST(WavefrontStep, RejectsFinalizedPositionInWavefront) {
  const DecodeState s = state_with(4, {1}, {1, 2});
  const auto f = field_of(4, {{0, 0.1}, {2, 0.2}, {3, 0.3}});
  ScheduleConfig c;
  c.length = 4;
  EXPECT_THROW(wavefront_step(f, s, 1, c), InvariantViolation);
}

TEST(WavefrontStep, MatchesNaiveReference) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng() % 24;
    PositionSet done;
    PositionSet wave;
    for (Position p = 0; p < n; ++p) {
      if (rng() % 3 == 0) done.insert(p);
      else if (rng() % 2 == 0) wave.insert(p);
    }
    if (done.size() == n) continue;
    const DecodeState s = state_with(n, done, wave);
    const ConfidenceField f = random_field(s, rng, 5);
    ScheduleConfig c;
    c.length = n;
    c.wave_size = 1 + rng() % 8;
    c.radius = rng() % 4;
    const std::size_t k = 1 + rng() % 4;
    const StepDecision d = wavefront_step(f, s, k, c);
    const NaiveStep ref = naive_wavefront(f, s, k, c.wave_size, c.radius);
    ASSERT_EQ(d.selected, ref.selected) << "trial " << trial;
    ASSERT_EQ(d.wavefront_after, ref.wave_after) << "trial " << trial;
    ASSERT_LE(d.wavefront_after.size(), c.wave_size);
  }
}

TEST(WavefrontStep, IncrementalExpandGrowsAroundPicks) {
  const DecodeState s = state_with(10, {}, {4});
  const auto f = field_of(10, {{0, 0.1}, {1, 0.1}, {2, 0.1}, {3, 0.2}, {4, 0.9}, {5, 0.3},
                               {6, 0.1}, {7, 0.1}, {8, 0.1}, {9, 0.1}});
  ScheduleConfig c;
  c.length = 10;
  c.radius = 1;
  c.wave_size = 8;
  c.expand = ExpandRule::Incremental;
  const StepDecision d = wavefront_step(f, s, 1, c);
  EXPECT_EQ(d.wavefront_after, (PositionSet{3, 5}));
  // The set definition also admits position 0 through the prompt.
  c.expand = ExpandRule::SetDefinition;
  EXPECT_EQ(wavefront_step(f, s, 1, c).wavefront_after, (PositionSet{0, 3, 5}));
}

TEST(RunDecode, WideWavefrontReducesToStandard) {
  for (std::int64_t seed = 0; seed < 60; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    ScheduleConfig c;
    c.length = 1 + rng() % 32;
    c.steps = 1 + rng() % c.length;
    c.seed = seed;
    c.wave_size = c.length;
    c.radius = c.length;
    c.strategy = Strategy::Wavefront;
    UniformDenoiser d1(seed, 16);
    const RunTrace wf = run_decode(c, d1);
    c.strategy = Strategy::Standard;
    UniformDenoiser d2(seed, 16);
    const RunTrace st = run_decode(c, d2);
    ASSERT_EQ(wf.steps.size(), st.steps.size());
    for (std::size_t i = 0; i < wf.steps.size(); ++i) {
      ASSERT_EQ(wf.steps[i].decision.selected, st.steps[i].decision.selected) << "seed " << seed;
      ASSERT_TRUE(wf.steps[i].decision.spilled.empty());
    }
    ASSERT_EQ(wf.final_sequence, st.final_sequence);
  }
}

TEST(RunDecode, InvariantsAcrossStrategies) {
  for (Strategy st : {Strategy::Standard, Strategy::Block, Strategy::Wavefront}) {
    for (std::int64_t seed = 0; seed < 20; ++seed) {
      ScheduleConfig c;
      c.length = 40;
      c.steps = 7;
      c.wave_size = 3;
      c.radius = 1;
      c.block_size = 6;
      c.strategy = st;
      c.seed = seed;
      UniformDenoiser d(seed, 32);
      const RunTrace tr = run_decode(c, d);
      ASSERT_TRUE(tr.completed());
      ASSERT_EQ(tr.steps.size(), 7u);
      PositionSet seen;
      for (const auto& rec : tr.steps) {
        ASSERT_EQ(rec.decision.selected.size(), step_budget(rec.decision.step, 40, 7));
        for (Position p : rec.decision.selected) ASSERT_TRUE(seen.insert(p).second);
        ASSERT_LE(rec.decision.wavefront_after.size(), c.wave_size);
      }
      ASSERT_EQ(seen.size(), 40u);
      for (const auto& slot : tr.final_sequence) ASSERT_FALSE(slot.masked());
    }
  }
}

TEST(RunDecode, Deterministic) {
  ScheduleConfig c;
  c.length = 64;
  c.steps = 16;
  c.seed = 17;
  UniformDenoiser a(17, 64);
  UniformDenoiser b(17, 64);
  EXPECT_EQ(run_decode(c, a), run_decode(c, b));
}

TEST(RunDecode, MoreStepsThanTokensStopsEarly) {
  ScheduleConfig c;
  c.length = 3;
  c.steps = 8;
  c.strategy = Strategy::Standard;
  UniformDenoiser d(1, 8);
  const RunTrace tr = run_decode(c, d);
  EXPECT_EQ(tr.steps.size(), 3u);
}

TEST(Parsing, RoundTripsAndRejects) {
  for (Strategy s : {Strategy::Standard, Strategy::Block, Strategy::Wavefront})
    EXPECT_EQ(parse_strategy(to_string(s)), s);
  EXPECT_THROW(parse_strategy("greedy"), DomainError);
  EXPECT_THROW(parse_expand_rule("x"), DomainError);
  EXPECT_THROW(parse_outside_rule("x"), DomainError);
  ScheduleConfig c;
  c.steps = 0;
  EXPECT_THROW(c.validate(), DomainError);
}
