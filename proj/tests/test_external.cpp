#include <gtest/gtest.h>

#include <chrono>

#include "wavesched/harness.hpp"

using namespace wavesched;
using namespace std::chrono_literals;

namespace {

std::vector<std::string> echo(std::initializer_list<std::string> extra = {}) {
  std::vector<std::string> cmd{WAVESCHED_ECHO_ADAPTER};
  cmd.insert(cmd.end(), extra);
  return cmd;
}

DecodeState partly_done(std::size_t n) {
  DecodeState s = DecodeState::fresh(n);
  std::vector<std::pair<Position, TokenId>> a{{1, TokenId{4}}, {5, TokenId{2}}};
  return finalize(s, a);
}

}  // namespace

TEST(ExternalDenoiser, EncodesQuery) {
  EXPECT_EQ(ExternalDenoiser::encode_query(partly_done(6), 3),
            R"({"type":"score","step":3,"n":6,"slots":[null,4,null,null,null,2]})");
}

TEST(ExternalDenoiser, EchoMatchesInProcessUniform) {
  ExternalDenoiser ext(echo(), -7, 64);
  UniformDenoiser local(-7, 64);
  for (std::size_t step = 1; step <= 5; ++step) {
    const DecodeState s = step % 2 ? DecodeState::fresh(30) : partly_done(30);
    ASSERT_EQ(ext.score_all(s, step), local.score_all(s, step));
  }
  EXPECT_EQ(ext.shutdown(), 0);
}

TEST(ExternalDenoiser, FullDecodeMatchesUniform) {
  for (Strategy st : {Strategy::Standard, Strategy::Block, Strategy::Wavefront}) {
    RunSetup setup;
    setup.config.length = 40;
    setup.config.steps = 10;
    setup.config.strategy = st;
    setup.config.seed = 21;
    setup.denoiser.kind = DenoiserKind::Uniform;
    const RunTrace local = execute_run(setup);
    setup.denoiser.kind = DenoiserKind::External;
    setup.denoiser.command = echo();
    const RunTrace remote = execute_run(setup);
    ASSERT_TRUE(remote.completed()) << remote.error;
    EXPECT_EQ(remote.steps, local.steps);
    EXPECT_EQ(remote.final_sequence, local.final_sequence);
  }
}

TEST(ExternalDenoiser, SpawnFailure) {
  EXPECT_THROW(ExternalDenoiser({"/nonexistent/adapter-binary"}, 0, 8), SpawnError);
  EXPECT_THROW(ExternalDenoiser({}, 0, 8), SpawnError);
}

TEST(ExternalDenoiser, VersionMismatch) {
  EXPECT_THROW(ExternalDenoiser(echo({"--version", "2"}), 0, 8), VersionMismatch);
}

TEST(ExternalDenoiser, UnknownHandshakeField) {
  EXPECT_THROW(ExternalDenoiser(echo({"--extra-ack-field"}), 0, 8), ProtocolError);
}

TEST(ExternalDenoiser, HandshakeTimeout) {
  ExternalOptions opts;
  opts.handshake_timeout = 300ms;
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_THROW(ExternalDenoiser(echo({"--silent"}), 0, 8, opts), HandshakeTimeout);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 10s);
}

TEST(ExternalDenoiser, MalformedReply) {
  ExternalDenoiser d(echo({"--malformed-after", "1"}), 0, 8);
  EXPECT_NO_THROW(d.score_all(DecodeState::fresh(4), 1));
  EXPECT_THROW(d.score_all(DecodeState::fresh(4), 2), ProtocolError);
}

TEST(ExternalDenoiser, MissingEntry) {
  ExternalDenoiser d(echo({"--drop-entry"}), 0, 8);
  EXPECT_THROW(d.score_all(DecodeState::fresh(4), 1), ProtocolError);
}

TEST(ExternalDenoiser, AdapterExitMidRunAbortsWithPartialTrace) {
  RunSetup setup;
  setup.config.length = 32;
  setup.config.steps = 8;
  setup.denoiser.kind = DenoiserKind::External;
  setup.denoiser.command = echo({"--exit-after", "3"});
  const RunTrace tr = execute_run(setup);
  EXPECT_FALSE(tr.completed());
  EXPECT_EQ(tr.steps.size(), 3u);
  EXPECT_FALSE(tr.error.empty());
  EXPECT_TRUE(accounting(tr).ok());
}

TEST(ExternalDenoiser, ReplyTimeout) {
  // The adapter exits instead of answering, which surfaces as EOF well
  // before the reply timeout.
  ExternalOptions opts;
  opts.reply_timeout = 2s;
  ExternalDenoiser d(echo({"--exit-after", "0"}), 0, 8, opts);
  EXPECT_THROW(d.score_all(DecodeState::fresh(4), 1), ProtocolError);
}
