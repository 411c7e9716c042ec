#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "wavesched/trace_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result cli(const std::string& args) {
  const std::string cmd = std::string(WAVESCHED_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), p)) r.out += buf.data();
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string tmp(const std::string& name) { return (fs::path(::testing::TempDir()) / name).string(); }

}  // namespace

TEST(Cli, RunSucceedsAndWritesTrace) {
  const std::string trace = tmp("cli_run.jsonl");
  const Result r = cli("run --strategy wavefront --n 64 --t 16 --f 6 --r 2 --seed 3 --trace " + trace);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("status=completed"), std::string::npos);
  EXPECT_NO_THROW(wavesched::read_trace_file(trace));
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("run --strategy zigzag").code, 2);
  EXPECT_EQ(cli("run --t 0").code, 2);
  EXPECT_EQ(cli("run --base 3").code, 2);
  EXPECT_EQ(cli("run --denoiser external").code, 2);
  EXPECT_EQ(cli("sweep --spec /nonexistent.json").code, 2);
}

TEST(Cli, ProtocolErrorsExitThree) {
  EXPECT_EQ(cli(std::string("run --denoiser external --external-cmd \"") + WAVESCHED_ECHO_ADAPTER +
                " --version 9\"")
                .code,
            3);
  EXPECT_EQ(cli(std::string("run --denoiser external --external-cmd \"") + WAVESCHED_ECHO_ADAPTER +
                " --exit-after 2\"")
                .code,
            3);
  EXPECT_EQ(cli(std::string("run --denoiser external --n 16 --t 4 --external-cmd ") +
                WAVESCHED_ECHO_ADAPTER)
                .code,
            0);
}

TEST(Cli, VerifyAcceptsGoodTraceAndFlagsTampering) {
  const std::string trace = tmp("cli_verify.jsonl");
  ASSERT_EQ(cli("run --strategy block --n 48 --t 8 --b 6 --seed 4 --trace " + trace).code, 0);
  const Result ok = cli("verify --trace " + trace);
  EXPECT_EQ(ok.code, 0) << ok.out;

  // Tamper with the first step's recorded budget.
  std::ifstream in(trace);
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto at = body.find(R"("budget":6)");
  ASSERT_NE(at, std::string::npos);
  body.replace(at, 10, R"("budget":5)");
  const std::string bad = tmp("cli_verify_bad.jsonl");
  std::ofstream(bad) << body;
  const Result r = cli("verify --trace " + bad);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("violation"), std::string::npos);

  EXPECT_EQ(cli("verify --trace /nonexistent.jsonl").code, 1);
}

TEST(Cli, MhcoPrintsPerStepAndMean) {
  const std::string trace = tmp("cli_mhco.jsonl");
  ASSERT_EQ(cli("run --strategy standard --n 32 --t 8 --trace " + trace).code, 0);
  const Result r = cli("mhco --trace " + trace);
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("step,mhco\n", 0), 0u);
  EXPECT_NE(r.out.find("mean,0\n"), std::string::npos);
  // A radius wider than recorded needs the full score snapshot.
  EXPECT_EQ(cli("mhco --r 10 --trace " + trace).code, 1);
}

TEST(Cli, SweepWritesOutputs) {
  const fs::path out = fs::path(tmp("cli_sweep"));
  fs::remove_all(out);
  const std::string spec = tmp("cli_sweep.json");
  std::ofstream(spec) << R"({"task":{"n":32},"schedule":{"t":8,"strategies":["block","wavefront"]},)"
                      << R"("seeds":[1,2]})";
  const Result r = cli("sweep --spec " + spec + " --out " + out.string());
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(fs::exists(out / "summary.csv"));
  EXPECT_TRUE(fs::exists(out / "aggregate.csv"));
  EXPECT_NE(r.out.find("strategy,F,R,B,runs"), std::string::npos);
}
