#pragma once

// Host side of the external denoiser protocol: newline-delimited JSON over
// the adapter's stdin/stdout. See docs/protocol.md for the wire format.
//
// The adapter's stdin and stdout are both bound to one end of a Unix stream
// socket pair, so writes from the host use MSG_NOSIGNAL and a dead adapter
// surfaces as an error instead of SIGPIPE.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wavesched/denoise.hpp"
#include "wavesched/errors.hpp"

extern char** environ;

namespace wavesched {

inline constexpr int kProtocolVersion = 1;

struct ExternalOptions {
  std::chrono::milliseconds handshake_timeout{10'000};
  std::chrono::milliseconds reply_timeout{60'000};
};

namespace detail {

inline void require_exact_keys(const nlohmann::json& msg, std::initializer_list<const char*> keys,
                               const char* what) {
  if (!msg.is_object()) throw ProtocolError(std::string(what) + ": message is not a JSON object");
  std::set<std::string> expected(keys.begin(), keys.end());
  for (const auto& [k, v] : msg.items()) {
    if (!expected.count(k)) throw ProtocolError(std::string(what) + ": unknown field '" + k + "'");
  }
  for (const auto& k : expected) {
    if (!msg.contains(k)) throw ProtocolError(std::string(what) + ": missing field '" + k + "'");
  }
}

/// Owns a spawned adapter process and a line-oriented socket to it.
class LineChannel {
 public:
  LineChannel() = default;
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;
  ~LineChannel() { terminate(); }

  void spawn(const std::vector<std::string>& argv) {
    if (argv.empty()) throw SpawnError("external denoiser: empty command");
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
      throw SpawnError(std::string("socketpair: ") + std::strerror(errno));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, sv[1], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, sv[1], STDOUT_FILENO);

    std::vector<char*> cargv;
    cargv.reserve(argv.size() + 1);
    for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
    cargv.push_back(nullptr);

    pid_t pid = -1;
    const int rc = ::posix_spawnp(&pid, cargv[0], &actions, nullptr, cargv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(sv[1]);
    if (rc != 0) {
      ::close(sv[0]);
      throw SpawnError("cannot launch '" + argv[0] + "': " + std::strerror(rc));
    }
    pid_ = pid;
    fd_ = sv[0];
  }

  void send_line(const std::string& line) {
    std::string buf = line;
    buf.push_back('\n');
    std::size_t off = 0;
    while (off < buf.size()) {
      const ssize_t n = ::send(fd_, buf.data() + off, buf.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("write to adapter failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  /// Returns the next line, or throws `Timeout` when the deadline passes.
  template <typename Timeout>
  std::string read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw Timeout("adapter did not reply within " +
                                           std::to_string(timeout.count()) + " ms");
      pollfd pfd{fd_, POLLIN, 0};
      const int pr = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (pr < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (pr == 0) continue;
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("read from adapter failed: ") + std::strerror(errno));
      }
      if (n == 0) throw ProtocolError("adapter closed the connection");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  /// Waits briefly for a clean exit, then kills.
  int close_gracefully(std::chrono::milliseconds grace) {
    if (pid_ < 0) return 0;
    ::shutdown(fd_, SHUT_WR);
    const auto deadline = std::chrono::steady_clock::now() + grace;
    int status = 0;
    while (std::chrono::steady_clock::now() < deadline) {
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) {
        pid_ = -1;
        close_fd();
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    terminate();
    return -1;
  }

  void terminate() noexcept {
    if (pid_ >= 0) {
      ::kill(pid_, SIGKILL);
      int status = 0;
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
    close_fd();
  }

  [[nodiscard]] bool alive() const noexcept { return pid_ >= 0; }

 private:
  void close_fd() noexcept {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace detail

/// Denoiser backed by an adapter subprocess. Queries are strictly serial.
class ExternalDenoiser final : public Denoiser {
 public:
  ExternalDenoiser(std::vector<std::string> command, std::int64_t seed, std::uint32_t vocab_size,
                   ExternalOptions opts = {})
      : command_(std::move(command)), vocab_size_(vocab_size), opts_(opts) {
    channel_.spawn(command_);
    try {
      handshake(seed);
    } catch (...) {
      channel_.terminate();
      throw;
    }
  }

  ~ExternalDenoiser() override {
    if (!channel_.alive()) return;
    try {
      channel_.send_line(R"({"type":"bye"})");
    } catch (...) {
    }
    channel_.close_gracefully(std::chrono::milliseconds(2000));
  }

  [[nodiscard]] std::string kind() const override { return "external"; }

  /// Sends "bye" and returns the adapter's exit status (-1 if it had to be killed).
  int shutdown() {
    if (!channel_.alive()) return -1;
    channel_.send_line(R"({"type":"bye"})");
    return channel_.close_gracefully(std::chrono::milliseconds(5000));
  }

  static std::string encode_query(const DecodeState& state, std::size_t step) {
    nlohmann::ordered_json slots = nlohmann::ordered_json::array();
    for (const auto& s : state.sequence.slots) {
      if (s.masked()) slots.push_back(nullptr);
      else slots.push_back(s.token->value);
    }
    nlohmann::ordered_json q = {{"type", "score"}, {"step", step}, {"n", state.size()}, {"slots", slots}};
    return q.dump();
  }

 protected:
  ConfidenceField score_masked(const DecodeState& state, std::size_t step) override {
    if (!channel_.alive()) throw ProtocolError("external denoiser session is closed");
    try {
      channel_.send_line(encode_query(state, step));
      const std::string line = channel_.read_line<ProtocolError>(opts_.reply_timeout);
      return decode_reply(line, state, step);
    } catch (const ProtocolError&) {
      channel_.terminate();
      throw;
    }
  }

  void check_field(const DecodeState&, const ConfidenceField&) const override {}

 private:
  void handshake(std::int64_t seed) {
    nlohmann::ordered_json hello = {{"type", "hello"}, {"version", kProtocolVersion},
                            {"seed", seed}, {"vocab_size", vocab_size_}};
    channel_.send_line(hello.dump());
    const std::string line = channel_.read_line<HandshakeTimeout>(opts_.handshake_timeout);
    nlohmann::json msg = parse(line);
    detail::require_exact_keys(msg, {"type", "version"}, "hello_ack");
    if (msg["type"] != "hello_ack") throw ProtocolError("expected hello_ack, got " + msg["type"].dump());
    if (!msg["version"].is_number_integer()) throw ProtocolError("hello_ack: version is not an integer");
    if (msg["version"].get<long long>() != kProtocolVersion) {
      throw VersionMismatch("adapter speaks protocol version " + msg["version"].dump() +
                            ", host speaks " + std::to_string(kProtocolVersion));
    }
  }

  static nlohmann::json parse(const std::string& line) {
    try {
      return nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ProtocolError(std::string("malformed line from adapter: ") + e.what());
    }
  }

  ConfidenceField decode_reply(const std::string& line, const DecodeState& state,
                               std::size_t step) const {
    nlohmann::json msg = parse(line);
    detail::require_exact_keys(msg, {"type", "step", "entries"}, "scores");
    if (msg["type"] != "scores") throw ProtocolError("expected scores, got " + msg["type"].dump());
    if (!msg["step"].is_number_unsigned() || msg["step"].get<std::size_t>() != step) {
      throw ProtocolError("scores: step does not match the query");
    }
    if (!msg["entries"].is_array()) throw ProtocolError("scores: entries is not an array");
    ConfidenceField field(state.size());
    for (const auto& e : msg["entries"]) {
      detail::require_exact_keys(e, {"pos", "token", "score"}, "scores entry");
      if (!e["pos"].is_number_unsigned() || !e["token"].is_number_unsigned() ||
          !e["score"].is_number()) {
        throw ProtocolError("scores entry: wrong field types");
      }
      const auto pos = e["pos"].get<std::size_t>();
      const auto tok = e["token"].get<std::uint64_t>();
      const double score = e["score"].get<double>();
      if (pos >= state.size() || !state.is_masked(pos)) {
        throw ProtocolError("scores entry for a position that is not masked: " + std::to_string(pos));
      }
      if (field.contains(pos)) throw ProtocolError("duplicate scores entry for position " + std::to_string(pos));
      if (tok >= vocab_size_) throw ProtocolError("scores entry token outside the vocabulary");
      if (!std::isfinite(score) || score < 0.0 || score > 1.0) {
        throw ProtocolError("scores entry score outside [0, 1]");
      }
      field.set(pos, ScoredToken{TokenId{static_cast<std::uint32_t>(tok)}, score});
    }
    if (field.size() != state.masked_count()) {
      throw ProtocolError("scores: reply does not cover every masked position");
    }
    return field;
  }

  std::vector<std::string> command_;
  std::uint32_t vocab_size_;
  ExternalOptions opts_;
  detail::LineChannel channel_;
};

}  // namespace wavesched
