// SPDX-License-Identifier: Apache-2.0
//
// Recognizer boundary: a loaded model handle feeds prepared 16 kHz audio to
// either the deterministic mock backend or an external child process.
//
// External protocol: the child receives WAV bytes on stdin and writes a
// UTF-8 transcript to stdout, exiting 0 on success. One process per request;
// requests on the same recognizer are serialized.

#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dynasr/audio.hpp"
#include "dynasr/error.hpp"
#include "dynasr/model_key.hpp"

namespace dynasr {

struct Transcript {
  std::string text;            // may be empty: a valid silence decode
  double decode_time_ms = 0.0;
};

struct BackendSpec {
  std::string kind = "mock";  // "mock" or "external"
  std::map<ModelKey, std::string> mock_transcripts;
  std::string external_command;  // template; {model_path} {language} {accent} expand
  int timeout_ms = 10000;

  void validate() const {
    if (kind != "mock" && kind != "external")
      raise(Err::BadConfig, "backend kind must be mock or external, got '" + kind + "'");
    if (kind == "external" && external_command.empty())
      raise(Err::BadConfig, "external backend requires a command");
    if (timeout_ms <= 0) raise(Err::BadConfig, "backend timeout_ms must be > 0");
  }
};

class Recognizer {
 public:
  virtual ~Recognizer() = default;
  virtual Transcript recognize(const AudioClip& asr_audio) = 0;
};

// Pure function of the configured text; audio content never changes the output.
class MockRecognizer final : public Recognizer {
 public:
  explicit MockRecognizer(std::string text) : text_(std::move(text)) {}

  Transcript recognize(const AudioClip&) override {
    const auto t0 = std::chrono::steady_clock::now();
    Transcript t;
    t.text = text_;
    t.decode_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    return t;
  }

 private:
  std::string text_;
};

namespace backend_detail {

inline bool valid_utf8(const std::string& s) {
  size_t i = 0;
  const auto* p = reinterpret_cast<const unsigned char*>(s.data());
  while (i < s.size()) {
    unsigned char c = p[i];
    size_t extra;
    if (c < 0x80) {
      i += 1;
      continue;
    } else if ((c & 0xE0) == 0xC0 && c >= 0xC2) {
      extra = 1;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
    } else if ((c & 0xF8) == 0xF0 && c <= 0xF4) {
      extra = 3;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (size_t k = 1; k <= extra; ++k)
      if ((p[i + k] & 0xC0) != 0x80) return false;
    i += extra + 1;
  }
  return true;
}

inline void ignore_sigpipe_once() {
  static const int installed = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return 0;
  }();
  (void)installed;
}

struct Pipe {
  int fds[2] = {-1, -1};
  Pipe() {
    if (::pipe(fds) != 0) raise(Err::LoadFailed, "pipe() failed");
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (fds[0] >= 0) ::close(fds[0]);
    fds[0] = -1;
  }
  void close_write() {
    if (fds[1] >= 0) ::close(fds[1]);
    fds[1] = -1;
  }
};

}  // namespace backend_detail

// Runs one child process per request: WAV in on stdin, transcript out on
// stdout. Never blocks past the configured timeout.
class ExternalRecognizer final : public Recognizer {
 public:
  ExternalRecognizer(std::string command, int timeout_ms)
      : command_(std::move(command)), timeout_ms_(timeout_ms) {}

  Transcript recognize(const AudioClip& asr_audio) override {
    std::lock_guard<std::mutex> serialize(mutex_);
    backend_detail::ignore_sigpipe_once();
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<uint8_t> wav = encode_wav(asr_audio);

    backend_detail::Pipe to_child, from_child;
    pid_t pid = ::fork();
    if (pid < 0) raise(Err::BackendCrashed, "fork() failed");
    if (pid == 0) {
      ::dup2(to_child.fds[0], STDIN_FILENO);
      ::dup2(from_child.fds[1], STDOUT_FILENO);
      ::close(to_child.fds[0]);
      ::close(to_child.fds[1]);
      ::close(from_child.fds[0]);
      ::close(from_child.fds[1]);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    to_child.close_read();
    from_child.close_write();
    ::fcntl(to_child.fds[1], F_SETFL, O_NONBLOCK);
    ::fcntl(from_child.fds[0], F_SETFL, O_NONBLOCK);

    const auto deadline = t0 + std::chrono::milliseconds(timeout_ms_);
    std::string output;
    size_t written = 0;
    bool timed_out = false;

    while (true) {
      struct pollfd fds[2];
      int nfds = 0;
      int out_idx = -1, in_idx = -1;
      if (from_child.fds[0] >= 0) {
        fds[nfds] = {from_child.fds[0], POLLIN, 0};
        out_idx = nfds++;
      }
      if (to_child.fds[1] >= 0 && written < wav.size()) {
        fds[nfds] = {to_child.fds[1], POLLOUT, 0};
        in_idx = nfds++;
      }
      if (nfds == 0) break;

      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) {
        timed_out = true;
        break;
      }
      const int wait_ms = static_cast<int>(
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1);
      const int rc = ::poll(fds, static_cast<nfds_t>(nfds), wait_ms);
      if (rc < 0) {
        if (errno == EINTR) continue;
        break;
      }
      if (rc == 0) {
        timed_out = true;
        break;
      }
      if (in_idx >= 0 && (fds[in_idx].revents & (POLLOUT | POLLERR | POLLHUP))) {
        const ssize_t n = ::write(to_child.fds[1], wav.data() + written,
                                  wav.size() - written);
        if (n > 0) {
          written += static_cast<size_t>(n);
          if (written == wav.size()) to_child.close_write();
        } else if (n < 0 && errno != EAGAIN && errno != EINTR) {
          to_child.close_write();  // child stopped reading; it may still answer
        }
      }
      if (out_idx >= 0 && (fds[out_idx].revents & (POLLIN | POLLHUP | POLLERR))) {
        char buf[4096];
        const ssize_t n = ::read(from_child.fds[0], buf, sizeof(buf));
        if (n > 0) {
          output.append(buf, static_cast<size_t>(n));
        } else if (n == 0) {
          from_child.close_read();
          to_child.close_write();
        } else if (errno != EAGAIN && errno != EINTR) {
          from_child.close_read();
        }
      }
    }

    int status = 0;
    if (timed_out) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      raise(Err::BackendTimeout,
            "no response within " + std::to_string(timeout_ms_) + " ms");
    }
    ::waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
      raise(Err::BackendCrashed,
            WIFEXITED(status)
                ? "exit code " + std::to_string(WEXITSTATUS(status))
                : "terminated by signal " + std::to_string(WTERMSIG(status)));
    if (!backend_detail::valid_utf8(output))
      raise(Err::InvalidBackendOutput, "transcript is not valid UTF-8");
    if (!output.empty() && output.back() == '\n') output.pop_back();

    Transcript t;
    t.text = std::move(output);
    t.decode_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    return t;
  }

 private:
  std::string command_;
  int timeout_ms_;
  std::mutex mutex_;  // one request at a time per recognizer
};

namespace backend_detail {

inline std::string expand_placeholders(std::string tpl, const ModelKey& key,
                                       const std::string& artifact_path) {
  auto replace_all = [](std::string& s, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
      s.replace(pos, from.size(), to);
      pos += to.size();
    }
  };
  replace_all(tpl, "{model_path}", artifact_path);
  replace_all(tpl, "{language}", key.language);
  replace_all(tpl, "{accent}", key.accent);
  return tpl;
}

}  // namespace backend_detail

}  // namespace dynasr
