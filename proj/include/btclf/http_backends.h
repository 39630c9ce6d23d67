#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "btclf/backends.h"
#include "btclf/errors.h"

namespace httplib {
class Server;
}

namespace btclf {

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{50};
  double backoff_multiplier = 2.0;
};

// Runs `fn`, retrying retryable BackendErrors with exponential backoff.
template <typename Fn>
auto WithRetry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn());

// Client for the encoder protocol: GET /meta, POST /encode.
class HttpEncoder : public Encoder {
 public:
  explicit HttpEncoder(std::string base_url, RetryPolicy retry = {},
                       std::chrono::seconds timeout = std::chrono::seconds(60));

  EncoderMeta Meta() override;
  LayerHiddenStates Encode(const EncoderRequest& request) override;

 private:
  std::string base_url_;
  RetryPolicy retry_;
  std::chrono::seconds timeout_;
};

// Client for the teacher protocol: /train_batch, /predict, /save, /load.
class HttpTeacher : public TeacherBackend {
 public:
  explicit HttpTeacher(std::string base_url, RetryPolicy retry = {},
                       std::chrono::seconds timeout = std::chrono::seconds(600));

  double TrainBatch(const std::vector<std::string>& texts,
                    const std::vector<std::string>& gold_words,
                    double learning_rate, bool apply_update) override;
  std::vector<std::vector<double>> Predict(
      const std::vector<std::string>& texts,
      const std::vector<std::string>& candidate_words) override;
  std::string Save() override;
  void Load(const std::string& artifact_id) override;
  // Asks the server for a freshly initialized teacher (POST /reset).
  void Reset();

 private:
  std::string base_url_;
  RetryPolicy retry_;
  std::chrono::seconds timeout_;
};

// Serves an in-process Encoder and/or TeacherBackend over the HTTP protocol.
// Calls into the backends are serialized.
class BackendServer {
 public:
  BackendServer();
  ~BackendServer();

  BackendServer(const BackendServer&) = delete;
  BackendServer& operator=(const BackendServer&) = delete;

  void ServeEncoder(std::shared_ptr<Encoder> encoder);
  // `factory` builds the teacher at startup and again on every /reset.
  void ServeTeacher(std::function<std::shared_ptr<TeacherBackend>()> factory);

  // Binds (port 0 picks a free port) and serves on a background thread.
  int Start(const std::string& host = "127.0.0.1", int port = 0);
  // Blocks serving on the calling thread.
  void Listen(const std::string& host, int port);
  void Stop();

  std::string url() const;

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::mutex mu_;
  std::shared_ptr<TeacherBackend> teacher_;
  // Instances that produced each saved artifact, so /load works after /reset.
  std::map<std::string, std::shared_ptr<TeacherBackend>> saved_by_;
  std::string host_;
  int port_ = 0;
};

template <typename Fn>
auto WithRetry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
  auto backoff = policy.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const BackendError& e) {
      if (!e.retryable() || attempt >= policy.max_attempts) throw;
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::chrono::milliseconds(static_cast<long long>(
        static_cast<double>(backoff.count()) * policy.backoff_multiplier));
  }
}

}  // namespace btclf
