#pragma once

// Backend talking to a remote diffusion service over the JSON wire protocol.

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"

#include "gazeforge/backend.hpp"

namespace gazeforge {

struct HttpBackendOptions {
  std::string base_url = "http://127.0.0.1:7860";
  std::int64_t deadline_ms = 60000;
  int max_retries = 2;
  std::vector<std::int64_t> backoff_ms{1000, 2000};
  std::string bearer_token;
};

class HttpBackend final : public Backend {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpBackend(HttpBackendOptions options, Sleeper sleeper = default_sleeper())
      : options_(std::move(options)), sleeper_(std::move(sleeper)) {}

  BackendResult generate(const GenerateRequest& req) override {
    req.validate();
    const std::string body = encode_generate_request(req);
    return with_retries([&] { return post("/v1/generate", body, req.width, req.height); });
  }

  BackendResult inpaint(const InpaintRequest& req) override {
    req.validate();
    const std::string body = encode_inpaint_request(req);
    return with_retries([&] { return post("/v1/inpaint", body, req.width, req.height); });
  }

  /// Number of HTTP attempts made by the most recent call.
  int last_attempts() const { return last_attempts_; }

  static Sleeper default_sleeper() {
    return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

 private:
  template <typename Attempt>
  BackendResult with_retries(Attempt attempt) {
    last_attempts_ = 0;
    for (int retry = 0;; ++retry) {
      ++last_attempts_;
      BackendResult r = attempt();
      if (ok(r)) return r;
      const auto& err = std::get<BackendError>(r);
      if (!retryable(err.kind) || retry >= options_.max_retries) return r;
      std::int64_t wait = 0;
      if (!options_.backoff_ms.empty())
        wait = options_.backoff_ms[std::min<std::size_t>(retry, options_.backoff_ms.size() - 1)];
      sleeper_(std::chrono::milliseconds(wait));
    }
  }

  BackendResult post(const std::string& path, const std::string& body, int w, int h) {
    httplib::Client client(options_.base_url);
    const auto deadline = std::chrono::milliseconds(options_.deadline_ms);
    const auto sec = std::chrono::duration_cast<std::chrono::seconds>(deadline);
    const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(deadline - sec);
    client.set_connection_timeout(sec.count(), usec.count());
    client.set_read_timeout(sec.count(), usec.count());
    client.set_write_timeout(sec.count(), usec.count());
    httplib::Headers headers;
    if (!options_.bearer_token.empty())
      headers.emplace("Authorization", "Bearer " + options_.bearer_token);

    const auto started = std::chrono::steady_clock::now();
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      const bool timed_out = err == httplib::Error::Read || err == httplib::Error::Write ||
                             err == httplib::Error::ConnectionTimeout ||
                             std::chrono::steady_clock::now() - started >= deadline;
      return BackendError{timed_out ? BackendErrorKind::timeout : BackendErrorKind::unavailable,
                          httplib::to_string(err)};
    }
    if (res->status == 200) return decode_image_response(res->body, w, h);
    if (res->status >= 500)
      return BackendError{BackendErrorKind::unavailable, "HTTP " + std::to_string(res->status)};
    if (res->status >= 400)
      return BackendError{BackendErrorKind::rejected,
                          "HTTP " + std::to_string(res->status) + ": " + res->body};
    return BackendError{BackendErrorKind::malformed_response,
                        "unexpected HTTP status " + std::to_string(res->status)};
  }

  HttpBackendOptions options_;
  Sleeper sleeper_;
  int last_attempts_ = 0;
};

}  // namespace gazeforge
