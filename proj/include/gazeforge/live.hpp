#pragma once

// Real-time session loop. Tick k runs at wall time start + k/tick_hz; each
// tick collects async backend results, delivers the gaze received since the
// previous tick, ticks the engine and pushes at most one crossfade frame.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "gazeforge/compositor.hpp"
#include "gazeforge/http_backend.hpp"
#include "gazeforge/runtime.hpp"
#include "gazeforge/server.hpp"

namespace gazeforge {

/// Steps through one crossfade, one frame per call.
class FramePump {
 public:
  void start(CrossfadePlan plan) {
    plan_ = std::move(plan);
    next_ = 1;
  }
  bool active() const { return plan_.has_value(); }

  std::optional<Image> next() {
    if (!plan_) return std::nullopt;
    Image frame = interpolator_.frame_at(*plan_, next_);
    if (++next_ > plan_->n_frames) plan_.reset();
    return frame;
  }

 private:
  CrossfadeInterpolator interpolator_;
  std::optional<CrossfadePlan> plan_;
  int next_ = 1;
};

inline std::unique_ptr<Backend> make_backend(const EngineConfig& cfg) {
  if (cfg.backend == BackendKind::http) return std::make_unique<HttpBackend>(cfg.http);
  return std::make_unique<MockBackend>();
}

struct LiveOptions {
  std::optional<std::string> record_path;
  bool headless = false;
  std::optional<Trace> inject;            // scripted gaze, played on the session clock
  std::optional<std::int64_t> duration_ms;
  const std::atomic<bool>* stop = nullptr;
  std::function<void(unsigned short)> on_listening;
};

struct LiveSummary {
  std::string pristine_hash;
  std::vector<CommitInfo> commits;
  Mode final_mode = Mode::PRISTINE_IDLE;
  std::int64_t end_ms = 0;
};

namespace detail {

class LiveObserver final : public SessionObserver {
 public:
  LiveObserver(Gateway* gateway, FramePump& pump) : gateway_(gateway), pump_(pump) {}
  void on_image(const ImageRef& img) override {
    if (gateway_) gateway_->on_image(img);
  }
  void on_state(Mode m, std::size_t level, std::int64_t t) override {
    if (gateway_) gateway_->on_state(m, level, t);
  }
  void on_crossfade(const CrossfadePlan& plan) override {
    if (gateway_) pump_.start(plan);
  }
  void on_mask(const AttentionMask& mask) override {
    if (gateway_) gateway_->on_mask(mask);
  }

 private:
  Gateway* gateway_;
  FramePump& pump_;
};

}  // namespace detail

inline LiveSummary run_live(const EngineConfig& config, const LiveOptions& opts) {
  using clock = std::chrono::steady_clock;
  std::unique_ptr<Backend> backend = make_backend(config);
  std::unique_ptr<FileLogWriter> log;
  if (opts.record_path) log = std::make_unique<FileLogWriter>(*opts.record_path);

  GazeInbox inbox;
  FramePump pump;
  const auto t0 = clock::now();
  auto session_ms = [t0] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - t0).count();
  };

  std::unique_ptr<Gateway> gateway;
  if (!opts.headless) gateway = std::make_unique<Gateway>(config, inbox, session_ms);
  detail::LiveObserver observer(gateway.get(), pump);
  SessionDriver driver(config, *backend, log.get(), &observer);
  driver.start();
  if (gateway) {
    const unsigned short port = gateway->start();
    if (opts.on_listening) opts.on_listening(port);
  }

  GazeIngestor injector;
  std::size_t next_injected = 0;
  std::int64_t last_tick = 0;
  for (std::int64_t k = 0;; ++k) {
    const std::int64_t T = config.tick_time_ms(k);
    if (opts.duration_ms && T > *opts.duration_ms) break;
    if (opts.stop && opts.stop->load()) break;
    std::this_thread::sleep_until(t0 + std::chrono::milliseconds(T));

    if (opts.inject) {
      const auto& samples = opts.inject->samples;
      for (; next_injected < samples.size() && samples[next_injected].t_ms <= T; ++next_injected) {
        const auto& s = samples[next_injected];
        try {
          const GazeSample g = injector.ingest(s.x, s.y, s.t_ms, s.valid, 1.0, 1.0);
          inbox.push(g.x, g.y, g.valid, g.t_ms);
        } catch (const StaleSampleError&) {
        }
      }
    }

    driver.poll(T);
    driver.deliver_gaze(inbox.drain(T), T);
    driver.tick(T);
    if (gateway && pump.active())
      if (auto frame = pump.next()) gateway->send_frame(share(std::move(*frame)));
    last_tick = T;
  }

  if (gateway) gateway->stop();
  driver.wait_idle();
  // A result that lands after the last tick is not delivered: the log must end
  // at a state a replay can reach.
  driver.finish(last_tick);

  return {driver.pristine_hash(), driver.commits(), driver.state().mode, last_tick};
}

}  // namespace gazeforge
