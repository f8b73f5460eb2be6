#pragma once

// Drives a SessionState: feeds events through `step`, carries out the
// resulting actions against a backend, and records the session log. Also
// hosts the deterministic trace replay.

#include <chrono>
#include <cstdint>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gazeforge/backend.hpp"
#include "gazeforge/config.hpp"
#include "gazeforge/session.hpp"
#include "gazeforge/session_log.hpp"

namespace gazeforge {

/// Caps the gaze rate at 60 samples/s (validity changes always pass). Applying
/// it to its own output is a no-op, so recorded logs re-gate unchanged.
class GazeRateGate {
 public:
  bool admit(const GazeSample& s) {
    if (last_ && s.valid == last_->valid && (s.t_ms - last_->t_ms) * 60 < 1000) return false;
    last_ = s;
    return true;
  }

 private:
  std::optional<GazeSample> last_;
};

/// Thread-safe inbox between gaze producers (socket readers, injectors) and
/// the engine loop. Stamps are strictly increasing and always later than the
/// last drained tick, so a sample is delivered at the first tick whose time is
/// >= its stamp, both live and in replay.
class GazeInbox {
 public:
  void push(double x, double y, bool valid, std::int64_t now_ms) {
    std::lock_guard lock(mu_);
    std::int64_t t = std::max(now_ms, drained_through_ + 1);
    if (last_stamp_) t = std::max(t, *last_stamp_ + 1);
    last_stamp_ = t;
    pending_.push_back({t, x, y, valid});
  }

  std::vector<GazeSample> drain(std::int64_t tick_ms) {
    std::lock_guard lock(mu_);
    drained_through_ = std::max(drained_through_, tick_ms);
    std::vector<GazeSample> out;
    while (!pending_.empty() && pending_.front().t_ms <= tick_ms) {
      out.push_back(pending_.front());
      pending_.pop_front();
    }
    return out;
  }

 private:
  std::mutex mu_;
  std::deque<GazeSample> pending_;
  std::int64_t drained_through_ = -1;
  std::optional<std::int64_t> last_stamp_;
};

/// Receives what the outside world should see.
class SessionObserver {
 public:
  virtual ~SessionObserver() = default;
  virtual void on_image(const ImageRef&) {}
  virtual void on_state(Mode, std::size_t /*destruction_level*/, std::int64_t /*t_ms*/) {}
  virtual void on_crossfade(const CrossfadePlan&) {}
  virtual void on_mask(const AttentionMask&) {}
};

struct CommitInfo {
  std::int64_t t_ms = 0;
  std::string hash;
  ImageRef before;
  ImageRef after;
  MaskRef mask;
};

/// Full action log entry, kept for tests and audits.
struct ActionRecord {
  std::int64_t t_ms = 0;
  std::string name;
  std::string detail;
};

class SessionDriver {
 public:
  SessionDriver(EngineConfig config, Backend& backend, LogSink* log = nullptr,
                SessionObserver* observer = nullptr)
      : config_(std::move(config)), backend_(backend), log_(log), observer_(observer) {}

  /// Generates the opening landscape (blocking) and writes config_snapshot.
  void start() {
    if (log_) log_->write({0, "config_snapshot", config_to_json(config_)});
    SessionStart start = begin_session(config_);
    state_ = std::move(start.state);
    BackendResult r = backend_.generate(start.pristine_request);
    if (!ok(r))
      throw std::runtime_error("initial generation failed: " +
                               std::string(to_string(std::get<BackendError>(r).kind)) + ": " +
                               std::get<BackendError>(r).detail);
    install_pristine(state_, std::move(std::get<Image>(r)));
    pristine_hash_ = state_.pristine_hash;
    if (observer_) {
      observer_->on_image(state_.current_image);
      observer_->on_state(state_.mode, state_.destruction_level, 0);
    }
  }

  /// Delivers one event, then any results that synchronous backends produce
  /// in response, before returning.
  void deliver(Event event, std::int64_t now_ms) {
    std::deque<Event> queue;
    queue.push_back(std::move(event));
    while (!queue.empty()) {
      Event e = std::move(queue.front());
      queue.pop_front();
      log_event(e, now_ms);
      StepResult r = step(std::move(state_), e, now_ms, config_);
      state_ = std::move(r.state);
      for (Action& a : r.actions) perform(a, now_ms, queue);
    }
  }

  /// Gaze from the outside world: rate-gates, logs and delivers as one batch.
  void deliver_gaze(const std::vector<GazeSample>& samples, std::int64_t now_ms) {
    GazeBatch batch;
    for (const auto& s : samples)
      if (gate_.admit(s)) batch.samples.push_back(s);
    if (batch.samples.empty()) return;
    deliver(std::move(batch), now_ms);
  }

  /// Hands over results from asynchronous backends, if one has finished.
  void poll(std::int64_t now_ms) {
    if (!pending_ || pending_->result.wait_for(std::chrono::seconds(0)) != std::future_status::ready)
      return;
    const std::uint64_t id = pending_->job_id;
    BackendResult r = pending_->result.get();
    pending_.reset();
    deliver(to_event(id, std::move(r)), now_ms);
  }

  /// Blocks until an in-flight asynchronous job finishes (shutdown path).
  void wait_idle() {
    if (pending_) pending_->result.wait();
  }

  void tick(std::int64_t now_ms) { deliver(Tick{}, now_ms); }

  void finish(std::int64_t now_ms) {
    if (log_) {
      log_->write({now_ms, "session_end", {{"final_mode", to_string(state_.mode)}}});
      log_->flush();
    }
  }

  const SessionState& state() const { return state_; }
  const EngineConfig& config() const { return config_; }
  const std::string& pristine_hash() const { return pristine_hash_; }
  const std::vector<CommitInfo>& commits() const { return commits_; }
  const std::vector<ActionRecord>& actions() const { return actions_; }
  bool job_in_flight() const { return pending_.has_value(); }

 private:
  struct PendingJob {
    std::uint64_t job_id;
    std::future<BackendResult> result;
  };

  static Event to_event(std::uint64_t id, BackendResult r) {
    if (ok(r)) return JobCompleted{id, std::move(std::get<Image>(r))};
    return JobFailed{id, std::move(std::get<BackendError>(r))};
  }

  void write(std::int64_t t, const char* kind, nlohmann::ordered_json payload) {
    if (log_) log_->write({t, kind, std::move(payload)});
  }

  void log_event(const Event& e, std::int64_t now_ms) {
    if (const auto* g = std::get_if<GazeBatch>(&e)) {
      for (const auto& s : g->samples)
        write(s.t_ms, "gaze", {{"x", s.x}, {"y", s.y}, {"valid", s.valid}});
    } else if (const auto* c = std::get_if<JobCompleted>(&e)) {
      write(now_ms, "job_completed", {{"job_id", c->job_id}, {"image_hash", image_hash(c->image)}});
    } else if (const auto* f = std::get_if<JobFailed>(&e)) {
      write(now_ms, "job_failed",
            {{"job_id", f->job_id}, {"error", to_string(f->error.kind)}, {"detail", f->error.detail}});
    }
  }

  template <typename Call>
  void run_job(std::uint64_t id, Call call, std::deque<Event>& queue) {
    if (backend_.synchronous()) {
      BackendResult r;
      try {
        r = call();
      } catch (const std::exception& ex) {
        r = BackendError{BackendErrorKind::rejected, ex.what()};
      }
      queue.push_back(to_event(id, std::move(r)));
      return;
    }
    pending_ = PendingJob{id, std::async(std::launch::async, [call]() -> BackendResult {
                            try {
                              return call();
                            } catch (const std::exception& ex) {
                              return BackendError{BackendErrorKind::rejected, ex.what()};
                            }
                          })};
  }

  void record(std::int64_t t, const Action& a, std::string detail = {}) {
    actions_.push_back({t, action_name(a), std::move(detail)});
  }

  void perform(Action& action, std::int64_t now_ms, std::deque<Event>& queue) {
    std::visit(
        [&](auto& a) {
          using A = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<A, DispatchInpaint>) {
            record(now_ms, action, a.request.prompt);
            write(now_ms, "job_dispatched",
                  {{"job_id", a.job_id}, {"prompt", a.request.prompt}, {"seed", a.request.seed},
                   {"mask_hash", a.mask_hash}});
            if (observer_ && config_.debug) observer_->on_mask(a.request.mask);
            auto req = std::make_shared<InpaintRequest>(std::move(a.request));
            Backend* b = &backend_;
            run_job(a.job_id, [b, req] { return b->inpaint(*req); }, queue);
          } else if constexpr (std::is_same_v<A, GenerateFresh>) {
            record(now_ms, action, a.request.prompt);
            write(now_ms, "job_dispatched",
                  {{"job_id", a.job_id}, {"prompt", a.request.prompt}, {"seed", a.request.seed},
                   {"fresh", true}});
            auto req = std::make_shared<GenerateRequest>(std::move(a.request));
            Backend* b = &backend_;
            run_job(a.job_id, [b, req] { return b->generate(*req); }, queue);
          } else if constexpr (std::is_same_v<A, StartCrossfade>) {
            record(now_ms, action, a.final_hash);
            if (a.purpose == CrossfadePurpose::regenerate)
              write(now_ms, "regen_step", {{"image_hash", a.final_hash}, {"remaining", 0}});
            if (observer_) observer_->on_crossfade(a.plan);
          } else if constexpr (std::is_same_v<A, CommitImage>) {
            record(now_ms, action, a.image_hash);
            write(now_ms, "commit",
                  {{"job_id", a.job_id}, {"image_hash", a.image_hash}, {"prompt", a.prompt},
                   {"seed", a.seed}});
            commits_.push_back({now_ms, a.image_hash, a.before, a.image, a.mask});
          } else if constexpr (std::is_same_v<A, PushHistory>) {
            record(now_ms, action, std::to_string(a.depth));
          } else if constexpr (std::is_same_v<A, PopHistoryCrossfade>) {
            record(now_ms, action, a.image_hash);
            write(now_ms, "regen_step", {{"image_hash", a.image_hash}, {"remaining", a.remaining}});
            if (observer_) observer_->on_crossfade(a.plan);
          } else if constexpr (std::is_same_v<A, EmitStateChange>) {
            record(now_ms, action, std::string(to_string(a.from)) + "->" + to_string(a.to));
            write(now_ms, "state_change", {{"from", to_string(a.from)}, {"to", to_string(a.to)}});
            if (observer_) observer_->on_state(a.to, state_.destruction_level, now_ms);
          } else if constexpr (std::is_same_v<A, LogEvent>) {
            record(now_ms, action, a.detail);
            write(now_ms, "event", {{"detail", a.detail}});
          }
        },
        action);
  }

  EngineConfig config_;
  Backend& backend_;
  LogSink* log_;
  SessionObserver* observer_;
  SessionState state_;
  std::string pristine_hash_;
  GazeRateGate gate_;
  std::optional<PendingJob> pending_;
  std::vector<CommitInfo> commits_;
  std::vector<ActionRecord> actions_;
};

// Replay -------------------------------------------------------------------

struct ReplayResult {
  std::string pristine_hash;
  std::vector<CommitInfo> commits;
  Mode final_mode = Mode::PRISTINE_IDLE;
  std::string final_hash;
  std::int64_t end_ms = 0;
  std::vector<ActionRecord> actions;
  std::vector<Mode> mode_per_tick;

  /// Pristine hash then one commit hash per line.
  std::string hash_listing() const {
    std::string out = pristine_hash + "\n";
    for (const auto& c : commits) out += c.hash + "\n";
    return out;
  }
};

struct ReplayOptions {
  // Virtual time allowed after the last sample for the session to settle
  // back into PRISTINE_IDLE when the trace has no session_end record.
  std::int64_t settle_limit_ms = 10 * 60 * 1000;
  bool keep_mode_per_tick = false;
};

/// Replays a gaze trace on a virtual 1/tick_hz clock with the mock backend.
/// Sessions recorded live end at their session_end record; bare traces run
/// until the engine is back in PRISTINE_IDLE (or the settle limit).
inline ReplayResult replay(const Trace& trace, EngineConfig config, ReplayOptions opts = {},
                           LogSink* log = nullptr) {
  config.backend = BackendKind::mock;
  MockBackend backend;
  SessionDriver driver(config, backend, log);
  driver.start();

  GazeIngestor ingestor;
  std::vector<GazeSample> samples;
  samples.reserve(trace.samples.size());
  for (const auto& s : trace.samples) {
    try {
      samples.push_back(ingestor.ingest(s.x, s.y, s.t_ms, s.valid, 1.0, 1.0));
    } catch (const StaleSampleError&) {
    }
  }
  const std::int64_t last_sample = samples.empty() ? 0 : samples.back().t_ms;

  ReplayResult result;
  std::size_t next = 0;
  for (std::int64_t k = 0;; ++k) {
    const std::int64_t T = config.tick_time_ms(k);
    std::vector<GazeSample> batch;
    while (next < samples.size() && samples[next].t_ms <= T) batch.push_back(samples[next++]);
    if (!batch.empty()) driver.deliver_gaze(batch, T);
    driver.tick(T);
    if (opts.keep_mode_per_tick) result.mode_per_tick.push_back(driver.state().mode);
    result.end_ms = T;

    if (trace.session_end_ms) {
      if (T >= *trace.session_end_ms) break;
      continue;
    }
    if (next < samples.size() || T < last_sample) continue;
    const auto& s = driver.state();
    if (s.mode == Mode::PRISTINE_IDLE && !s.busy()) break;
    if (T - last_sample > opts.settle_limit_ms) break;
  }
  driver.finish(result.end_ms);

  result.pristine_hash = driver.pristine_hash();
  result.commits = driver.commits();
  result.final_mode = driver.state().mode;
  result.final_hash = image_hash(*driver.state().current_image);
  result.actions = driver.actions();
  return result;
}

/// The config a trace should be replayed with: its own snapshot if it has
/// one, else the supplied config.
inline EngineConfig replay_config(const Trace& trace, const EngineConfig& fallback) {
  if (trace.config_snapshot) return parse_config(*trace.config_snapshot);
  return fallback;
}

}  // namespace gazeforge
