#pragma once

// The installation state machine. `step` is a pure transition function:
// identical (state, event, now, config) inputs give identical outputs, which
// is what makes traces replayable.
//
//   PRISTINE_IDLE --valid gaze--> OBSERVED --trigger--> TRANSFORMING
//        ^                          ^   |                   |
//        |                          |   +--job done/failed--+
//        |                          |   |
//        |                     valid gaze  idle timeout
//        |                          |   v
//        +----history exhausted---- REGENERATING

#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gazeforge/attention.hpp"
#include "gazeforge/backend.hpp"
#include "gazeforge/compositor.hpp"
#include "gazeforge/config.hpp"
#include "gazeforge/gaze.hpp"
#include "gazeforge/prompts.hpp"

namespace gazeforge {

enum class Mode { PRISTINE_IDLE, OBSERVED, TRANSFORMING, REGENERATING };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::PRISTINE_IDLE: return "PRISTINE_IDLE";
    case Mode::OBSERVED: return "OBSERVED";
    case Mode::TRANSFORMING: return "TRANSFORMING";
    case Mode::REGENERATING: return "REGENERATING";
  }
  return "UNKNOWN";
}

// History ------------------------------------------------------------------

struct HistoryEntry {
  ImageRef snapshot;  // the image as it was before this commit
  std::string prompt;
  std::uint64_t seed = 0;
  std::int64_t commit_ms = 0;
};

class HistoryExhausted : public std::runtime_error {
 public:
  HistoryExhausted() : std::runtime_error("history exhausted") {}
};

/// Bounded LIFO of pre-commit snapshots. Overflow drops the oldest entry.
class TransformationHistory {
 public:
  explicit TransformationHistory(std::size_t capacity = 32) : capacity_(capacity) {}

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<HistoryEntry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

  void push(HistoryEntry e) {
    entries_.push_back(std::move(e));
    while (entries_.size() > capacity_) entries_.pop_front();
  }

  HistoryEntry pop() {
    if (entries_.empty()) throw HistoryExhausted();
    HistoryEntry e = std::move(entries_.back());
    entries_.pop_back();
    return e;
  }

 private:
  std::size_t capacity_;
  std::deque<HistoryEntry> entries_;
};

inline TransformationHistory push_history(TransformationHistory h, ImageRef snapshot,
                                          std::string prompt, std::uint64_t seed,
                                          std::int64_t commit_ms) {
  h.push({std::move(snapshot), std::move(prompt), seed, commit_ms});
  return h;
}

inline std::pair<HistoryEntry, TransformationHistory> rewind_step(TransformationHistory h) {
  HistoryEntry e = h.pop();
  return {std::move(e), std::move(h)};
}

// Events -------------------------------------------------------------------

struct GazeBatch {
  std::vector<GazeSample> samples;
};
struct JobCompleted {
  std::uint64_t job_id = 0;
  Image image;
};
struct JobFailed {
  std::uint64_t job_id = 0;
  BackendError error;
};
struct Tick {};

using Event = std::variant<GazeBatch, JobCompleted, JobFailed, Tick>;

// Actions ------------------------------------------------------------------

enum class JobKind { transform, regen_inpaint, fresh };

struct JobDescriptor {
  std::uint64_t id = 0;
  JobKind kind = JobKind::transform;
  std::string prompt;
  std::uint64_t seed = 0;
  MaskRef mask;
  std::int64_t dispatched_ms = 0;
};

struct DispatchInpaint {
  std::uint64_t job_id = 0;
  InpaintRequest request;
  std::string mask_hash;
};
enum class CrossfadePurpose { transform, regenerate };
struct StartCrossfade {
  CrossfadePlan plan;
  CrossfadePurpose purpose = CrossfadePurpose::transform;
  std::string final_hash;  // hash of the frame the fade ends on
};
struct CommitImage {
  std::uint64_t job_id = 0;
  ImageRef before;
  ImageRef image;
  MaskRef mask;
  std::string image_hash;
  std::string prompt;
  std::uint64_t seed = 0;
};
struct PushHistory {
  std::string prompt;
  std::uint64_t seed = 0;
  std::int64_t commit_ms = 0;
  std::size_t depth = 0;
};
struct PopHistoryCrossfade {
  CrossfadePlan plan;
  std::string image_hash;
  std::size_t remaining = 0;
};
struct GenerateFresh {
  std::uint64_t job_id = 0;
  GenerateRequest request;
};
struct EmitStateChange {
  Mode from = Mode::PRISTINE_IDLE;
  Mode to = Mode::PRISTINE_IDLE;
};
struct LogEvent {
  std::string detail;
};

using Action = std::variant<DispatchInpaint, StartCrossfade, CommitImage, PushHistory,
                            PopHistoryCrossfade, GenerateFresh, EmitStateChange, LogEvent>;

inline const char* action_name(const Action& a) {
  static constexpr const char* kNames[] = {"DispatchInpaint", "StartCrossfade", "CommitImage",
                                           "PushHistory",     "PopHistoryCrossfade",
                                           "GenerateFresh",   "EmitStateChange", "LogEvent"};
  return kNames[a.index()];
}

// State --------------------------------------------------------------------

struct SessionState {
  Mode mode = Mode::PRISTINE_IDLE;
  ImageRef current_image;
  Heatmap heatmap;
  SchedulerState scheduler;
  std::optional<std::int64_t> last_presence_ms;
  std::optional<std::int64_t> last_commit_ms;
  std::optional<JobDescriptor> job;  // in-flight transformation; set iff TRANSFORMING

  // Regeneration work (fresh generation or restoring inpaint). Never overlaps
  // with `job`.
  std::optional<JobDescriptor> regen_job;
  TransformationHistory history;
  ImageRef pristine_image;
  std::string pristine_hash;
  AttentionMask damage;  // union of committed masks; generate mode only
  std::size_t destruction_level = 0;

  GazeSmoother smoother;
  FixationDetector detector;
  std::deque<GazeSample> recent;
  std::optional<std::int64_t> last_sample_ms;
  std::optional<std::int64_t> accumulation_start_ms;
  std::optional<std::int64_t> last_failure_ms;
  std::optional<std::int64_t> last_tick_ms;
  std::int64_t regen_anchor_ms = 0;

  std::uint64_t seed_rng = 0;
  std::uint64_t next_job_id = 1;

  bool busy() const { return job.has_value() || regen_job.has_value(); }
};

struct StepResult {
  SessionState state;
  std::vector<Action> actions;
};

namespace detail {

inline constexpr std::uint64_t kSeedStreamSalt = 0xD1B54A32D192ED03ULL;

inline std::uint64_t next_seed(SessionState& s) {
  const auto r = splitmix64_next(s.seed_rng);
  s.seed_rng = r.state;
  return r.output;
}

inline Prompt draw_prompt(SessionState& s, const EngineConfig& cfg, PromptCategory c) {
  auto draw = next_prompt(cfg.catalog, c, s.scheduler);
  s.scheduler = draw.state;
  return draw.prompt;
}

inline GenerateRequest make_generate(const Prompt& p, std::uint64_t seed, const EngineConfig& cfg) {
  GenerateRequest r;
  r.prompt = p.text;
  r.negative = p.negative;
  r.seed = seed;
  r.width = cfg.render_width;
  r.height = cfg.render_height;
  r.steps = cfg.steps;
  return r;
}

inline void change_mode(SessionState& s, Mode to, std::vector<Action>& out) {
  if (s.mode == to) return;
  out.push_back(EmitStateChange{s.mode, to});
  s.mode = to;
}

inline void reset_attention(SessionState& s) {
  s.heatmap.clear();
  s.detector.reset();
  s.accumulation_start_ms.reset();
}

inline MaskRef full_mask(const EngineConfig& cfg) {
  return share(AttentionMask(cfg.render_width, cfg.render_height, 1.0));
}

inline std::string mask_hash(const AttentionMask& m) {
  return gray_hash(m.width, m.height, m.to_gray8());
}

inline void dispatch(SessionState& s, JobKind kind, const Prompt& prompt, MaskRef mask,
                     std::int64_t now, const EngineConfig& cfg, std::vector<Action>& out) {
  JobDescriptor job;
  job.id = s.next_job_id++;
  job.kind = kind;
  job.prompt = prompt.text;
  job.seed = next_seed(s);
  job.mask = mask;
  job.dispatched_ms = now;

  InpaintRequest req;
  static_cast<GenerateRequest&>(req) = make_generate(prompt, job.seed, cfg);
  req.source = s.current_image;
  req.mask = *mask;
  req.strength = cfg.strength;
  out.push_back(DispatchInpaint{job.id, std::move(req), mask_hash(*mask)});
  if (kind == JobKind::transform) s.job = std::move(job);
  else s.regen_job = std::move(job);
}

inline void generate_fresh(SessionState& s, std::int64_t now, const EngineConfig& cfg,
                           std::vector<Action>& out) {
  const Prompt p = draw_prompt(s, cfg, PromptCategory::pristine);
  JobDescriptor job;
  job.id = s.next_job_id++;
  job.kind = JobKind::fresh;
  job.prompt = p.text;
  job.seed = next_seed(s);
  job.dispatched_ms = now;
  out.push_back(GenerateFresh{job.id, make_generate(p, job.seed, cfg)});
  s.regen_job = std::move(job);
}

inline bool at_pristine(const SessionState& s) {
  return s.current_image && s.pristine_image &&
         (s.current_image == s.pristine_image || *s.current_image == *s.pristine_image);
}

inline void on_gaze(SessionState& s, const GazeBatch& batch, const EngineConfig& cfg,
                    std::vector<Action>& out) {
  bool any_valid = false;
  std::size_t skipped = 0;
  for (const GazeSample& raw : batch.samples) {
    if (s.last_sample_ms && raw.t_ms <= *s.last_sample_ms) {
      ++skipped;
      continue;
    }
    s.last_sample_ms = raw.t_ms;
    s.recent.push_back(raw);
    while (!s.recent.empty() && raw.t_ms - s.recent.front().t_ms > cfg.trigger.presence_window_ms)
      s.recent.pop_front();
    if (raw.valid) {
      any_valid = true;
      s.last_presence_ms = raw.t_ms;
      if (!s.accumulation_start_ms) s.accumulation_start_ms = raw.t_ms;
    }
    const GazeSample smoothed = s.smoother.push(raw);
    for (const Fixation& f : s.detector.push(smoothed)) s.heatmap = splat(std::move(s.heatmap), f, cfg.mask);
  }
  if (skipped) out.push_back(LogEvent{"dropped " + std::to_string(skipped) + " stale gaze samples"});
  if (!any_valid) return;
  if (s.mode == Mode::REGENERATING) out.push_back(LogEvent{"regeneration interrupted by viewer"});
  if (s.mode == Mode::PRISTINE_IDLE || s.mode == Mode::REGENERATING)
    change_mode(s, Mode::OBSERVED, out);
}

inline void try_trigger(SessionState& s, std::int64_t now, const EngineConfig& cfg,
                        std::vector<Action>& out) {
  const auto& tp = cfg.trigger;
  if (s.busy()) return;
  if (!presence(s.recent, now, tp.presence_window_ms)) return;
  if (!s.accumulation_start_ms || now - *s.accumulation_start_ms < tp.accumulate_window_ms) return;
  if (s.last_commit_ms && now - *s.last_commit_ms < tp.cooldown_ms) return;
  if (s.last_failure_ms && now - *s.last_failure_ms < tp.cooldown_ms) return;

  Heatmap view = s.heatmap;
  if (auto open = s.detector.open_fixation()) view = splat(std::move(view), *open, cfg.mask);
  AttentionMask mask = extract_mask(view, cfg.mask);
  const double area = area_fraction(mask);
  if (area < tp.min_area_fraction) return;
  if (area > tp.max_area_fraction) mask = clip_to_area(std::move(mask), view, tp.max_area_fraction);

  const Prompt p = draw_prompt(s, cfg, PromptCategory::destruction);
  change_mode(s, Mode::TRANSFORMING, out);
  dispatch(s, JobKind::transform, p, share(std::move(mask)), now, cfg, out);
}

inline void regen_tick(SessionState& s, std::int64_t now, const EngineConfig& cfg,
                       std::vector<Action>& out) {
  if (s.regen_job) return;
  if (now - s.regen_anchor_ms < cfg.trigger.regen_step_interval_ms) return;
  s.regen_anchor_ms = now;

  if (cfg.regen_mode == RegenMode::rewind && !s.history.empty()) {
    HistoryEntry e = s.history.pop();
    CrossfadePlan plan{s.current_image, e.snapshot, full_mask(cfg), cfg.crossfade_frames};
    s.current_image = e.snapshot;
    if (s.destruction_level) --s.destruction_level;
    out.push_back(PopHistoryCrossfade{std::move(plan), image_hash(*s.current_image), s.history.size()});
    if (s.history.empty() && at_pristine(s)) {
      s.destruction_level = 0;
      change_mode(s, Mode::PRISTINE_IDLE, out);
    }
    return;
  }
  if (cfg.regen_mode == RegenMode::generate && s.damage.support_count() > 0) {
    const Prompt p = draw_prompt(s, cfg, PromptCategory::pristine);
    dispatch(s, JobKind::regen_inpaint, p, share(s.damage), now, cfg, out);
    return;
  }
  if (at_pristine(s)) {
    s.destruction_level = 0;
    change_mode(s, Mode::PRISTINE_IDLE, out);
    return;
  }
  generate_fresh(s, now, cfg, out);
}

inline void on_tick(SessionState& s, std::int64_t now, const EngineConfig& cfg,
                    std::vector<Action>& out) {
  const std::int64_t dt = s.last_tick_ms ? std::max<std::int64_t>(0, now - *s.last_tick_ms) : 0;
  s.last_tick_ms = now;
  s.heatmap = decay(std::move(s.heatmap), dt, cfg.mask);

  switch (s.mode) {
    case Mode::PRISTINE_IDLE:
    case Mode::TRANSFORMING:
      return;
    case Mode::OBSERVED:
      if (s.last_presence_ms && now - *s.last_presence_ms >= cfg.trigger.idle_timeout_ms) {
        reset_attention(s);
        s.regen_anchor_ms = now;
        change_mode(s, Mode::REGENERATING, out);
        return;
      }
      try_trigger(s, now, cfg, out);
      return;
    case Mode::REGENERATING:
      regen_tick(s, now, cfg, out);
      return;
  }
}

inline void on_completed(SessionState& s, const JobCompleted& done, std::int64_t now,
                         const EngineConfig& cfg, std::vector<Action>& out) {
  const bool dims_ok =
      done.image.width == cfg.render_width && done.image.height == cfg.render_height;

  if (s.job && s.job->id == done.job_id && s.mode == Mode::TRANSFORMING) {
    JobDescriptor job = std::move(*s.job);
    s.job.reset();
    if (!dims_ok) {
      s.last_failure_ms = now;
      out.push_back(LogEvent{"job " + std::to_string(job.id) + " returned wrong dimensions"});
      change_mode(s, Mode::OBSERVED, out);
      return;
    }
    ImageRef result = share(done.image);
    ImageRef committed = share(commit(*s.current_image, *result, *job.mask));
    const std::string hash = image_hash(*committed);
    out.push_back(StartCrossfade{CrossfadePlan{s.current_image, result, job.mask, cfg.crossfade_frames},
                                 CrossfadePurpose::transform, hash});
    out.push_back(CommitImage{job.id, s.current_image, committed, job.mask, hash, job.prompt, job.seed});
    s.history.push({s.current_image, job.prompt, job.seed, now});
    out.push_back(PushHistory{job.prompt, job.seed, now, s.history.size()});
    if (cfg.regen_mode == RegenMode::generate) {
      if (s.damage.size() != job.mask->size()) s.damage = *job.mask;
      else s.damage = union_mask(std::move(s.damage), *job.mask);
    }
    s.current_image = committed;
    s.last_commit_ms = now;
    ++s.destruction_level;
    reset_attention(s);
    change_mode(s, Mode::OBSERVED, out);
    return;
  }

  if (s.regen_job && s.regen_job->id == done.job_id) {
    JobDescriptor job = std::move(*s.regen_job);
    s.regen_job.reset();
    if (!dims_ok) {
      out.push_back(LogEvent{"job " + std::to_string(job.id) + " returned wrong dimensions"});
      return;
    }
    ImageRef result = share(done.image);
    MaskRef mask = job.kind == JobKind::fresh ? full_mask(cfg) : job.mask;
    ImageRef next = job.kind == JobKind::fresh ? result : share(commit(*s.current_image, *result, *mask));
    const std::string hash = image_hash(*next);
    out.push_back(StartCrossfade{CrossfadePlan{s.current_image, result, mask, cfg.crossfade_frames},
                                 CrossfadePurpose::regenerate, hash});
    s.current_image = next;
    s.pristine_image = next;
    s.pristine_hash = hash;
    s.history.clear();
    s.damage = AttentionMask();
    s.destruction_level = 0;
    if (s.mode == Mode::REGENERATING) change_mode(s, Mode::PRISTINE_IDLE, out);
    return;
  }
  out.push_back(LogEvent{"ignored result for unknown job " + std::to_string(done.job_id)});
}

inline void on_failed(SessionState& s, const JobFailed& failed, std::int64_t now,
                      std::vector<Action>& out) {
  const std::string why = std::string(to_string(failed.error.kind)) + ": " + failed.error.detail;
  if (s.job && s.job->id == failed.job_id && s.mode == Mode::TRANSFORMING) {
    s.job.reset();
    s.last_failure_ms = now;
    out.push_back(LogEvent{"job " + std::to_string(failed.job_id) + " failed (" + why + ")"});
    change_mode(s, Mode::OBSERVED, out);
    return;
  }
  if (s.regen_job && s.regen_job->id == failed.job_id) {
    s.regen_job.reset();
    s.regen_anchor_ms = now;
    out.push_back(LogEvent{"regeneration job " + std::to_string(failed.job_id) + " failed (" + why + ")"});
    return;
  }
  out.push_back(LogEvent{"ignored failure for unknown job " + std::to_string(failed.job_id)});
}

}  // namespace detail

struct SessionStart {
  SessionState state;
  GenerateRequest pristine_request;
};

/// Fresh state plus the request for the opening pristine landscape. The
/// session is not usable until `install_pristine` receives that image.
inline SessionStart begin_session(const EngineConfig& cfg) {
  SessionState s;
  s.heatmap = Heatmap(cfg.render_width, cfg.render_height);
  s.scheduler.rng_state = cfg.seed;
  s.seed_rng = cfg.seed ^ detail::kSeedStreamSalt;
  s.history = TransformationHistory(cfg.history_capacity);
  s.smoother = GazeSmoother(cfg.fixation.smoothing_window);
  s.detector = FixationDetector(cfg.fixation);
  const Prompt p = detail::draw_prompt(s, cfg, PromptCategory::pristine);
  const std::uint64_t seed = detail::next_seed(s);
  return {std::move(s), detail::make_generate(p, seed, cfg)};
}

inline void install_pristine(SessionState& s, Image img) {
  s.current_image = share(std::move(img));
  s.pristine_image = s.current_image;
  s.pristine_hash = image_hash(*s.current_image);
}

inline StepResult step(SessionState state, const Event& event, std::int64_t now_ms,
                       const EngineConfig& cfg) {
  StepResult r{std::move(state), {}};
  auto& s = r.state;
  if (!s.current_image) throw std::logic_error("step: session has no pristine image yet");
  std::visit(
      [&](const auto& e) {
        using E = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<E, GazeBatch>) detail::on_gaze(s, e, cfg, r.actions);
        else if constexpr (std::is_same_v<E, Tick>) detail::on_tick(s, now_ms, cfg, r.actions);
        else if constexpr (std::is_same_v<E, JobCompleted>)
          detail::on_completed(s, e, now_ms, cfg, r.actions);
        else detail::on_failed(s, e, now_ms, r.actions);
      },
      event);
  return r;
}

}  // namespace gazeforge
