#include <gtest/gtest.h>

#include <functional>

#include "gazeforge/session.hpp"

using namespace gazeforge;

namespace {

EngineConfig small_config() {
  EngineConfig c;
  c.render_width = 64;
  c.render_height = 64;
  c.mask = MaskParams::scaled_for_width(64);
  c.catalog.destruction = {{"smog", "", 1.0, PromptCategory::destruction},
                           {"flood", "", 1.0, PromptCategory::destruction}};
  c.catalog.pristine = {{"meadow", "", 1.0, PromptCategory::pristine}};
  return c;
}

Image solid(int w, int h, std::uint8_t v) {
  Image img(w, h);
  std::fill(img.pixels.begin(), img.pixels.end(), v);
  return img;
}

GazeBatch dwell(std::int64_t t0, std::int64_t t1, double x, double y, std::int64_t dt = 20) {
  GazeBatch b;
  for (std::int64_t t = t0; t <= t1; t += dt) b.samples.push_back({t, x, y, true});
  return b;
}

GazeBatch one(std::int64_t t, double x, double y, bool valid = true) { return {{{t, x, y, valid}}}; }

std::vector<std::string> names(const std::vector<Action>& actions) {
  std::vector<std::string> out;
  for (const auto& a : actions) out.push_back(action_name(a));
  return out;
}

// Holds a session and applies events by hand, checking the structural
// invariants after every step.
struct Harness {
  EngineConfig cfg;
  SessionState s;
  std::vector<Action> last;

  explicit Harness(EngineConfig c) : cfg(std::move(c)) {
    SessionStart start = begin_session(cfg);
    s = std::move(start.state);
    const auto& r = start.pristine_request;
    install_pristine(s, mock_generate(r.prompt, r.seed, r.width, r.height));
  }

  std::vector<std::string> feed(const Event& e, std::int64_t now) {
    StepResult r = step(s, e, now, cfg);
    s = std::move(r.state);
    last = std::move(r.actions);
    EXPECT_EQ(s.job.has_value(), s.mode == Mode::TRANSFORMING) << "at " << now;
    EXPECT_FALSE(s.job && s.regen_job) << "at " << now;
    return names(last);
  }

  template <typename A>
  const A& find() const {
    for (const auto& a : last)
      if (const auto* p = std::get_if<A>(&a)) return *p;
    throw std::logic_error("action not emitted");
  }
};

using Names = std::vector<std::string>;

}  // namespace

// History ------------------------------------------------------------------

TEST(History, LifoAndExhaustion) {
  auto a = share(solid(8, 8, 1)), b = share(solid(8, 8, 2));
  TransformationHistory h(32);
  h = push_history(std::move(h), a, "smog", 1, 100);
  h = push_history(std::move(h), b, "flood", 2, 200);
  auto [top, rest] = rewind_step(h);
  EXPECT_EQ(top.snapshot, b);
  EXPECT_EQ(top.prompt, "flood");
  EXPECT_EQ(top.seed, 2u);
  EXPECT_EQ(top.commit_ms, 200);
  auto [next, empty] = rewind_step(rest);
  EXPECT_EQ(next.snapshot, a);
  EXPECT_TRUE(empty.empty());
  EXPECT_THROW(rewind_step(empty), HistoryExhausted);
  EXPECT_EQ(h.size(), 2u) << "functional forms leave their inputs alone";
}

TEST(History, CapacityDropsOldest) {
  TransformationHistory h(32);
  for (int i = 0; i < 33; ++i) h.push({share(solid(8, 8, static_cast<std::uint8_t>(i))), "p", 0, i});
  EXPECT_EQ(h.size(), 32u);
  for (int i = 32; i >= 1; --i) EXPECT_EQ(h.pop().commit_ms, i);
  EXPECT_THROW(h.pop(), HistoryExhausted);
}

// Individual transitions ---------------------------------------------------

TEST(Step, RequiresPristineImage) {
  const auto cfg = small_config();
  EXPECT_THROW(step(begin_session(cfg).state, Tick{}, 0, cfg), std::logic_error);
}

TEST(Step, BeginSessionIsDeterministic) {
  const auto cfg = small_config();
  const auto a = begin_session(cfg), b = begin_session(cfg);
  EXPECT_EQ(a.pristine_request.prompt, "meadow");
  EXPECT_EQ(a.pristine_request.seed, b.pristine_request.seed);
  EXPECT_EQ(a.pristine_request.width, 64);
  auto other = cfg;
  other.seed = 2;
  EXPECT_NE(begin_session(other).pristine_request.seed, a.pristine_request.seed);
}

TEST(Step, OneValidSampleObservesWithoutGenerating) {
  Harness h(small_config());
  EXPECT_EQ(h.feed(one(10, 0.5, 0.5), 10), (Names{"EmitStateChange"}));
  EXPECT_EQ(h.s.mode, Mode::OBSERVED);
  EXPECT_EQ(h.feed(Tick{}, 33), Names{});
}

TEST(Step, InvalidSampleKeepsIdle) {
  Harness h(small_config());
  EXPECT_EQ(h.feed(one(10, 0.5, 0.5, false), 10), Names{});
  EXPECT_EQ(h.s.mode, Mode::PRISTINE_IDLE);
}

TEST(Step, SilenceForIdleTimeoutRegenerates) {
  Harness h(small_config());
  h.feed(one(0, 0.5, 0.5), 0);
  EXPECT_EQ(h.feed(Tick{}, 4999), Names{});
  EXPECT_EQ(h.s.mode, Mode::OBSERVED);
  EXPECT_EQ(h.feed(Tick{}, 5001), (Names{"EmitStateChange"}));
  EXPECT_EQ(h.s.mode, Mode::REGENERATING);
}

TEST(Step, StaleSamplesAreDroppedAndLogged) {
  Harness h(small_config());
  h.feed(one(100, 0.5, 0.5), 100);
  EXPECT_EQ(h.feed(one(50, 0.5, 0.5), 120), (Names{"LogEvent"}));
}

TEST(Step, FailurePreservesAttention) {
  Harness h(small_config());
  h.feed(dwell(0, 1200, 0.5, 0.5), 1200);
  ASSERT_EQ(h.feed(Tick{}, 1200), (Names{"EmitStateChange", "DispatchInpaint"}));
  const auto id = h.find<DispatchInpaint>().job_id;
  const Heatmap heat = h.s.heatmap;
  const auto acc = h.s.accumulation_start_ms;
  EXPECT_EQ(h.feed(JobFailed{id, {BackendErrorKind::timeout, "deadline"}}, 1300),
            (Names{"LogEvent", "EmitStateChange"}));
  EXPECT_EQ(h.s.mode, Mode::OBSERVED);
  EXPECT_EQ(h.s.heatmap, heat);
  EXPECT_EQ(h.s.accumulation_start_ms, acc);
  EXPECT_EQ(h.s.destruction_level, 0u);
}

TEST(Step, WrongDimensionsCountAsFailure) {
  Harness h(small_config());
  h.feed(dwell(0, 1200, 0.5, 0.5), 1200);
  h.feed(Tick{}, 1200);
  const auto id = h.find<DispatchInpaint>().job_id;
  h.feed(JobCompleted{id, solid(8, 8, 0)}, 1300);
  EXPECT_EQ(h.s.mode, Mode::OBSERVED);
  EXPECT_TRUE(h.s.history.empty());
}

TEST(Step, InFlightJobCommitsAfterViewerLeaves) {
  Harness h(small_config());
  h.feed(dwell(0, 1200, 0.5, 0.5), 1200);
  h.feed(Tick{}, 1200);
  const auto id = h.find<DispatchInpaint>().job_id;
  EXPECT_EQ(h.feed(Tick{}, 9000), Names{}) << "no idle timeout while transforming";
  EXPECT_EQ(h.feed(JobCompleted{id, solid(64, 64, 9)}, 9100),
            (Names{"StartCrossfade", "CommitImage", "PushHistory", "EmitStateChange"}));
  EXPECT_EQ(h.feed(Tick{}, 9133), (Names{"EmitStateChange"}));
  EXPECT_EQ(h.s.mode, Mode::REGENERATING);
}

TEST(Step, CommitUsesMaskAndResetsHeat) {
  Harness h(small_config());
  h.feed(dwell(0, 1200, 0.5, 0.5), 1200);
  h.feed(Tick{}, 1200);
  const DispatchInpaint d = h.find<DispatchInpaint>();
  EXPECT_EQ(d.request.source, h.s.current_image);
  EXPECT_EQ(d.request.strength, 0.85);
  const double area = area_fraction(d.request.mask);
  EXPECT_GE(area, h.cfg.trigger.min_area_fraction);
  EXPECT_LE(area, h.cfg.trigger.max_area_fraction);
  const ImageRef before = h.s.current_image;
  h.feed(JobCompleted{d.job_id, solid(64, 64, 200)}, 1300);
  const auto& c = h.find<CommitImage>();
  EXPECT_EQ(*c.image, commit(*before, solid(64, 64, 200), d.request.mask));
  EXPECT_EQ(c.image_hash, image_hash(*c.image));
  EXPECT_EQ(h.s.current_image, c.image);
  EXPECT_EQ(h.s.history.entries().back().snapshot, before);
  for (double v : h.s.heatmap.values) ASSERT_EQ(v, 0.0);
  EXPECT_EQ(h.s.destruction_level, 1u);
}

TEST(Step, OversizedMaskIsClipped) {
  auto cfg = small_config();
  cfg.trigger.min_area_fraction = 0.001;
  cfg.trigger.max_area_fraction = 0.002;
  Harness h(cfg);
  h.feed(dwell(0, 1200, 0.5, 0.5), 1200);
  h.feed(Tick{}, 1200);
  EXPECT_EQ(h.find<DispatchInpaint>().request.mask.support_count(), 8u);  // floor(0.002 * 4096)
}

TEST(Step, TinyMaskDoesNotTrigger) {
  auto cfg = small_config();
  cfg.trigger.min_area_fraction = 0.5;
  cfg.trigger.max_area_fraction = 0.6;
  Harness h(cfg);
  h.feed(dwell(0, 1200, 0.5, 0.5), 1200);
  EXPECT_EQ(h.feed(Tick{}, 1200), Names{});
}

TEST(Step, ExhaustedHistoryAwayFromPristineGeneratesFresh) {
  auto cfg = small_config();
  cfg.history_capacity = 1;
  Harness h(cfg);
  std::int64_t t = 0;
  for (int k = 0; k < 2; ++k) {
    h.feed(dwell(t, t + 1200, 0.5, 0.5), t + 1200);
    h.feed(Tick{}, t + 1200);
    h.feed(JobCompleted{h.find<DispatchInpaint>().job_id, solid(64, 64, static_cast<std::uint8_t>(50 + k))},
           t + 1300);
    t += 3400;
  }
  ASSERT_EQ(h.s.history.size(), 1u);
  h.feed(Tick{}, 20000);
  ASSERT_EQ(h.s.mode, Mode::REGENERATING);
  EXPECT_EQ(h.feed(Tick{}, 21500), (Names{"PopHistoryCrossfade"}));
  EXPECT_EQ(h.s.mode, Mode::REGENERATING);
  EXPECT_EQ(h.feed(Tick{}, 23000), (Names{"GenerateFresh"}));
  const auto fresh = h.find<GenerateFresh>();
  EXPECT_EQ(fresh.request.prompt, "meadow");
  EXPECT_EQ(h.feed(Tick{}, 24500), Names{}) << "one regeneration job at a time";
  const Image landscape = mock_generate("meadow", fresh.request.seed, 64, 64);
  EXPECT_EQ(h.feed(JobCompleted{fresh.job_id, landscape}, 24600), (Names{"StartCrossfade", "EmitStateChange"}));
  EXPECT_EQ(h.s.mode, Mode::PRISTINE_IDLE);
  EXPECT_EQ(h.s.pristine_hash, image_hash(landscape));
  EXPECT_EQ(h.s.destruction_level, 0u);
}

TEST(Step, GenerateModeInpaintsDamagedRegion) {
  auto cfg = small_config();
  cfg.regen_mode = RegenMode::generate;
  Harness h(cfg);
  h.feed(dwell(0, 1200, 0.3, 0.3), 1200);
  h.feed(Tick{}, 1200);
  const auto first = h.find<DispatchInpaint>();
  h.feed(JobCompleted{first.job_id, solid(64, 64, 10)}, 1300);
  h.feed(dwell(1400, 3400, 0.7, 0.7), 3400);
  h.feed(Tick{}, 3400);
  const auto second = h.find<DispatchInpaint>();
  h.feed(JobCompleted{second.job_id, solid(64, 64, 20)}, 3500);
  const AttentionMask damage = union_mask(first.request.mask, second.request.mask);
  EXPECT_EQ(h.s.damage, damage);

  h.feed(Tick{}, 8400);
  ASSERT_EQ(h.s.mode, Mode::REGENERATING);
  EXPECT_EQ(h.feed(Tick{}, 9900), (Names{"DispatchInpaint"}));
  const auto regen = h.find<DispatchInpaint>();
  EXPECT_EQ(regen.request.mask, damage);
  EXPECT_EQ(regen.request.prompt, "meadow");
  EXPECT_FALSE(h.s.job);
  ASSERT_TRUE(h.s.regen_job);
  const ImageRef damaged = h.s.current_image;
  const Image restored = mock_inpaint(regen.request);
  EXPECT_EQ(h.feed(JobCompleted{regen.job_id, restored}, 10000), (Names{"StartCrossfade", "EmitStateChange"}));
  EXPECT_EQ(h.s.mode, Mode::PRISTINE_IDLE);
  EXPECT_EQ(*h.s.current_image, commit(*damaged, restored, damage));
  EXPECT_EQ(h.s.pristine_hash, image_hash(*h.s.current_image));
  EXPECT_EQ(h.s.damage.support_count(), 0u);
}

TEST(Step, GazeDuringRegenerationJobInterrupts) {
  auto cfg = small_config();
  cfg.regen_mode = RegenMode::generate;
  Harness h(cfg);
  h.feed(dwell(0, 1200, 0.3, 0.3), 1200);
  h.feed(Tick{}, 1200);
  h.feed(JobCompleted{h.find<DispatchInpaint>().job_id, solid(64, 64, 10)}, 1300);
  h.feed(Tick{}, 6300);
  h.feed(Tick{}, 7800);
  const auto regen = h.find<DispatchInpaint>();
  EXPECT_EQ(h.feed(one(7900, 0.5, 0.5), 7900), (Names{"LogEvent", "EmitStateChange"}));
  EXPECT_EQ(h.s.mode, Mode::OBSERVED);
  // The landscape still heals when the job lands, but the viewer keeps control.
  EXPECT_EQ(h.feed(JobCompleted{regen.job_id, mock_inpaint(regen.request)}, 8000), (Names{"StartCrossfade"}));
  EXPECT_EQ(h.s.mode, Mode::OBSERVED);
}

TEST(Step, Deterministic) {
  auto run = [] {
    Harness h(small_config());
    std::vector<std::string> log;
    auto add = [&](const Names& n) { log.insert(log.end(), n.begin(), n.end()); };
    add(h.feed(dwell(0, 1200, 0.5, 0.5), 1200));
    add(h.feed(Tick{}, 1200));
    const auto d = h.find<DispatchInpaint>();
    for (std::int64_t t = 1233; t <= 1400; t += 33) add(h.feed(Tick{}, t));
    log.push_back(d.request.prompt + std::to_string(d.request.seed) + d.mask_hash);
    add(h.feed(JobCompleted{d.job_id, solid(64, 64, 7)}, 1500));
    log.push_back(h.find<CommitImage>().image_hash);
    return log;
  };
  EXPECT_EQ(run(), run());
}

// Scripted transition table -------------------------------------------------
//
// Hand-traced with the default trigger policy on a 64x64 canvas. Columns:
// event, time, expected actions, mode afterwards.

TEST(Step, ScriptedTransitionTable) {
  Harness h(small_config());
  const ImageRef pristine = h.s.current_image;
  std::uint64_t job = 0;
  ImageRef after_first;

  struct Row {
    int n;
    std::function<Event()> event;
    std::int64_t t;
    Names actions;
    Mode mode;
  };
  using enum Mode;
  const Names none{};
  const Names change{"EmitStateChange"};
  const Names dispatch{"EmitStateChange", "DispatchInpaint"};
  const Names committed{"StartCrossfade", "CommitImage", "PushHistory", "EmitStateChange"};
  auto tick = [] { return Event{Tick{}}; };
  auto gaze = [](std::int64_t a, std::int64_t b, double x, double y) {
    return [=] { return Event{dwell(a, b, x, y)}; };
  };
  auto done = [&](std::uint8_t v) { return [&, v] { return Event{JobCompleted{job, solid(64, 64, v)}}; }; };

  const std::vector<Row> table{
      // First viewer dwells on the centre; accumulation starts at t=0.
      {1, gaze(0, 300, 0.5, 0.5), 300, change, OBSERVED},
      {2, tick, 300, none, OBSERVED},
      {3, gaze(320, 600, 0.5, 0.5), 600, none, OBSERVED},
      {4, tick, 600, none, OBSERVED},
      {5, gaze(620, 900, 0.5, 0.5), 900, none, OBSERVED},
      {6, tick, 900, none, OBSERVED},
      {7, gaze(920, 1200, 0.5, 0.5), 1200, none, OBSERVED},
      // 1200 ms accumulated, mask area ~2% of the canvas.
      {8, tick, 1200, dispatch, TRANSFORMING},
      {9, tick, 1233, none, TRANSFORMING},
      {10, gaze(1220, 1400, 0.5, 0.5), 1400, none, TRANSFORMING},
      {11, done(40), 1500, committed, OBSERVED},
      // Cooldown runs from the commit at 1500.
      {12, tick, 1533, none, OBSERVED},
      {13, gaze(1550, 2000, 0.25, 0.25), 2000, none, OBSERVED},
      {14, tick, 2000, none, OBSERVED},
      {15, gaze(2020, 2800, 0.25, 0.25), 2800, none, OBSERVED},
      {16, tick, 2800, none, OBSERVED},  // accumulated 1250 ms, cooldown 1300 ms
      {17, gaze(2820, 3500, 0.25, 0.25), 3500, none, OBSERVED},
      {18, tick, 3500, dispatch, TRANSFORMING},
      {19, [&] { return Event{JobFailed{job, {BackendErrorKind::unavailable, "HTTP 503"}}}; }, 3600,
       Names{"LogEvent", "EmitStateChange"}, OBSERVED},
      {20, tick, 3633, none, OBSERVED},
      // A stray late result for the failed job is ignored.
      {21, done(41), 3700, Names{"LogEvent"}, OBSERVED},
      {22, gaze(3620, 4000, 0.25, 0.25), 4000, none, OBSERVED},
      {23, tick, 5000, none, OBSERVED},  // failure cooldown until 5600
      {24, gaze(4020, 5600, 0.25, 0.25), 5600, none, OBSERVED},
      {25, tick, 5600, dispatch, TRANSFORMING},
      {26, tick, 5633, none, TRANSFORMING},
      {27, done(80), 5700, committed, OBSERVED},
      // The viewer has gone; last valid sample at 5600.
      {28, tick, 5733, none, OBSERVED},
      {29, tick, 10599, none, OBSERVED},
      {30, tick, 10600, change, REGENERATING},
      {31, tick, 12099, none, REGENERATING},
      {32, tick, 12100, Names{"PopHistoryCrossfade"}, REGENERATING},
      // A glance interrupts the journey.
      {33, [] { return Event{one(12200, 0.9, 0.9)}; }, 12200, Names{"LogEvent", "EmitStateChange"}, OBSERVED},
      {34, tick, 12233, none, OBSERVED},
      {35, tick, 17199, none, OBSERVED},
      {36, tick, 17200, change, REGENERATING},
      {37, tick, 18700, Names{"PopHistoryCrossfade", "EmitStateChange"}, PRISTINE_IDLE},
      {38, tick, 18733, none, PRISTINE_IDLE},
      {39, [] { return Event{one(18800, 0.5, 0.5, false)}; }, 18800, none, PRISTINE_IDLE},
      {40, tick, 20000, none, PRISTINE_IDLE},
  };
  ASSERT_EQ(table.size(), 40u);

  for (const Row& row : table) {
    const Names got = h.feed(row.event(), row.t);
    ASSERT_EQ(got, row.actions) << "row " << row.n;
    ASSERT_EQ(h.s.mode, row.mode) << "row " << row.n;
    for (const auto& a : h.last)
      if (const auto* d = std::get_if<DispatchInpaint>(&a)) job = d->job_id;

    switch (row.n) {
      case 8: EXPECT_EQ(job, 1u); break;
      case 11:
        EXPECT_EQ(h.find<PushHistory>().depth, 1u);
        after_first = h.s.current_image;
        break;
      case 18: EXPECT_EQ(job, 2u); break;
      case 25: EXPECT_EQ(job, 3u); break;
      case 27:
        EXPECT_EQ(h.find<PushHistory>().depth, 2u);
        EXPECT_EQ(h.s.destruction_level, 2u);
        break;
      case 32:
        EXPECT_EQ(h.find<PopHistoryCrossfade>().remaining, 1u);
        EXPECT_EQ(h.s.current_image, after_first);
        EXPECT_EQ(h.s.destruction_level, 1u);
        break;
      case 37:
        EXPECT_EQ(h.find<PopHistoryCrossfade>().remaining, 0u);
        EXPECT_EQ(h.find<PopHistoryCrossfade>().image_hash, h.s.pristine_hash);
        EXPECT_EQ(h.s.current_image, pristine);
        EXPECT_EQ(h.s.destruction_level, 0u);
        break;
      default: break;
    }
  }
}
