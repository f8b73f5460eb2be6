#pragma once

// Engine configuration, loaded from JSON. Unknown keys are ignored; missing
// keys take the defaults below.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazeforge/attention.hpp"
#include "gazeforge/gaze.hpp"
#include "gazeforge/http_backend.hpp"
#include "gazeforge/prompts.hpp"

namespace gazeforge {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TriggerPolicy {
  std::int64_t accumulate_window_ms = 1200;
  double min_area_fraction = 0.005;
  double max_area_fraction = 0.20;
  std::int64_t cooldown_ms = 2000;
  std::int64_t idle_timeout_ms = 5000;
  std::int64_t regen_step_interval_ms = 1500;
  // A trigger additionally requires a valid sample this recent.
  std::int64_t presence_window_ms = 1500;

  void validate() const {
    if (accumulate_window_ms <= 0 || cooldown_ms <= 0 || idle_timeout_ms <= 0 ||
        regen_step_interval_ms <= 0 || presence_window_ms <= 0)
      throw ConfigError("trigger: all durations must be positive");
    if (!(min_area_fraction > 0.0) || !(max_area_fraction > 0.0))
      throw ConfigError("trigger: area fractions must be positive");
    if (!(min_area_fraction < max_area_fraction))
      throw ConfigError("trigger: min_area_fraction must be < max_area_fraction");
  }
};

enum class RegenMode { rewind, generate };

enum class BackendKind { mock, http };

struct EngineConfig {
  int render_width = 768;
  int render_height = 768;
  int tick_hz = 30;
  std::uint64_t seed = 1;
  TriggerPolicy trigger;
  FixationParams fixation;
  MaskParams mask = MaskParams::scaled_for_width(768);
  RegenMode regen_mode = RegenMode::rewind;
  std::size_t history_capacity = 32;
  int crossfade_frames = 45;
  int steps = 30;
  double strength = 0.85;
  BackendKind backend = BackendKind::mock;
  HttpBackendOptions http;
  std::string prompt_catalog = "prompts/catalog.json";
  std::string listen = "127.0.0.1:8765";
  bool debug = false;

  // Resolved at load time; embedded in session logs so replays are
  // self-contained.
  PromptCatalog catalog;

  void validate() const {
    if (render_width <= 0 || render_height <= 0 || render_width % 8 || render_height % 8)
      throw ConfigError("render_width/render_height must be positive multiples of 8");
    if (tick_hz <= 0 || tick_hz > 1000) throw ConfigError("tick_hz must be in 1..1000");
    if (history_capacity < 1) throw ConfigError("history_capacity must be >= 1");
    if (crossfade_frames < 1) throw ConfigError("crossfade_frames must be >= 1");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (!(strength > 0.0 && strength <= 1.0)) throw ConfigError("strength must be in (0,1]");
    trigger.validate();
    try {
      fixation.validate();
      mask.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

  /// Virtual time of tick k, in session milliseconds.
  std::int64_t tick_time_ms(std::int64_t k) const { return k * 1000 / tick_hz; }
};

inline const char* to_string(RegenMode m) { return m == RegenMode::rewind ? "rewind" : "generate"; }
inline const char* to_string(BackendKind b) { return b == BackendKind::mock ? "mock" : "http"; }

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

inline const nlohmann::json& section(const nlohmann::json& j, const char* key) {
  static const nlohmann::json kEmpty = nlohmann::json::object();
  auto it = j.find(key);
  if (it == j.end()) return kEmpty;
  if (!it->is_object()) throw ConfigError(std::string("config: '") + key + "' must be an object");
  return *it;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

/// Parses the config document. A `prompt_catalog_data` object, when present,
/// is used instead of reading `prompt_catalog` from disk (relative paths are
/// resolved against `base_dir`).
inline EngineConfig parse_config(const nlohmann::json& j,
                                 const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  EngineConfig c;
  detail::read_opt(j, "render_width", c.render_width);
  detail::read_opt(j, "render_height", c.render_height);
  detail::read_opt(j, "tick_hz", c.tick_hz);
  detail::read_opt(j, "seed", c.seed);
  detail::read_opt(j, "history_capacity", c.history_capacity);
  detail::read_opt(j, "crossfade_frames", c.crossfade_frames);
  detail::read_opt(j, "steps", c.steps);
  detail::read_opt(j, "strength", c.strength);
  detail::read_opt(j, "prompt_catalog", c.prompt_catalog);
  detail::read_opt(j, "listen", c.listen);
  detail::read_opt(j, "debug", c.debug);

  std::string regen = "rewind";
  detail::read_opt(j, "regen_mode", regen);
  if (regen == "rewind") c.regen_mode = RegenMode::rewind;
  else if (regen == "generate") c.regen_mode = RegenMode::generate;
  else throw ConfigError("config: regen_mode must be 'rewind' or 'generate'");

  const auto& t = detail::section(j, "trigger");
  detail::read_opt(t, "accumulate_window_ms", c.trigger.accumulate_window_ms);
  detail::read_opt(t, "min_area_fraction", c.trigger.min_area_fraction);
  detail::read_opt(t, "max_area_fraction", c.trigger.max_area_fraction);
  detail::read_opt(t, "cooldown_ms", c.trigger.cooldown_ms);
  detail::read_opt(t, "idle_timeout_ms", c.trigger.idle_timeout_ms);
  detail::read_opt(t, "regen_step_interval_ms", c.trigger.regen_step_interval_ms);
  detail::read_opt(t, "presence_window_ms", c.trigger.presence_window_ms);

  const auto& f = detail::section(j, "fixation");
  detail::read_opt(f, "dispersion_threshold", c.fixation.dispersion_threshold);
  detail::read_opt(f, "min_duration_ms", c.fixation.min_duration_ms);
  detail::read_opt(f, "smoothing_window", c.fixation.smoothing_window);

  c.mask = MaskParams::scaled_for_width(c.render_width);
  const auto& m = detail::section(j, "mask");
  detail::read_opt(m, "sigma_px", c.mask.sigma_px);
  detail::read_opt(m, "decay_lambda", c.mask.decay_lambda);
  detail::read_opt(m, "threshold_tau", c.mask.threshold_tau);
  detail::read_opt(m, "dilation_px", c.mask.dilation_px);
  detail::read_opt(m, "feather_sigma_px", c.mask.feather_sigma_px);

  const auto& b = detail::section(j, "backend");
  std::string kind = "mock";
  detail::read_opt(b, "kind", kind);
  if (kind == "mock") c.backend = BackendKind::mock;
  else if (kind == "http") c.backend = BackendKind::http;
  else throw ConfigError("config: backend.kind must be 'mock' or 'http'");
  detail::read_opt(b, "base_url", c.http.base_url);
  detail::read_opt(b, "deadline_ms", c.http.deadline_ms);
  detail::read_opt(b, "max_retries", c.http.max_retries);
  detail::read_opt(b, "backoff_ms", c.http.backoff_ms);
  detail::read_opt(b, "bearer_token", c.http.bearer_token);

  if (auto it = j.find("prompt_catalog_data"); it != j.end()) {
    c.catalog = parse_catalog(*it);
  } else {
    std::filesystem::path p = c.prompt_catalog;
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    c.catalog = parse_catalog(std::string_view(detail::slurp(p)));
  }
  c.validate();
  return c;
}

inline EngineConfig load_config(const std::filesystem::path& path) {
  const std::string text = detail::slurp(path);
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: malformed JSON in " + path.string());
  return parse_config(j, path.parent_path());
}

/// Full config as JSON, with the catalog inlined. The bearer token is never
/// written; `redact_seed` also hides the seed (public /config endpoint).
inline nlohmann::ordered_json config_to_json(const EngineConfig& c, bool redact_seed = false) {
  nlohmann::ordered_json j;
  j["render_width"] = c.render_width;
  j["render_height"] = c.render_height;
  j["tick_hz"] = c.tick_hz;
  if (redact_seed) j["seed"] = "redacted";
  else j["seed"] = c.seed;
  j["regen_mode"] = to_string(c.regen_mode);
  j["history_capacity"] = c.history_capacity;
  j["crossfade_frames"] = c.crossfade_frames;
  j["steps"] = c.steps;
  j["strength"] = c.strength;
  j["trigger"] = {{"accumulate_window_ms", c.trigger.accumulate_window_ms},
                  {"min_area_fraction", c.trigger.min_area_fraction},
                  {"max_area_fraction", c.trigger.max_area_fraction},
                  {"cooldown_ms", c.trigger.cooldown_ms},
                  {"idle_timeout_ms", c.trigger.idle_timeout_ms},
                  {"regen_step_interval_ms", c.trigger.regen_step_interval_ms},
                  {"presence_window_ms", c.trigger.presence_window_ms}};
  j["fixation"] = {{"dispersion_threshold", c.fixation.dispersion_threshold},
                   {"min_duration_ms", c.fixation.min_duration_ms},
                   {"smoothing_window", c.fixation.smoothing_window}};
  j["mask"] = {{"sigma_px", c.mask.sigma_px},
               {"decay_lambda", c.mask.decay_lambda},
               {"threshold_tau", c.mask.threshold_tau},
               {"dilation_px", c.mask.dilation_px},
               {"feather_sigma_px", c.mask.feather_sigma_px}};
  nlohmann::ordered_json backend;
  backend["kind"] = to_string(c.backend);
  backend["base_url"] = c.http.base_url;
  backend["deadline_ms"] = c.http.deadline_ms;
  backend["max_retries"] = c.http.max_retries;
  backend["backoff_ms"] = c.http.backoff_ms;
  j["backend"] = std::move(backend);
  j["prompt_catalog"] = c.prompt_catalog;
  j["listen"] = c.listen;
  j["debug"] = c.debug;
  j["prompt_catalog_data"] = c.catalog.to_json();
  return j;
}

}  // namespace gazeforge
