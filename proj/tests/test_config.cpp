#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "gazeforge/config.hpp"

using namespace gazeforge;
using nlohmann::json;

namespace {

json inline_catalog() {
  return json::parse(R"({
    "destruction": [{"text": "smog"}, {"text": "flood", "weight": 2}],
    "pristine": [{"text": "meadow", "negative": "people"}]
  })");
}

json minimal() { return {{"prompt_catalog_data", inline_catalog()}}; }

}  // namespace

TEST(Config, DefaultsFromMinimalDocument) {
  const auto c = parse_config(minimal());
  EXPECT_EQ(c.render_width, 768);
  EXPECT_EQ(c.render_height, 768);
  EXPECT_EQ(c.tick_hz, 30);
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.regen_mode, RegenMode::rewind);
  EXPECT_EQ(c.history_capacity, 32u);
  EXPECT_EQ(c.crossfade_frames, 45);
  EXPECT_EQ(c.steps, 30);
  EXPECT_EQ(c.strength, 0.85);
  EXPECT_EQ(c.trigger.accumulate_window_ms, 1200);
  EXPECT_EQ(c.trigger.cooldown_ms, 2000);
  EXPECT_EQ(c.trigger.idle_timeout_ms, 5000);
  EXPECT_EQ(c.trigger.regen_step_interval_ms, 1500);
  EXPECT_EQ(c.trigger.min_area_fraction, 0.005);
  EXPECT_EQ(c.trigger.max_area_fraction, 0.20);
  EXPECT_EQ(c.fixation.dispersion_threshold, 0.05);
  EXPECT_EQ(c.fixation.min_duration_ms, 150);
  EXPECT_EQ(c.mask.sigma_px, 48.0);
  EXPECT_EQ(c.mask.dilation_px, 8.0);
  EXPECT_EQ(c.mask.feather_sigma_px, 12.0);
  EXPECT_EQ(c.backend, BackendKind::mock);
  EXPECT_EQ(c.http.deadline_ms, 60000);
  EXPECT_EQ(c.http.max_retries, 2);
  EXPECT_EQ(c.http.backoff_ms, (std::vector<std::int64_t>{1000, 2000}));
  EXPECT_EQ(c.catalog.destruction.size(), 2u);
  EXPECT_EQ(c.catalog.destruction[1].weight, 2.0);
}

TEST(Config, MaskRadiiScaleWithWidthUnlessOverridden) {
  json j = minimal();
  j["render_width"] = 256;
  j["render_height"] = 256;
  auto c = parse_config(j);
  EXPECT_EQ(c.mask.sigma_px, 16.0);
  EXPECT_EQ(c.mask.feather_sigma_px, 4.0);
  j["mask"] = {{"sigma_px", 20.0}};
  c = parse_config(j);
  EXPECT_EQ(c.mask.sigma_px, 20.0);
  EXPECT_EQ(c.mask.dilation_px, 8.0 / 3.0);
}

TEST(Config, TickTimes) {
  auto c = parse_config(minimal());
  EXPECT_EQ(c.tick_time_ms(0), 0);
  EXPECT_EQ(c.tick_time_ms(1), 33);
  EXPECT_EQ(c.tick_time_ms(3), 100);
  EXPECT_EQ(c.tick_time_ms(30), 1000);
}

TEST(Config, Errors) {
  auto fails = [](json j) {
    if (!j.contains("prompt_catalog_data")) j["prompt_catalog_data"] = inline_catalog();
    EXPECT_THROW(parse_config(j), ConfigError) << j.dump();
  };
  fails({{"render_width", 100}});
  fails({{"tick_hz", 0}});
  fails({{"regen_mode", "sideways"}});
  fails({{"backend", {{"kind", "grpc"}}}});
  fails({{"backend", "mock"}});
  fails({{"strength", 1.5}});
  fails({{"seed", "one"}});
  fails({{"trigger", {{"min_area_fraction", 0.5}, {"max_area_fraction", 0.2}}}});
  fails({{"trigger", {{"cooldown_ms", 0}}}});
  fails({{"mask", {{"threshold_tau", 1.0}}}});
  fails({{"fixation", {{"min_duration_ms", 0}}}});
  EXPECT_THROW(parse_config(json::array()), ConfigError);
  EXPECT_THROW(parse_config(json{{"prompt_catalog", "/nonexistent/catalog.json"}}), ConfigError);
  EXPECT_THROW(parse_config(json{{"prompt_catalog_data", {{"destruction", json::array()}}}}), CatalogError);
}

TEST(Config, LoadsShippedDefaultResolvingCatalogRelativeToFile) {
  const auto c = load_config(std::string(GAZEFORGE_SOURCE_DIR) + "/configs/default.json");
  EXPECT_EQ(c.render_width, 768);
  EXPECT_GE(c.catalog.destruction.size(), 5u);
  EXPECT_GE(c.catalog.pristine.size(), 1u);
  EXPECT_EQ(c.listen, "127.0.0.1:8765");
}

TEST(Config, MalformedFile) {
  const auto path = std::filesystem::temp_directory_path() / "gazeforge_bad_config.json";
  std::ofstream(path) << "{ not json";
  EXPECT_THROW(load_config(path), ConfigError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_config(path), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  json j = minimal();
  j["seed"] = 99;
  j["regen_mode"] = "generate";
  j["render_width"] = 256;
  j["render_height"] = 128;
  j["trigger"] = {{"cooldown_ms", 3000}};
  j["backend"] = {{"kind", "http"}, {"base_url", "http://gpu:9000"}, {"bearer_token", "tok"}};
  const auto c = parse_config(j);
  const auto back = parse_config(json::parse(config_to_json(c).dump()));
  EXPECT_EQ(config_to_json(back).dump(), config_to_json(c).dump());
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.regen_mode, RegenMode::generate);
  EXPECT_EQ(back.trigger.cooldown_ms, 3000);
  EXPECT_EQ(back.http.base_url, "http://gpu:9000");
  EXPECT_EQ(back.catalog, c.catalog);
  EXPECT_EQ(back.mask.sigma_px, c.mask.sigma_px);
}

TEST(Config, TokenNeverSerialized) {
  json j = minimal();
  j["backend"] = {{"bearer_token", "super-secret-token"}};
  const auto c = parse_config(j);
  EXPECT_EQ(c.http.bearer_token, "super-secret-token");
  EXPECT_EQ(config_to_json(c).dump().find("super-secret-token"), std::string::npos);
  EXPECT_EQ(config_to_json(c, true).dump().find("bearer"), std::string::npos);
}

TEST(Config, SeedRedaction) {
  json j = minimal();
  j["seed"] = 123456789;
  const auto c = parse_config(j);
  EXPECT_EQ(config_to_json(c)["seed"], 123456789);
  const auto pub = config_to_json(c, true);
  EXPECT_EQ(pub["seed"], "redacted");
  EXPECT_EQ(pub.dump().find("123456789"), std::string::npos);
}
