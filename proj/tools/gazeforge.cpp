// gazeforge command-line entry point.
//
//   gazeforge run --config PATH [--record PATH] [--headless] [--inject TRACE] [--duration-ms N]
//   gazeforge replay --trace PATH --config PATH
//   gazeforge hash --image PATH
//   gazeforge catalog-check --config PATH
//
// Exit codes: 0 success, 1 usage error, 2 runtime error.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gazeforge/codec.hpp"
#include "gazeforge/config.hpp"
#include "gazeforge/live.hpp"
#include "gazeforge/runtime.hpp"
#include "gazeforge/session_log.hpp"

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string config_path(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("GAZEFORGE_CONFIG"); env && *env) return env;
  throw UsageError("--config is required (or set GAZEFORGE_CONFIG)");
}

gazeforge::EngineConfig load(const std::string& flag, const std::optional<std::uint64_t>& seed) {
  gazeforge::EngineConfig cfg = gazeforge::load_config(config_path(flag));
  if (seed) cfg.seed = *seed;
  return cfg;
}

gazeforge::Trace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trace " + path);
  return gazeforge::parse_trace(in);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gazeforge - gaze-driven landscape engine"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Override the configured seed");

  std::string config;
  std::string record;
  std::string inject;
  std::string trace;
  std::string image;
  bool headless = false;
  std::optional<std::int64_t> duration_ms;

  auto* run = app.add_subcommand("run", "Run a live session");
  run->add_option("--config", config, "Engine config (JSON)");
  run->add_option("--record", record, "Write the session log here");
  run->add_flag("--headless", headless, "No network listener");
  run->add_option("--inject", inject, "Play a gaze trace into the session");
  run->add_option("--duration-ms", duration_ms, "Stop after this much session time");

  auto* rep = app.add_subcommand("replay", "Replay a trace with the mock backend");
  rep->add_option("--trace", trace, "Session log or gaze JSONL")->required();
  rep->add_option("--config", config, "Engine config used when the trace has no snapshot");

  auto* hash = app.add_subcommand("hash", "Print the canonical hash of a PNG");
  hash->add_option("--image", image, "PNG file")->required();

  auto* check = app.add_subcommand("catalog-check", "Validate the prompt catalog");
  check->add_option("--config", config, "Engine config (JSON)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*run) {
      gazeforge::EngineConfig cfg = load(config, seed);
      gazeforge::LiveOptions opts;
      if (!record.empty()) opts.record_path = record;
      opts.headless = headless;
      if (!inject.empty()) opts.inject = read_trace(inject);
      opts.duration_ms = duration_ms;
      opts.stop = &g_stop;
      opts.on_listening = [](unsigned short port) {
        std::cout << "listening on port " << port << std::endl;
      };
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const auto summary = gazeforge::run_live(cfg, opts);
      std::cerr << "session ended at " << summary.end_ms << " ms: " << summary.commits.size()
                << " commits, mode " << gazeforge::to_string(summary.final_mode) << "\n";
      return 0;
    }
    if (*rep) {
      const gazeforge::Trace t = read_trace(trace);
      gazeforge::EngineConfig cfg;
      if (t.config_snapshot) {
        cfg = gazeforge::replay_config(t, cfg);
        if (seed) cfg.seed = *seed;
      } else {
        cfg = load(config, seed);
      }
      const auto result = gazeforge::replay(t, cfg);
      std::cout << result.hash_listing();
      std::cerr << "final " << gazeforge::to_string(result.final_mode) << " "
                << result.final_hash << " at " << result.end_ms << " ms\n";
      return 0;
    }
    if (*hash) {
      const gazeforge::Image img = gazeforge::decode_png_rgb(read_file(image));
      std::cout << gazeforge::image_hash(img) << "\n";
      return 0;
    }
    if (*check) {
      const gazeforge::EngineConfig cfg = load(config, seed);
      std::cout << "destruction: " << cfg.catalog.destruction.size() << "\n"
                << "pristine: " << cfg.catalog.pristine.size() << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
