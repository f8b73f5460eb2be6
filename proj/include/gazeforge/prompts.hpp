#pragma once

// Prompt catalog and reproducible prompt selection.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace gazeforge {

struct SplitMixStep {
  std::uint64_t state;
  std::uint64_t output;
};

constexpr SplitMixStep splitmix64_next(std::uint64_t state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return {state, z ^ (z >> 31)};
}

/// Uniform in [0,1) from a 64-bit output.
constexpr double unit_interval(std::uint64_t output) {
  return static_cast<double>(output) * 0x1.0p-64;
}

/// Small stateful wrapper for call sites that just want a stream.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed = 0) : state_(seed) {}
  constexpr std::uint64_t next() {
    const auto r = splitmix64_next(state_);
    state_ = r.state;
    return r.output;
  }
  constexpr std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

enum class PromptCategory : std::uint8_t { destruction = 0, pristine = 1 };

inline const char* to_string(PromptCategory c) {
  return c == PromptCategory::destruction ? "destruction" : "pristine";
}

struct Prompt {
  std::string text;
  std::string negative;
  double weight = 1.0;
  PromptCategory category = PromptCategory::destruction;

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

struct PromptCatalog {
  std::vector<Prompt> destruction;
  std::vector<Prompt> pristine;

  const std::vector<Prompt>& of(PromptCategory c) const {
    return c == PromptCategory::destruction ? destruction : pristine;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    for (auto c : {PromptCategory::destruction, PromptCategory::pristine}) {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& p : of(c))
        arr.push_back({{"text", p.text}, {"negative", p.negative}, {"weight", p.weight}});
      j[to_string(c)] = std::move(arr);
    }
    return j;
  }

  friend bool operator==(const PromptCatalog&, const PromptCatalog&) = default;
};

class CatalogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline PromptCatalog parse_catalog(const nlohmann::json& doc) {
  if (!doc.is_object()) throw CatalogError("catalog: top level must be an object");
  PromptCatalog catalog;
  for (auto c : {PromptCategory::destruction, PromptCategory::pristine}) {
    const std::string name = to_string(c);
    auto it = doc.find(name);
    if (it == doc.end()) throw CatalogError(name + ": missing category");
    if (!it->is_array()) throw CatalogError(name + ": must be an array");
    if (it->empty()) throw CatalogError(name + ": empty category");
    auto& list = c == PromptCategory::destruction ? catalog.destruction : catalog.pristine;
    std::size_t index = 0;
    for (const auto& entry : *it) {
      const std::string where = name + "[" + std::to_string(index) + "]";
      if (!entry.is_object()) throw CatalogError(where + ": entry must be an object");
      Prompt p;
      p.category = c;
      auto text = entry.find("text");
      if (text == entry.end() || !text->is_string())
        throw CatalogError(where + ": missing text");
      p.text = text->get<std::string>();
      if (p.text.empty()) throw CatalogError(where + ": empty text");
      if (auto neg = entry.find("negative"); neg != entry.end()) {
        if (!neg->is_string()) throw CatalogError(where + ": negative must be a string");
        p.negative = neg->get<std::string>();
      }
      if (auto w = entry.find("weight"); w != entry.end()) {
        if (!w->is_number()) throw CatalogError(where + ": weight must be a number");
        p.weight = w->get<double>();
        if (!(p.weight > 0.0)) throw CatalogError(where + ": weight must be positive");
      }
      list.push_back(std::move(p));
      ++index;
    }
  }
  return catalog;
}

inline PromptCatalog parse_catalog(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CatalogError(std::string("catalog: malformed JSON: ") + e.what());
  }
  return parse_catalog(doc);
}

struct SchedulerState {
  std::uint64_t rng_state = 0;
  std::array<std::optional<std::size_t>, 2> last_index{};

  std::optional<std::size_t> last_for(PromptCategory c) const {
    return last_index[static_cast<std::size_t>(c)];
  }

  friend bool operator==(const SchedulerState&, const SchedulerState&) = default;
};

/// Index into the cumulative weight distribution for u in [0,1).
inline std::size_t weighted_index(const std::vector<Prompt>& entries, double u) {
  double total = 0.0;
  for (const auto& p : entries) total += p.weight;
  const double target = u * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    acc += entries[i].weight;
    if (target < acc) return i;
  }
  return entries.size() - 1;
}

struct PromptDraw {
  Prompt prompt;
  std::size_t index = 0;
  SchedulerState state;
};

/// Weighted draw; redraws while the pick repeats the previous pick of the
/// same category (when there is more than one entry).
inline PromptDraw next_prompt(const PromptCatalog& catalog, PromptCategory category,
                              SchedulerState state) {
  const auto& entries = catalog.of(category);
  if (entries.empty()) throw CatalogError(std::string(to_string(category)) + ": empty category");
  const auto previous = state.last_for(category);
  std::size_t index = 0;
  for (;;) {
    const auto r = splitmix64_next(state.rng_state);
    state.rng_state = r.state;
    index = weighted_index(entries, unit_interval(r.output));
    if (entries.size() < 2 || !previous || index != *previous) break;
  }
  state.last_index[static_cast<std::size_t>(category)] = index;
  return {entries[index], index, state};
}

}  // namespace gazeforge
