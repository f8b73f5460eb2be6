#pragma once

// Diffusion service abstraction: request types, the deterministic mock and the
// JSON wire format shared with remote services.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

#include <nlohmann/json.hpp>

#include "gazeforge/attention.hpp"
#include "gazeforge/codec.hpp"
#include "gazeforge/image.hpp"
#include "gazeforge/prompts.hpp"

namespace gazeforge {

struct GenerateRequest {
  std::string prompt;
  std::string negative;
  std::uint64_t seed = 0;
  int width = 0;
  int height = 0;
  int steps = 30;

  void validate() const {
    if (width <= 0 || height <= 0 || width % 8 != 0 || height % 8 != 0)
      throw std::invalid_argument("request: width and height must be positive multiples of 8");
    if (steps < 1) throw std::invalid_argument("request: steps must be >= 1");
  }
};

struct InpaintRequest : GenerateRequest {
  ImageRef source;
  AttentionMask mask;
  double strength = 0.85;

  void validate() const {
    GenerateRequest::validate();
    if (!source) throw std::invalid_argument("inpaint: missing source image");
    if (source->width != width || source->height != height)
      throw std::invalid_argument("inpaint: source dimensions differ from request");
    if (mask.width != width || mask.height != height)
      throw std::invalid_argument("inpaint: mask dimensions differ from source");
    if (!(strength > 0.0 && strength <= 1.0))
      throw std::invalid_argument("inpaint: strength must be in (0,1]");
  }
};

enum class BackendErrorKind { timeout, unavailable, malformed_response, rejected };

inline const char* to_string(BackendErrorKind k) {
  switch (k) {
    case BackendErrorKind::timeout: return "timeout";
    case BackendErrorKind::unavailable: return "unavailable";
    case BackendErrorKind::malformed_response: return "malformed_response";
    case BackendErrorKind::rejected: return "rejected";
  }
  return "unknown";
}

inline bool retryable(BackendErrorKind k) {
  return k == BackendErrorKind::timeout || k == BackendErrorKind::unavailable;
}

struct BackendError {
  BackendErrorKind kind = BackendErrorKind::unavailable;
  std::string detail;

  friend bool operator==(const BackendError&, const BackendError&) = default;
};

using BackendResult = std::variant<Image, BackendError>;

inline bool ok(const BackendResult& r) { return std::holds_alternative<Image>(r); }

class Backend {
 public:
  virtual ~Backend() = default;
  virtual BackendResult generate(const GenerateRequest& req) = 0;
  virtual BackendResult inpaint(const InpaintRequest& req) = 0;
  /// Synchronous backends are run inline by the session driver, which keeps
  /// live runs replayable.
  virtual bool synchronous() const { return false; }
};

namespace detail {

// Position of pixel `i` on the 4-wide lattice, in 8-bit fixed point:
// round_half_away(i * 3 * 256 / (n - 1)).
inline std::int32_t lattice_coord(int i, int n) {
  if (n <= 1) return 0;
  const std::int64_t num = static_cast<std::int64_t>(i) * 3 * 256;
  const std::int64_t den = n - 1;
  return static_cast<std::int32_t>((2 * num + den) / (2 * den));
}

}  // namespace detail

/// Smooth deterministic "landscape": a 4x4 lattice of colours drawn from
/// SplitMix64(seed ^ fnv1a64(prompt)), upsampled bilinearly in fixed point.
inline Image mock_generate(std::string_view prompt, std::uint64_t seed, int width, int height) {
  SplitMix64 rng(seed ^ fnv1a64(prompt));
  std::array<std::array<std::uint8_t, 3>, 16> lattice{};
  for (auto& c : lattice) {
    const std::uint64_t o = rng.next();
    c = {static_cast<std::uint8_t>(o), static_cast<std::uint8_t>(o >> 8),
         static_cast<std::uint8_t>(o >> 16)};
  }
  Image img(width, height);
  std::vector<std::int32_t> col_cell(width), col_frac(width);
  for (int x = 0; x < width; ++x) {
    const std::int32_t fx = detail::lattice_coord(x, width);
    col_cell[x] = std::min(fx >> 8, 2);
    col_frac[x] = fx - col_cell[x] * 256;
  }
  for (int y = 0; y < height; ++y) {
    const std::int32_t fy = detail::lattice_coord(y, height);
    const std::int32_t cy = std::min(fy >> 8, 2);
    const std::int32_t wy = fy - cy * 256;
    for (int x = 0; x < width; ++x) {
      const std::int32_t cx = col_cell[x];
      const std::int32_t wx = col_frac[x];
      const auto& c00 = lattice[cy * 4 + cx];
      const auto& c10 = lattice[cy * 4 + cx + 1];
      const auto& c01 = lattice[(cy + 1) * 4 + cx];
      const auto& c11 = lattice[(cy + 1) * 4 + cx + 1];
      std::uint8_t* px = img.at(x, y);
      for (int ch = 0; ch < 3; ++ch) {
        const std::int32_t v = c00[ch] * (256 - wx) * (256 - wy) + c10[ch] * wx * (256 - wy) +
                               c01[ch] * (256 - wx) * wy + c11[ch] * wx * wy;
        px[ch] = static_cast<std::uint8_t>((v + 32768) >> 16);
      }
    }
  }
  return img;
}

/// source * (1 - alpha*strength) + generated * (alpha*strength), per channel.
inline Image mock_inpaint(const InpaintRequest& req) {
  const Image g = mock_generate(req.prompt, req.seed, req.width, req.height);
  Image out = *req.source;
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    const double w = req.mask.alpha[p] * req.strength;
    if (w == 0.0) continue;
    for (int ch = 0; ch < 3; ++ch)
      out.pixels[p * 3 + ch] = lerp_channel(req.source->pixels[p * 3 + ch], g.pixels[p * 3 + ch], w);
  }
  return out;
}

class MockBackend final : public Backend {
 public:
  BackendResult generate(const GenerateRequest& req) override {
    req.validate();
    return mock_generate(req.prompt, req.seed, req.width, req.height);
  }
  BackendResult inpaint(const InpaintRequest& req) override {
    req.validate();
    return mock_inpaint(req);
  }
  bool synchronous() const override { return true; }
};

// Wire format ---------------------------------------------------------------

inline std::string encode_generate_request(const GenerateRequest& req) {
  nlohmann::ordered_json j;
  j["prompt"] = req.prompt;
  j["negative_prompt"] = req.negative;
  j["seed"] = req.seed;
  j["width"] = req.width;
  j["height"] = req.height;
  j["steps"] = req.steps;
  return j.dump();
}

inline std::string encode_inpaint_request(const InpaintRequest& req) {
  const auto gray = req.mask.to_gray8();
  nlohmann::ordered_json j;
  j["prompt"] = req.prompt;
  j["negative_prompt"] = req.negative;
  j["seed"] = req.seed;
  j["width"] = req.width;
  j["height"] = req.height;
  j["steps"] = req.steps;
  j["strength"] = req.strength;
  j["image_png_b64"] = base64_encode(encode_png(*req.source));
  j["mask_png_b64"] = base64_encode(encode_png_gray({req.mask.width, req.mask.height, gray}));
  return j.dump();
}

/// Decodes {"image_png_b64": ...} and checks the image has the expected size.
inline BackendResult decode_image_response(std::string_view body, int expect_w, int expect_h) {
  auto malformed = [](std::string d) {
    return BackendError{BackendErrorKind::malformed_response, std::move(d)};
  };
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return malformed("response is not a JSON object");
  auto it = j.find("image_png_b64");
  if (it == j.end()) return malformed("missing key image_png_b64");
  if (!it->is_string()) return malformed("image_png_b64 must be a string");
  try {
    const auto png = base64_decode(it->get_ref<const std::string&>());
    Image img = decode_png_rgb(
        std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
    if (img.width != expect_w || img.height != expect_h)
      return malformed("dimension mismatch: got " + std::to_string(img.width) + "x" +
                       std::to_string(img.height) + ", expected " + std::to_string(expect_w) +
                       "x" + std::to_string(expect_h));
    return img;
  } catch (const CodecError& e) {
    return malformed(e.what());
  } catch (const std::invalid_argument& e) {
    return malformed(e.what());
  }
}

inline BackendResult decode_inpaint_response(std::string_view body, const InpaintRequest& req) {
  return decode_image_response(body, req.width, req.height);
}

/// Server side of the wire: the success body for an image.
inline std::string encode_image_response(const Image& img) {
  nlohmann::ordered_json j;
  j["image_png_b64"] = base64_encode(encode_png(img));
  return j.dump();
}

}  // namespace gazeforge
