#pragma once

// Masked crossfade between two images and the commit blend.

#include <memory>
#include <stdexcept>

#include "gazeforge/attention.hpp"
#include "gazeforge/codec.hpp"
#include "gazeforge/image.hpp"

namespace gazeforge {

using MaskRef = std::shared_ptr<const AttentionMask>;

inline MaskRef share(AttentionMask m) { return std::make_shared<const AttentionMask>(std::move(m)); }

inline double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }

struct CrossfadePlan {
  ImageRef from;
  ImageRef to;
  MaskRef mask;
  int n_frames = 45;

  void validate() const {
    if (!from || !to || !mask) throw std::invalid_argument("crossfade: missing input");
    if (from->width != to->width || from->height != to->height ||
        mask->width != from->width || mask->height != from->height)
      throw std::invalid_argument("crossfade: dimension mismatch");
    if (n_frames < 1) throw std::invalid_argument("crossfade: n_frames must be >= 1");
  }
};

/// Interpolator seam: the analytic crossfade below is the default; a neural
/// frame interpolator can be plugged in behind the same call.
class FrameInterpolator {
 public:
  virtual ~FrameInterpolator() = default;
  virtual Image frame_at(const CrossfadePlan& plan, int i) const = 0;
};

namespace detail {

// For w in [0, 1], a + (b - a) * w stays within [a, b], so rounding needs
// neither clamping nor a libm call; w == 0 reproduces a exactly.
__attribute__((target_clones("avx2", "default"))) inline void blend_unit(
    const std::uint8_t* from, const std::uint8_t* to, const double* alpha, double envelope,
    std::uint8_t* out, std::size_t n) {
  for (std::size_t p = 0; p < n; ++p) {
    const double w = envelope * alpha[p];
    for (std::size_t c = p * 3; c < p * 3 + 3; ++c) {
      const double a = from[c];
      const double v = a + (static_cast<double>(to[c]) - a) * w;
      const int t = static_cast<int>(v);
      out[c] = static_cast<std::uint8_t>(t + (v - t >= 0.5));
    }
  }
}

inline Image blend(const Image& from, const Image& to, const AttentionMask& mask, double envelope) {
  Image out(from.width, from.height);
  const std::size_t n = out.pixel_count();
  bool unit = envelope >= 0.0 && envelope <= 1.0;
  for (std::size_t p = 0; p < n; ++p) unit &= mask.alpha[p] >= 0.0 && mask.alpha[p] <= 1.0;
  if (unit) {
    blend_unit(from.pixels.data(), to.pixels.data(), mask.alpha.data(), envelope, out.pixels.data(), n);
    return out;
  }
  for (std::size_t p = 0; p < n; ++p) {
    const double w = envelope * mask.alpha[p];
    for (std::size_t c = p * 3; c < p * 3 + 3; ++c)
      out.pixels[c] = lerp_channel(from.pixels[c], to.pixels[c], w);
  }
  return out;
}

}  // namespace detail

inline Image frame_at(const CrossfadePlan& plan, int i) {
  plan.validate();
  if (i < 0 || i > plan.n_frames) throw std::out_of_range("crossfade: frame index out of range");
  const double u = static_cast<double>(i) / plan.n_frames;
  return detail::blend(*plan.from, *plan.to, *plan.mask, smoothstep(u));
}

inline Image commit(const Image& from, const Image& to, const AttentionMask& mask) {
  if (from.width != to.width || from.height != to.height || mask.width != from.width ||
      mask.height != from.height)
    throw std::invalid_argument("commit: dimension mismatch");
  return detail::blend(from, to, mask, 1.0);
}

class CrossfadeInterpolator final : public FrameInterpolator {
 public:
  Image frame_at(const CrossfadePlan& plan, int i) const override {
    return gazeforge::frame_at(plan, i);
  }
};

}  // namespace gazeforge
