#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

namespace gazeforge {

/// Row-major 8-bit RGB raster.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("image dimensions must be positive");
    pixels.assign(static_cast<std::size_t>(w) * h * 3, 0);
  }
  Image(int w, int h, std::vector<std::uint8_t> rgb) : width(w), height(h), pixels(std::move(rgb)) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("image dimensions must be positive");
    if (pixels.size() != static_cast<std::size_t>(w) * h * 3)
      throw std::invalid_argument("image buffer length must be width*height*3");
  }

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[(static_cast<std::size_t>(y) * width + x) * 3];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

using ImageRef = std::shared_ptr<const Image>;

inline ImageRef share(Image img) { return std::make_shared<const Image>(std::move(img)); }

// Same as std::round; the fractional part v - trunc(v) is exact, so the
// inline path needs no libm call.
inline double round_half_away(double v) {
  if (!(std::fabs(v) < 4503599627370496.0)) return std::round(v);  // 2^52, or NaN
  const double t = static_cast<double>(static_cast<std::int64_t>(v));
  const double f = v - t;
  return t + static_cast<double>(f >= 0.5) - static_cast<double>(f <= -0.5);
}

inline std::uint8_t to_channel(double v) {
  const double r = round_half_away(v);
  return static_cast<std::uint8_t>(r < 0.0 ? 0.0 : (r > 255.0 ? 255.0 : r));
}

/// a + (b - a) * w, rounded half away from zero. Monotone in w; w = 0 gives a
/// and w = 1 gives b exactly.
inline std::uint8_t lerp_channel(std::uint8_t a, std::uint8_t b, double w) {
  return to_channel(static_cast<double>(a) + (static_cast<double>(b) - a) * w);
}

}  // namespace gazeforge
