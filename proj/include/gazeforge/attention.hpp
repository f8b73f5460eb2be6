#pragma once

// Attention heatmap (Gaussian splats with exponential decay) and the
// feathered inpainting mask extracted from it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "gazeforge/gaze.hpp"

namespace gazeforge {

struct MaskParams {
  double sigma_px = 48.0;
  double decay_lambda = 0.8;  // per second
  double threshold_tau = 0.5;
  double dilation_px = 8.0;
  double feather_sigma_px = 12.0;

  /// Defaults are tuned for a 768-wide render; scale the pixel radii.
  static MaskParams scaled_for_width(int width) {
    MaskParams p;
    const double s = static_cast<double>(width) / 768.0;
    p.sigma_px *= s;
    p.dilation_px *= s;
    p.feather_sigma_px *= s;
    return p;
  }

  void validate() const {
    if (!(sigma_px > 0.0)) throw std::invalid_argument("mask: sigma_px must be > 0");
    if (!(threshold_tau > 0.0 && threshold_tau < 1.0))
      throw std::invalid_argument("mask: threshold_tau must be in (0,1)");
    if (!(dilation_px >= 0.0)) throw std::invalid_argument("mask: dilation_px must be >= 0");
    if (!(feather_sigma_px >= 0.0))
      throw std::invalid_argument("mask: feather_sigma_px must be >= 0");
    if (!(decay_lambda >= 0.0)) throw std::invalid_argument("mask: decay_lambda must be >= 0");
  }
};

namespace detail {

// Heat values live on a 2^-40 grid so that sums of splats are exact and
// therefore independent of application order.
inline constexpr double kHeatScale = 1099511627776.0;  // 2^40

inline double quantize_heat(double v) { return std::nearbyint(v * kHeatScale) / kHeatScale; }

}  // namespace detail

struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  Heatmap() = default;
  Heatmap(int w, int h) : width(w), height(h), values(checked_size(w, h), 0.0) {}

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }

  std::size_t size() const { return values.size(); }
  void clear() { std::fill(values.begin(), values.end(), 0.0); }
  bool is_zero() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
  }

  friend bool operator==(const Heatmap&, const Heatmap&) = default;

 private:
  static std::size_t checked_size(int w, int h) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("heatmap dimensions must be positive");
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  }
};

struct AttentionMask {
  int width = 0;
  int height = 0;
  std::vector<double> alpha;

  AttentionMask() = default;
  AttentionMask(int w, int h, double fill = 0.0)
      : width(w), height(h), alpha(static_cast<std::size_t>(w) * h, fill) {}

  double at(int x, int y) const { return alpha[static_cast<std::size_t>(y) * width + x]; }
  bool in_support(std::size_t i) const { return alpha[i] > 0.0; }
  std::size_t size() const { return alpha.size(); }

  std::size_t support_count() const {
    return static_cast<std::size_t>(
        std::count_if(alpha.begin(), alpha.end(), [](double a) { return a > 0.0; }));
  }

  /// 8-bit grayscale rendering, round(alpha * 255).
  std::vector<std::uint8_t> to_gray8() const {
    std::vector<std::uint8_t> out(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i)
      out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(alpha[i], 0.0, 1.0) * 255.0));
    return out;
  }

  static AttentionMask from_gray8(int w, int h, const std::vector<std::uint8_t>& g) {
    AttentionMask m(w, h);
    for (std::size_t i = 0; i < m.alpha.size(); ++i) m.alpha[i] = g[i] / 255.0;
    return m;
  }

  friend bool operator==(const AttentionMask&, const AttentionMask&) = default;
};

/// Adds a Gaussian of peak 1 centred on the fixation (normalized centroid
/// scaled by the field size), clamping at 1.
inline Heatmap splat(Heatmap heat, const Fixation& fixation, const MaskParams& params) {
  const double cx = fixation.cx * heat.width;
  const double cy = fixation.cy * heat.height;
  const double inv = 1.0 / (2.0 * params.sigma_px * params.sigma_px);
  constexpr double kNegligible = 0.5 / detail::kHeatScale;

  std::vector<double> gx(heat.width);
  for (int x = 0; x < heat.width; ++x) gx[x] = std::exp(-(x - cx) * (x - cx) * inv);
  const double gx_max = *std::max_element(gx.begin(), gx.end());

  for (int y = 0; y < heat.height; ++y) {
    const double gy = std::exp(-(y - cy) * (y - cy) * inv);
    if (gy * gx_max < kNegligible) continue;
    double* row = heat.values.data() + static_cast<std::size_t>(y) * heat.width;
    for (int x = 0; x < heat.width; ++x) {
      const double k = detail::quantize_heat(gx[x] * gy);
      if (k == 0.0) continue;
      row[x] = std::min(1.0, row[x] + k);
    }
  }
  return heat;
}

inline Heatmap decay(Heatmap heat, std::int64_t dt_ms, const MaskParams& params) {
  if (dt_ms < 0) throw std::invalid_argument("decay: dt_ms must be >= 0");
  if (dt_ms == 0) return heat;
  const double factor = std::exp(-params.decay_lambda * static_cast<double>(dt_ms) / 1000.0);
  for (double& v : heat.values)
    if (v != 0.0) v = detail::quantize_heat(v * factor);
  return heat;
}

namespace detail {

struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
  int w() const { return x1 - x0; }
  int h() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

struct Run {
  int a, b;  // half-open
};
using RowRuns = std::vector<std::vector<Run>>;

// Runs of `want` in each row of a bw x bh plane.
inline RowRuns row_runs(const std::uint8_t* plane, int bw, int bh, std::uint8_t want) {
  RowRuns runs(bh);
  for (int y = 0; y < bh; ++y) {
    const std::uint8_t* row = plane + static_cast<std::size_t>(y) * bw;
    for (int x = 0; x < bw;) {
      if (row[x] != want) {
        ++x;
        continue;
      }
      const int a = x;
      while (x < bw && row[x] == want) ++x;
      runs[y].push_back({a, x});
    }
  }
  return runs;
}

// Half-width of the disk {dx^2 + dy^2 <= r2} on row dy, or -1 if the row misses it.
inline int disk_half_width(int dy, double r2) {
  const double rest = r2 - double(dy) * dy;
  if (rest < 0.0) return -1;
  int k = static_cast<int>(std::sqrt(rest));
  while (double(k + 1) * (k + 1) <= rest) ++k;
  while (k > 0 && double(k) * k > rest) --k;
  return k;
}

// Pixels of a bw x bh plane within Euclidean distance sqrt(r2) of some run.
inline std::vector<std::uint8_t> dilate(const RowRuns& runs, int bw, int bh, double r2) {
  const int reach = disk_half_width(0, r2);
  std::vector<int> hw(reach + 1);
  for (int dy = 0; dy <= reach; ++dy) hw[dy] = disk_half_width(dy, r2);
  std::vector<std::uint8_t> out(static_cast<std::size_t>(bw) * bh, 0);
  std::vector<int> diff(bw + 1);
  for (int y = 0; y < bh; ++y) {
    std::fill(diff.begin(), diff.end(), 0);
    bool any = false;
    for (int sy = std::max(0, y - reach); sy <= std::min(bh - 1, y + reach); ++sy) {
      const int w = hw[std::abs(sy - y)];
      for (const Run& r : runs[sy]) {
        ++diff[std::max(0, r.a - w)];
        --diff[std::min(bw, r.b + w)];
        any = true;
      }
    }
    if (!any) continue;
    std::uint8_t* row = out.data() + static_cast<std::size_t>(y) * bw;
    int depth = 0;
    for (int x = 0; x < bw; ++x) {
      depth += diff[x];
      row[x] = depth > 0;
    }
  }
  return out;
}

// acc[i] += k * src[i]. Element-wise, so every clone rounds identically.
__attribute__((target_clones("avx2", "default"))) inline void scaled_add(double* acc, const double* src,
                                                                         double k, int n) {
  for (int i = 0; i < n; ++i) acc[i] += k * src[i];
}

}  // namespace detail

/// threshold -> disk dilation -> Gaussian feather. Pixels farther than
/// 3*feather from the dilated support stay 0; pixels of the support farther
/// than 3*feather from its boundary are exactly 1.
inline AttentionMask extract_mask(const Heatmap& heat, const MaskParams& params) {
  const int W = heat.width;
  const int H = heat.height;
  AttentionMask mask(W, H);

  detail::Box bb{W, H, -1, -1};
  for (int y = 0; y < H; ++y) {
    const double* row = heat.values.data() + static_cast<std::size_t>(y) * W;
    for (int x = 0; x < W; ++x) {
      if (row[x] >= params.threshold_tau) {
        bb.x0 = std::min(bb.x0, x);
        bb.x1 = std::max(bb.x1, x + 1);
        bb.y0 = std::min(bb.y0, y);
        bb.y1 = y + 1;
      }
    }
  }
  if (bb.empty()) return mask;

  const double fs = params.feather_sigma_px;
  const double feather_reach = 3.0 * fs;
  const int radius = fs > 0.0 ? static_cast<int>(std::ceil(feather_reach)) : 0;
  const int margin = static_cast<int>(std::ceil(params.dilation_px)) + radius + 2;
  const detail::Box box{std::max(0, bb.x0 - margin), std::max(0, bb.y0 - margin),
                        std::min(W, bb.x1 + margin), std::min(H, bb.y1 + margin)};
  const int bw = box.w();
  const int bh = box.h();
  auto local = [&](int lx, int ly) { return static_cast<std::size_t>(ly) * bw + lx; };
  auto global = [&](int lx, int ly) {
    return static_cast<std::size_t>(ly + box.y0) * W + (lx + box.x0);
  };

  // Everything below works on the box; no support or relevant non-support
  // lies outside it.
  std::vector<std::uint8_t> support(static_cast<std::size_t>(bw) * bh, 0);
  for (int ly = bb.y0 - box.y0; ly < bb.y1 - box.y0; ++ly)
    for (int lx = bb.x0 - box.x0; lx < bb.x1 - box.x0; ++lx)
      support[local(lx, ly)] = heat.values[global(lx, ly)] >= params.threshold_tau;
  if (params.dilation_px > 0.0)
    support = detail::dilate(detail::row_runs(support.data(), bw, bh, 1), bw, bh,
                             params.dilation_px * params.dilation_px);

  if (fs <= 0.0) {
    for (int ly = 0; ly < bh; ++ly)
      for (int lx = 0; lx < bw; ++lx)
        if (support[local(lx, ly)]) mask.alpha[global(lx, ly)] = 1.0;
    return mask;
  }

  const double reach2 = feather_reach * feather_reach;
  const auto runs = detail::row_runs(support.data(), bw, bh, 1);
  const auto near = detail::dilate(runs, bw, bh, reach2);
  const auto near_outside = detail::dilate(detail::row_runs(support.data(), bw, bh, 0), bw, bh, reach2);

  const int taps = 2 * radius + 1;
  std::vector<double> kernel(taps);
  for (int j = -radius; j <= radius; ++j) kernel[j + radius] = std::exp(-(j * j) / (2.0 * fs * fs));
  // span_sum[a * taps + b]: kernel[a] + ... + kernel[b], accumulated left to right.
  std::vector<double> span_sum(static_cast<std::size_t>(taps) * taps, 0.0);
  for (int a = 0; a < taps; ++a) {
    double s = 0.0;
    for (int b = a; b < taps; ++b) span_sum[static_cast<std::size_t>(a) * taps + b] = s += kernel[b];
  }

  // Band: pixels neither pinned to 0 nor to 1. Only they need the blur.
  std::vector<std::uint8_t> band(static_cast<std::size_t>(bw) * bh, 0);
  std::vector<int> band_lo(bh, bw), band_hi(bh, 0);
  for (int ly = 0; ly < bh; ++ly) {
    for (int lx = 0; lx < bw; ++lx) {
      const std::size_t li = local(lx, ly);
      if (!near[li]) continue;
      if (support[li] && !near_outside[li]) {
        mask.alpha[global(lx, ly)] = 1.0;
        continue;
      }
      band[li] = 1;
      band_lo[ly] = std::min(band_lo[ly], lx);
      band_hi[ly] = lx + 1;
    }
  }

  // Horizontal pass of the normalized blur, restricted to the columns the
  // vertical pass reads from each row.
  // Left uninitialised: only rows with support are written and read.
  std::unique_ptr<double[]> horiz(new double[static_cast<std::size_t>(bw) * bh]);
  std::vector<std::uint8_t> row_has_support(bh, 0);
  for (int ly = 0; ly < bh; ++ly) {
    const auto& rr = runs[ly];
    if (rr.empty()) continue;
    row_has_support[ly] = 1;
    int x_lo = bw, x_hi = 0;
    for (int by = std::max(0, ly - radius); by <= std::min(bh - 1, ly + radius); ++by) {
      x_lo = std::min(x_lo, band_lo[by]);
      x_hi = std::max(x_hi, band_hi[by]);
    }
    double* hrow = horiz.get() + local(0, ly);
    std::size_t first = 0;
    for (int lx = x_lo; lx < x_hi; ++lx) {
      const int gx = lx + box.x0;
      const int lo = std::max(-radius, -gx);
      const int hi = std::min(radius, W - 1 - gx);
      const int wl = lx + lo, wh = lx + hi;
      while (first < rr.size() && rr[first].b <= wl) ++first;
      if (first == rr.size() || rr[first].a > wh) {
        hrow[lx] = 0.0;
        continue;
      }
      double num = 0.0;
      if (first + 1 == rr.size() || rr[first + 1].a > wh) {
        const int ja = std::max(wl, rr[first].a) - lx + radius;
        const int jb = std::min(wh, rr[first].b - 1) - lx + radius;
        num = span_sum[static_cast<std::size_t>(ja) * taps + jb];
      } else {
        for (std::size_t r = first; r < rr.size() && rr[r].a <= wh; ++r)
          for (int j = std::max(wl, rr[r].a) - lx; j <= std::min(wh, rr[r].b - 1) - lx; ++j)
            num += kernel[j + radius];
      }
      const double den = span_sum[static_cast<std::size_t>(lo + radius) * taps + (hi + radius)];
      hrow[lx] = num / den;
    }
  }

  std::vector<double> acc(bw);
  for (int ly = 0; ly < bh; ++ly) {
    if (band_hi[ly] == 0) continue;
    const int gy = ly + box.y0;
    const int lo = std::max(-radius, -gy);
    const int hi = std::min(radius, H - 1 - gy);
    const double den = span_sum[static_cast<std::size_t>(lo + radius) * taps + (hi + radius)];
    const std::uint8_t* brow = band.data() + local(0, ly);
    double* arow = mask.alpha.data() + global(0, ly);
    for (int lx = band_lo[ly]; lx < band_hi[ly];) {
      if (!brow[lx]) {
        ++lx;
        continue;
      }
      const int s = lx;
      while (lx < band_hi[ly] && brow[lx]) ++lx;
      std::fill(acc.begin() + s, acc.begin() + lx, 0.0);
      // Rows outside the box or without support contribute exactly 0.
      for (int j = lo; j <= hi; ++j) {
        const int ry = ly + j;
        if (ry < 0 || ry >= bh || !row_has_support[ry]) continue;
        detail::scaled_add(acc.data() + s, horiz.get() + local(s, ry), kernel[j + radius], lx - s);
      }
      for (int x = s; x < lx; ++x) arow[x] = std::clamp(acc[x] / den, 0.0, 1.0);
    }
  }
  return mask;
}

inline double area_fraction(const AttentionMask& mask) {
  if (mask.alpha.empty()) return 0.0;
  const auto covered = std::count_if(mask.alpha.begin(), mask.alpha.end(),
                                     [](double a) { return a > 0.5; });
  return static_cast<double>(covered) / static_cast<double>(mask.alpha.size());
}

/// Keeps only the floor(max_fraction * pixels) strongest pixels (by alpha,
/// then heat, then index), zeroing the rest.
inline AttentionMask clip_to_area(AttentionMask mask, const Heatmap& heat, double max_fraction) {
  const auto budget = static_cast<std::size_t>(std::floor(max_fraction * mask.size()));
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.alpha[i] > 0.0) idx.push_back(i);
  if (idx.size() <= budget) return mask;
  auto stronger = [&](std::size_t a, std::size_t b) {
    if (mask.alpha[a] != mask.alpha[b]) return mask.alpha[a] > mask.alpha[b];
    if (heat.values[a] != heat.values[b]) return heat.values[a] > heat.values[b];
    return a < b;
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(budget), idx.end(),
                   stronger);
  for (auto it = idx.begin() + static_cast<std::ptrdiff_t>(budget); it != idx.end(); ++it)
    mask.alpha[*it] = 0.0;
  return mask;
}

/// Pixel-wise max of two masks of equal size.
inline AttentionMask union_mask(AttentionMask a, const AttentionMask& b) {
  for (std::size_t i = 0; i < a.alpha.size(); ++i) a.alpha[i] = std::max(a.alpha[i], b.alpha[i]);
  return a;
}

}  // namespace gazeforge
