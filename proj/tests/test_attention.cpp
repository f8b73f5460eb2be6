#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gazeforge/attention.hpp"
#include "oracles.hpp"

using namespace gazeforge;

namespace {

Fixation at_px(double px, double py, int w, int h) {
  Fixation f;
  f.cx = px / w;
  f.cy = py / h;
  f.end_ms = 200;
  f.n = 2;
  return f;
}

MaskParams sigma(double s) {
  MaskParams p;
  p.sigma_px = s;
  return p;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Splat, KernelValues) {
  const Heatmap h = splat(Heatmap(128, 128), at_px(64, 64, 128, 128), sigma(8));
  EXPECT_EQ(h.at(64, 64), 1.0);
  EXPECT_NEAR(h.at(64, 72), std::exp(-0.5), 1e-12);
  EXPECT_NEAR(h.at(64, 72), 0.6065, 1e-4);
}

TEST(Splat, SameCentreSaturates) {
  const auto p = sigma(8);
  Heatmap h = splat(Heatmap(128, 128), at_px(64, 64, 128, 128), p);
  h = splat(std::move(h), at_px(64, 64, 128, 128), p);
  const auto one = oracle::splat_field(128, 128, {{64, 64}}, 8);
  for (std::size_t i = 0; i < h.size(); ++i) {
    EXPECT_NEAR(h.values[i], std::min(1.0, 2 * one[i]), 1e-9);
    if (one[i] >= 0.5) {
      EXPECT_EQ(h.values[i], 1.0);
    }
  }
}

TEST(Splat, TwoCentresMatchDirectEvaluation) {
  const auto p = sigma(8);
  Heatmap h = splat(Heatmap(128, 128), at_px(32, 64, 128, 128), p);
  h = splat(std::move(h), at_px(96, 64, 128, 128), p);
  EXPECT_LE(max_abs_diff(h.values, oracle::splat_field(128, 128, {{32, 64}, {96, 64}}, 8)), 1e-6);
}

TEST(Splat, CommutesExactly) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  const auto p = sigma(10);
  for (int trial = 0; trial < 20; ++trial) {
    Fixation a, b, c;
    a.cx = u(rng), a.cy = u(rng), b.cx = u(rng), b.cy = u(rng), c.cx = u(rng), c.cy = u(rng);
    const Heatmap base = splat(Heatmap(64, 48), c, p);
    EXPECT_EQ(splat(splat(base, a, p), b, p), splat(splat(base, b, p), a, p));
  }
}

TEST(Splat, NeverDecreasesAndStaysInRange) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  Heatmap h(64, 64);
  for (int k = 0; k < 30; ++k) {
    Fixation f;
    f.cx = u(rng), f.cy = u(rng);
    const Heatmap next = splat(h, f, sigma(6));
    for (std::size_t i = 0; i < h.size(); ++i) {
      EXPECT_GE(next.values[i], h.values[i]);
      EXPECT_LE(next.values[i], 1.0);
    }
    h = decay(next, 100, {});
  }
}

TEST(Decay, Examples) {
  MaskParams p;
  Heatmap h(4, 4);
  std::fill(h.values.begin(), h.values.end(), 1.0);
  EXPECT_EQ(decay(h, 0, p), h);
  EXPECT_NEAR(decay(h, 1000, p).values[0], std::exp(-0.8), 1e-12);
  EXPECT_NEAR(decay(h, 1000, p).values[0], 0.4493, 1e-4);
  EXPECT_THROW(decay(h, -1, p), std::invalid_argument);
}

TEST(Decay, SemigroupAndNonIncreasing) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0, 1);
  Heatmap h(32, 32);
  for (double& v : h.values) v = u(rng);
  const Heatmap twice = decay(decay(h, 500, {}), 500, {});
  const Heatmap once = decay(h, 1000, {});
  EXPECT_LE(max_abs_diff(twice.values, once.values), 1e-9);
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_LE(once.values[i], h.values[i]);
}

TEST(Mask, EmptyAndFull) {
  MaskParams p;
  EXPECT_EQ(extract_mask(Heatmap(64, 64), p).support_count(), 0u);
  Heatmap full(64, 64);
  std::fill(full.values.begin(), full.values.end(), 1.0);
  const auto m = extract_mask(full, p);
  for (double a : m.alpha) ASSERT_EQ(a, 1.0);
  EXPECT_EQ(area_fraction(m), 1.0);
}

TEST(Mask, HardDiskFromSingleSplat) {
  MaskParams p;
  p.sigma_px = 8;
  p.dilation_px = 0;
  p.feather_sigma_px = 0;
  const Heatmap h = splat(Heatmap(128, 128), at_px(64, 64, 128, 128), p);
  const auto m = extract_mask(h, p);
  const double radius = 8 * std::sqrt(2 * std::log(2.0));
  EXPECT_NEAR(radius, 9.42, 0.01);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      const double d2 = (x - 64.0) * (x - 64.0) + (y - 64.0) * (y - 64.0);
      const bool inside = std::exp(-d2 / 128.0) >= 0.5;
      ASSERT_EQ(m.at(x, y) > 0.0, inside) << x << "," << y;
      if (inside) {
        ASSERT_EQ(m.at(x, y), 1.0);
      }
    }
}

TEST(Mask, MatchesOracleOnRandomFields) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 6; ++trial) {
    MaskParams p = MaskParams::scaled_for_width(128);
    p.dilation_px = std::uniform_real_distribution<double>(0, 4)(rng);
    p.feather_sigma_px = trial == 0 ? 0.0 : std::uniform_real_distribution<double>(0.5, 3)(rng);
    p.threshold_tau = std::uniform_real_distribution<double>(0.2, 0.8)(rng);
    Heatmap h(128, 128);
    const int n = 1 + trial;
    for (int k = 0; k < n; ++k) {
      Fixation f;
      f.cx = u(rng), f.cy = u(rng);
      h = splat(std::move(h), f, p);
    }
    const auto m = extract_mask(h, p);
    const auto o = oracle::mask(h, p);
    for (std::size_t i = 0; i < h.size(); ++i) {
      ASSERT_EQ(m.alpha[i] > 0.0, static_cast<bool>(o.feathered[i])) << "trial " << trial << " px " << i;
      if (o.pinned_one[i]) {
        ASSERT_EQ(m.alpha[i], 1.0);
      } else if (o.feathered[i]) {
        ASSERT_NEAR(m.alpha[i], std::min(1.0, o.blur[i]), 1e-9);
      }
      ASSERT_GE(m.alpha[i], 0.0);
      ASSERT_LE(m.alpha[i], 1.0);
    }
  }
}

TEST(Mask, SupportWithinLocalityBound) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  const MaskParams p = MaskParams::scaled_for_width(256);
  const double bound = p.sigma_px * std::sqrt(2 * std::log(1 / p.threshold_tau)) + p.dilation_px +
                       3 * p.feather_sigma_px;
  for (int trial = 0; trial < 10; ++trial) {
    Fixation f;
    f.cx = u(rng), f.cy = u(rng);
    const auto m = extract_mask(splat(Heatmap(256, 256), f, p), p);
    ASSERT_GT(m.support_count(), 0u);
    for (int y = 0; y < 256; ++y)
      for (int x = 0; x < 256; ++x)
        if (m.at(x, y) > 0.0) {
          ASSERT_LE(std::hypot(x - f.cx * 256, y - f.cy * 256), bound + 1e-9);
        }
  }
}

TEST(Mask, AreaFraction) {
  AttentionMask m(128, 128);
  EXPECT_EQ(area_fraction(m), 0.0);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 64; ++x) m.alpha[y * 128 + x] = 1.0;
  EXPECT_EQ(area_fraction(m), 0.5);
  std::fill(m.alpha.begin(), m.alpha.end(), 1.0);
  EXPECT_EQ(area_fraction(m), 1.0);
}

TEST(Mask, ClipKeepsStrongestPixels) {
  AttentionMask m(10, 10);
  Heatmap h(10, 10);
  for (int i = 0; i < 100; ++i) {
    m.alpha[i] = i < 50 ? 1.0 : 0.0;
    h.values[i] = i / 100.0;
  }
  const auto clipped = clip_to_area(m, h, 0.2);
  EXPECT_EQ(clipped.support_count(), 20u);
  for (int i = 30; i < 50; ++i) EXPECT_EQ(clipped.alpha[i], 1.0) << i;  // hottest ties win
  EXPECT_EQ(clip_to_area(m, h, 0.9), m);
}

TEST(Mask, Gray8Export) {
  AttentionMask m(2, 2);
  m.alpha = {0.0, 0.5, 1.0, 0.2};
  EXPECT_EQ(m.to_gray8(), (std::vector<std::uint8_t>{0, 128, 255, 51}));
}

TEST(MaskParams, Validation) {
  MaskParams p;
  EXPECT_NO_THROW(p.validate());
  p.threshold_tau = 1.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.sigma_px = 0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.dilation_px = -1;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}
