#pragma once

// Gaze ingestion, smoothing, presence and dispersion-threshold (I-DT)
// fixation detection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gazeforge {

struct GazeSample {
  std::int64_t t_ms = 0;
  double x = 0.0;
  double y = 0.0;
  bool valid = false;

  friend bool operator==(const GazeSample&, const GazeSample&) = default;
};

struct Fixation {
  double cx = 0.0;
  double cy = 0.0;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::size_t n = 0;

  std::int64_t duration_ms() const { return end_ms - start_ms; }

  friend bool operator==(const Fixation&, const Fixation&) = default;
};

struct FixationParams {
  double dispersion_threshold = 0.05;
  std::int64_t min_duration_ms = 150;
  std::size_t smoothing_window = 3;

  void validate() const {
    if (!(dispersion_threshold > 0.0))
      throw std::invalid_argument("fixation: dispersion_threshold must be > 0");
    if (min_duration_ms <= 0)
      throw std::invalid_argument("fixation: min_duration_ms must be > 0");
    if (smoothing_window < 1)
      throw std::invalid_argument("fixation: smoothing_window must be >= 1");
  }
};

/// Raised for a sample whose timestamp does not advance the stream. The
/// sample is dropped; the stream stays usable.
class StaleSampleError : public std::runtime_error {
 public:
  StaleSampleError(std::int64_t t_ms, std::int64_t last_ms)
      : std::runtime_error("stale sample: t=" + std::to_string(t_ms) +
                           " <= last accepted t=" + std::to_string(last_ms)),
        t_ms_(t_ms),
        last_ms_(last_ms) {}

  std::int64_t t_ms() const { return t_ms_; }
  std::int64_t last_ms() const { return last_ms_; }

 private:
  std::int64_t t_ms_;
  std::int64_t last_ms_;
};

/// Normalizes raw device coordinates into GazeSamples and enforces strictly
/// increasing timestamps.
class GazeIngestor {
 public:
  GazeSample ingest(double raw_x, double raw_y, std::int64_t t_ms, bool valid,
                    double canvas_w, double canvas_h) {
    if (!(canvas_w > 0.0) || !(canvas_h > 0.0))
      throw std::invalid_argument("ingest: canvas dimensions must be positive");
    if (last_t_ms_ && t_ms <= *last_t_ms_) throw StaleSampleError(t_ms, *last_t_ms_);
    last_t_ms_ = t_ms;

    GazeSample s;
    s.t_ms = t_ms;
    if (std::isnan(raw_x) || std::isnan(raw_y)) {
      s.valid = false;
      return s;
    }
    s.valid = valid;
    s.x = std::clamp(raw_x / canvas_w, 0.0, 1.0);
    s.y = std::clamp(raw_y / canvas_h, 0.0, 1.0);
    return s;
  }

  std::optional<std::int64_t> last_t_ms() const { return last_t_ms_; }

 private:
  std::optional<std::int64_t> last_t_ms_;
};

/// Streaming moving-average over the last k valid positions. Invalid samples
/// pass through untouched and do not enter the average.
class GazeSmoother {
 public:
  explicit GazeSmoother(std::size_t k = 3) : k_(std::max<std::size_t>(k, 1)) {}

  GazeSample push(GazeSample s) {
    if (!s.valid) return s;
    recent_.push_back({s.x, s.y});
    if (recent_.size() > k_) recent_.pop_front();
    double sx = 0.0;
    double sy = 0.0;
    for (const auto& p : recent_) {
      sx += p.first;
      sy += p.second;
    }
    const auto n = static_cast<double>(recent_.size());
    s.x = std::clamp(sx / n, 0.0, 1.0);
    s.y = std::clamp(sy / n, 0.0, 1.0);
    return s;
  }

  void reset() { recent_.clear(); }

  friend bool operator==(const GazeSmoother&, const GazeSmoother&) = default;

 private:
  std::size_t k_;
  std::deque<std::pair<double, double>> recent_;
};

inline std::vector<GazeSample> smooth(const std::vector<GazeSample>& samples, std::size_t k) {
  GazeSmoother smoother(k);
  std::vector<GazeSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(smoother.push(s));
  return out;
}

/// True iff some valid sample is at most `presence_window_ms` old at `now_ms`.
template <typename Range>
bool presence(const Range& window, std::int64_t now_ms, std::int64_t presence_window_ms) {
  for (const GazeSample& s : window)
    if (s.valid && now_ms - s.t_ms <= presence_window_ms) return true;
  return false;
}

/// Incremental I-DT. Samples are pushed in time order; a fixation is emitted
/// once its window can no longer grow (dispersion exceeded, invalid sample, or
/// flush). Feeding a whole stream then flushing gives the batch result.
///
/// The window [i..j] is kept together with monotonic min/max deques so both
/// growth and advancing the start are amortized O(1).
class FixationDetector {
 public:
  explicit FixationDetector(FixationParams params = {}) : params_(params) {}

  /// Returns the fixations closed by this sample (zero or more).
  std::vector<Fixation> push(const GazeSample& s) {
    std::vector<Fixation> out;
    if (!s.valid) {
      close_window(out);
      return out;
    }
    append(s);
    while (dispersion() > params_.dispersion_threshold) {
      // The window without the newest sample was maximal for its start.
      const std::size_t last = window_.size() - 1;
      if (span(0, last - 1) >= params_.min_duration_ms) {
        out.push_back(make_fixation(0, last - 1));
        drop_front(last);
      } else {
        drop_front(1);
      }
    }
    return out;
  }

  /// Closes any open window at the current boundary.
  std::vector<Fixation> flush() {
    std::vector<Fixation> out;
    close_window(out);
    return out;
  }

  /// The fixation the open window would yield if it were closed now.
  std::optional<Fixation> open_fixation() const {
    if (window_.size() >= 2 && span(0, window_.size() - 1) >= params_.min_duration_ms)
      return make_fixation(0, window_.size() - 1);
    return std::nullopt;
  }

  void reset() {
    window_.clear();
    min_x_.clear();
    max_x_.clear();
    min_y_.clear();
    max_y_.clear();
    base_ = 0;
  }

  const FixationParams& params() const { return params_; }

  friend bool operator==(const FixationDetector&, const FixationDetector&) = default;

 private:
  // Deques hold absolute indices (base_ + offset) into the sample stream.
  void append(const GazeSample& s) {
    const std::size_t idx = base_ + window_.size();
    window_.push_back(s);
    auto push_mono = [&](std::deque<std::size_t>& dq, auto better) {
      while (!dq.empty() && !better(at(dq.back()), s)) dq.pop_back();
      dq.push_back(idx);
    };
    push_mono(min_x_, [](const GazeSample& a, const GazeSample& b) { return a.x < b.x; });
    push_mono(max_x_, [](const GazeSample& a, const GazeSample& b) { return a.x > b.x; });
    push_mono(min_y_, [](const GazeSample& a, const GazeSample& b) { return a.y < b.y; });
    push_mono(max_y_, [](const GazeSample& a, const GazeSample& b) { return a.y > b.y; });
  }

  void drop_front(std::size_t count) {
    for (std::size_t c = 0; c < count; ++c) {
      window_.pop_front();
      ++base_;
    }
    for (auto* dq : {&min_x_, &max_x_, &min_y_, &max_y_})
      while (!dq->empty() && dq->front() < base_) dq->pop_front();
  }

  const GazeSample& at(std::size_t abs_idx) const { return window_[abs_idx - base_]; }

  double dispersion() const {
    if (window_.empty()) return 0.0;
    return (at(max_x_.front()).x - at(min_x_.front()).x) +
           (at(max_y_.front()).y - at(min_y_.front()).y);
  }

  std::int64_t span(std::size_t first, std::size_t last) const {
    return window_[last].t_ms - window_[first].t_ms;
  }

  Fixation make_fixation(std::size_t first, std::size_t last) const {
    double sx = 0.0;
    double sy = 0.0;
    for (std::size_t i = first; i <= last; ++i) {
      sx += window_[i].x;
      sy += window_[i].y;
    }
    const std::size_t n = last - first + 1;
    Fixation f;
    f.cx = sx / static_cast<double>(n);
    f.cy = sy / static_cast<double>(n);
    f.start_ms = window_[first].t_ms;
    f.end_ms = window_[last].t_ms;
    f.n = n;
    return f;
  }

  // Emits the maximal windows still pending; the first one that qualifies wins
  // and everything before it is discarded.
  void close_window(std::vector<Fixation>& out) {
    while (!window_.empty()) {
      const std::size_t last = window_.size() - 1;
      if (last >= 1 && span(0, last) >= params_.min_duration_ms) {
        out.push_back(make_fixation(0, last));
        break;
      }
      drop_front(1);
    }
    reset();
  }

  FixationParams params_;
  std::deque<GazeSample> window_;
  std::deque<std::size_t> min_x_, max_x_, min_y_, max_y_;
  std::size_t base_ = 0;
};

inline std::vector<Fixation> detect_fixations(const std::vector<GazeSample>& samples,
                                              const FixationParams& params) {
  FixationDetector detector(params);
  std::vector<Fixation> out;
  for (const auto& s : samples) {
    auto closed = detector.push(s);
    out.insert(out.end(), closed.begin(), closed.end());
  }
  auto tail = detector.flush();
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

}  // namespace gazeforge
