#pragma once

// JSONL session log: one {"t_ms","kind","payload"} object per line.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazeforge/gaze.hpp"

namespace gazeforge {

struct LogRecord {
  std::int64_t t_ms = 0;
  std::string kind;
  nlohmann::ordered_json payload = nlohmann::ordered_json::object();
};

inline std::string to_line(const LogRecord& r) {
  nlohmann::ordered_json j;
  j["t_ms"] = r.t_ms;
  j["kind"] = r.kind;
  j["payload"] = r.payload;
  return j.dump();
}

class TraceError : public std::runtime_error {
 public:
  TraceError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Sink for log records. The file-backed writer serializes all writes on one
/// background thread.
class LogSink {
 public:
  virtual ~LogSink() = default;
  virtual void write(LogRecord record) = 0;
  virtual void flush() {}
};

class MemoryLog final : public LogSink {
 public:
  void write(LogRecord record) override { records.push_back(std::move(record)); }
  std::vector<LogRecord> records;
};

class FileLogWriter final : public LogSink {
 public:
  explicit FileLogWriter(const std::string& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open log file " + path);
    worker_ = std::thread([this] { run(); });
  }

  ~FileLogWriter() override {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    worker_.join();
  }

  FileLogWriter(const FileLogWriter&) = delete;
  FileLogWriter& operator=(const FileLogWriter&) = delete;

  void write(LogRecord record) override {
    {
      std::lock_guard lock(mu_);
      queue_.push_back(to_line(record));
    }
    cv_.notify_all();
  }

  /// Blocks until everything queued so far is on disk.
  void flush() override {
    std::unique_lock lock(mu_);
    const std::uint64_t target = enqueued_total();
    flushed_cv_.wait(lock, [&] { return written_ >= target; });
  }

 private:
  std::uint64_t enqueued_total() const { return written_ + queue_.size() + in_flight_; }

  void run() {
    std::unique_lock lock(mu_);
    for (;;) {
      cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty() && stopping_) break;
      std::deque<std::string> batch;
      batch.swap(queue_);
      in_flight_ = batch.size();
      lock.unlock();
      for (const auto& line : batch) out_ << line << '\n';
      out_.flush();
      lock.lock();
      written_ += in_flight_;
      in_flight_ = 0;
      flushed_cv_.notify_all();
    }
  }

  std::ofstream out_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable flushed_cv_;
  std::deque<std::string> queue_;
  std::uint64_t written_ = 0;
  std::uint64_t in_flight_ = 0;
  bool stopping_ = false;
  std::thread worker_;
};

/// A parsed trace: the gaze stream plus whatever session metadata it carried.
struct Trace {
  std::vector<GazeSample> samples;
  std::optional<nlohmann::json> config_snapshot;
  std::optional<std::int64_t> session_end_ms;
};

namespace detail {

inline bool read_bool(const nlohmann::json& j, const char* key, bool fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_boolean()) throw std::invalid_argument(std::string(key) + " must be a boolean");
  return it->get<bool>();
}

inline double read_coord(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) throw std::invalid_argument(std::string("missing numeric ") + key);
  return it->get<double>();
}

}  // namespace detail

/// Accepts either a session log ({"t_ms","kind","payload"} records) or a bare
/// gaze stream ({"t","x","y","valid"} per line). Blank lines are skipped.
inline Trace parse_trace(std::istream& in) {
  Trace trace;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw TraceError(line_no, "not a JSON object");
    try {
      if (j.contains("kind")) {
        const auto kind = j.at("kind").get<std::string>();
        const auto t = j.at("t_ms").get<std::int64_t>();
        const auto& payload = j.contains("payload") ? j.at("payload") : nlohmann::json::object();
        if (kind == "gaze") {
          trace.samples.push_back({t, detail::read_coord(payload, "x"),
                                   detail::read_coord(payload, "y"),
                                   detail::read_bool(payload, "valid", true)});
        } else if (kind == "config_snapshot") {
          trace.config_snapshot = payload;
        } else if (kind == "session_end") {
          trace.session_end_ms = t;
        }
      } else {
        const char* tkey = j.contains("t") ? "t" : "t_ms";
        if (!j.contains(tkey)) throw std::invalid_argument("missing t");
        trace.samples.push_back({j.at(tkey).get<std::int64_t>(), detail::read_coord(j, "x"),
                                 detail::read_coord(j, "y"), detail::read_bool(j, "valid", true)});
      }
    } catch (const nlohmann::json::exception& e) {
      throw TraceError(line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw TraceError(line_no, e.what());
    }
  }
  return trace;
}

}  // namespace gazeforge
