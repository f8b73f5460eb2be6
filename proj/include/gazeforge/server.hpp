#pragma once

// WebSocket + HTTP gateway: ws://{listen}/session for the viewer, GET /health
// and GET /config for operators.
//
// Threads: one io thread runs every socket operation; one encoder thread turns
// frames into PNG/base64 messages and owns per-connection sequence numbers.
// The engine loop only enqueues.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "gazeforge/codec.hpp"
#include "gazeforge/config.hpp"
#include "gazeforge/runtime.hpp"

namespace gazeforge {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

class Gateway;

namespace detail {

inline std::pair<std::string, unsigned short> split_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw ConfigError("listen must be host:port");
  const std::string host = listen.substr(0, colon);
  const int port = std::stoi(listen.substr(colon + 1));
  if (port < 0 || port > 65535) throw ConfigError("listen port out of range");
  return {host, static_cast<unsigned short>(port)};
}

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, Gateway& gateway, std::uint64_t id)
      : ws_(std::move(socket)), gateway_(gateway), id_(id) {}

  std::uint64_t id() const { return id_; }

  void start(http::request<http::string_body> req);
  void send(std::string text) {
    if (closed_) return;
    queue_.push_back(std::move(text));
    if (queue_.size() == 1) do_write();
  }
  void fail(const std::string& detail) {
    nlohmann::json j{{"type", "error"}, {"detail", detail}};
    close_after_flush_ = true;
    send(j.dump());
  }

 private:
  void do_read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->on_read(ec);
    });
  }
  void on_read(beast::error_code ec);
  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->on_write(ec);
                    });
  }
  void on_write(beast::error_code ec) {
    if (ec) return finish();
    queue_.pop_front();
    if (!queue_.empty()) return do_write();
    if (close_after_flush_) {
      closed_ = true;
      ws_.async_close(websocket::close_code::policy_error,
                      [self = shared_from_this()](beast::error_code) { self->finish(); });
    }
  }
  void handle(const std::string& text);
  void finish();

  websocket::stream<beast::tcp_stream> ws_;
  Gateway& gateway_;
  std::uint64_t id_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool close_after_flush_ = false;
  bool closed_ = false;
  bool hello_ = false;
  bool finished_ = false;
  GazeIngestor ingestor_;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, Gateway& gateway) : stream_(std::move(socket)), gateway_(gateway) {}
  void start() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       self->on_read(ec);
                     });
  }

 private:
  void on_read(beast::error_code ec);

  beast::tcp_stream stream_;
  Gateway& gateway_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<http::response<http::string_body>> res_;
};

}  // namespace detail

class Gateway final : public SessionObserver {
 public:
  using Clock = std::function<std::int64_t()>;

  Gateway(EngineConfig config, GazeInbox& inbox, Clock session_clock, bool stream_frames = true)
      : config_(std::move(config)),
        inbox_(inbox),
        clock_(std::move(session_clock)),
        stream_frames_(stream_frames),
        acceptor_(ioc_) {}

  ~Gateway() override { stop(); }

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  /// Binds and starts serving; returns the bound port.
  unsigned short start() {
    const auto [host, port] = detail::split_listen(config_.listen);
    tcp::endpoint ep(net::ip::make_address(host), port);
    beast::error_code ec;
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw std::runtime_error("cannot listen on " + config_.listen + ": " + ec.message());
    port_ = acceptor_.local_endpoint().port();
    do_accept();
    io_thread_ = std::thread([this] { ioc_.run(); });
    encoder_thread_ = std::thread([this] { encode_loop(); });
    return port_;
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    {
      std::lock_guard lock(mu_);
      encoder_stop_ = true;
    }
    cv_.notify_all();
    if (encoder_thread_.joinable()) encoder_thread_.join();
    net::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      ioc_.stop();
    });
    if (io_thread_.joinable()) io_thread_.join();
  }

  unsigned short port() const { return port_; }

  // SessionObserver (engine thread).
  void on_image(const ImageRef& img) override { enqueue(Out{Out::Image, {}, img, 0}); }
  void on_state(Mode mode, std::size_t level, std::int64_t t_ms) override {
    nlohmann::json j{{"type", "state"},
                     {"mode", to_string(mode)},
                     {"destruction_level", level},
                     {"t", t_ms}};
    enqueue(Out{Out::State, j.dump(), nullptr, 0});
  }
  void on_mask(const AttentionMask& mask) override {
    if (!config_.debug) return;
    GrayImage g{mask.width, mask.height, mask.to_gray8()};
    nlohmann::json j{{"type", "debug_mask"}, {"png_b64", base64_encode(encode_png_gray(g, 1))}};
    enqueue(Out{Out::Text, j.dump(), nullptr, 0});
  }

  /// One displayed frame (engine thread).
  void send_frame(ImageRef frame) { enqueue(Out{Out::Image, {}, std::move(frame), 0}); }

  // io thread ----------------------------------------------------------------
  void on_ws_open(const std::shared_ptr<detail::WsSession>& s) {
    if (auto cur = active_.lock()) {
      s->fail("busy");
      return;
    }
    active_ = s;
  }
  void on_ws_hello(const std::shared_ptr<detail::WsSession>& s) {
    enqueue(Out{Out::Hello, {}, nullptr, s->id()});
  }
  void on_ws_gaze(double x, double y, bool valid) { inbox_.push(x, y, valid, clock_()); }
  void on_ws_closed(const detail::WsSession& s) {
    if (auto cur = active_.lock(); !cur || cur.get() == &s) active_.reset();
    enqueue(Out{Out::Closed, {}, nullptr, s.id()});
  }
  std::uint64_t next_conn_id() { return ++conn_ids_; }

  http::response<http::string_body> handle_http(const http::request<http::string_body>& req) {
    http::response<http::string_body> res;
    res.version(req.version());
    res.keep_alive(false);
    res.set(http::field::server, "gazeforge");
    if (req.method() == http::verb::get && req.target() == "/health") {
      res.result(http::status::ok);
      res.set(http::field::content_type, "text/plain");
      res.body() = "ok";
    } else if (req.method() == http::verb::get && req.target() == "/config") {
      res.result(http::status::ok);
      res.set(http::field::content_type, "application/json");
      res.body() = config_to_json(config_, !config_.debug).dump();
    } else {
      res.result(http::status::not_found);
      res.set(http::field::content_type, "text/plain");
      res.body() = "not found";
    }
    res.prepare_payload();
    return res;
  }

  net::io_context& io() { return ioc_; }

 private:
  struct Out {
    enum Kind { Image, State, Text, Hello, Closed } kind;
    std::string text;
    ImageRef image;
    std::uint64_t conn = 0;
  };

  void do_accept() {
    acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<detail::HttpSession>(std::move(socket), *this)->start();
      do_accept();
    });
  }

  void enqueue(Out out) {
    {
      std::lock_guard lock(mu_);
      if (out.kind == Out::Image) {
        // Unsent frames are superseded by newer ones; seq numbers are only
        // assigned at send time, so dropping keeps them gapless.
        std::size_t frames = 0;
        for (const auto& o : outbox_) frames += o.kind == Out::Image;
        if (frames >= 2)
          for (auto it = outbox_.begin(); it != outbox_.end(); ++it)
            if (it->kind == Out::Image) {
              latest_pending_ = it->image;
              outbox_.erase(it);
              break;
            }
      }
      outbox_.push_back(std::move(out));
    }
    cv_.notify_all();
  }

  void deliver(std::uint64_t conn, std::string text) {
    net::post(ioc_, [this, conn, text = std::move(text)]() mutable {
      if (auto s = active_.lock(); s && s->id() == conn) s->send(std::move(text));
    });
  }

  std::string frame_message(const ImageRef& img) {
    nlohmann::json j{{"type", "frame"},
                     {"seq", seq_++},
                     {"png_b64", base64_encode(encode_png(*img, 1))}};
    return j.dump();
  }

  void encode_loop() {
    for (;;) {
      Out out;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return encoder_stop_ || !outbox_.empty(); });
        if (encoder_stop_) return;
        out = std::move(outbox_.front());
        outbox_.pop_front();
        if (latest_pending_) {
          displayed_ = latest_pending_;
          latest_pending_.reset();
        }
      }
      switch (out.kind) {
        case Out::Image:
          displayed_ = out.image;
          if (target_ && stream_frames_) deliver(*target_, frame_message(out.image));
          break;
        case Out::State:
          last_state_ = out.text;
          if (target_) deliver(*target_, out.text);
          break;
        case Out::Text:
          if (target_) deliver(*target_, out.text);
          break;
        case Out::Hello:
          target_ = out.conn;
          seq_ = 0;
          if (!last_state_.empty()) deliver(out.conn, last_state_);
          if (displayed_ && stream_frames_) deliver(out.conn, frame_message(displayed_));
          break;
        case Out::Closed:
          if (target_ == out.conn) target_.reset();
          break;
      }
    }
  }

  EngineConfig config_;
  GazeInbox& inbox_;
  Clock clock_;
  bool stream_frames_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  unsigned short port_ = 0;
  std::thread io_thread_;
  std::thread encoder_thread_;
  std::atomic<bool> stopped_{false};

  // io thread only
  std::weak_ptr<detail::WsSession> active_;
  std::uint64_t conn_ids_ = 0;

  // guarded by mu_
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Out> outbox_;
  ImageRef latest_pending_;
  bool encoder_stop_ = false;

  // encoder thread only
  std::optional<std::uint64_t> target_;
  std::uint64_t seq_ = 0;
  ImageRef displayed_;
  std::string last_state_;
};

namespace detail {

inline void HttpSession::on_read(beast::error_code ec) {
  if (ec) return;
  if (websocket::is_upgrade(req_)) {
    if (req_.target() != "/session") {
      res_ = std::make_shared<http::response<http::string_body>>(gateway_.handle_http(req_));
    } else {
      stream_.expires_never();
      auto ws = std::make_shared<WsSession>(stream_.release_socket(), gateway_,
                                            gateway_.next_conn_id());
      ws->start(std::move(req_));
      return;
    }
  } else {
    res_ = std::make_shared<http::response<http::string_body>>(gateway_.handle_http(req_));
  }
  http::async_write(stream_, *res_, [self = shared_from_this()](beast::error_code, std::size_t) {
    beast::error_code ignored;
    self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
  });
}

inline void WsSession::start(http::request<http::string_body> req) {
  ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_.read_message_max(1 << 20);
  auto self = shared_from_this();
  auto hold = std::make_shared<http::request<http::string_body>>(std::move(req));
  ws_.async_accept(*hold, [self, hold](beast::error_code ec) {
    if (ec) return;
    self->gateway_.on_ws_open(self);
    self->do_read();
  });
}

inline void WsSession::on_read(beast::error_code ec) {
  if (ec) return finish();
  const std::string text = beast::buffers_to_string(buffer_.data());
  buffer_.consume(buffer_.size());
  if (closed_ || close_after_flush_) return;
  handle(text);
  if (!close_after_flush_) do_read();
}

inline void WsSession::handle(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("type") || !j["type"].is_string())
    return fail("malformed message");
  const std::string type = j["type"].get<std::string>();
  try {
    if (type == "hello") {
      if (!j.at("w").is_number() || !j.at("h").is_number() || j["w"].get<double>() <= 0 ||
          j["h"].get<double>() <= 0)
        return fail("hello: w and h must be positive numbers");
      hello_ = true;
      gateway_.on_ws_hello(shared_from_this());
    } else if (type == "gaze") {
      if (!hello_) return fail("gaze before hello");
      const auto t = j.at("t").get<std::int64_t>();
      const bool valid = j.contains("valid") ? j.at("valid").get<bool>() : true;
      const double x = j.contains("x") && j["x"].is_number() ? j["x"].get<double>() : NAN;
      const double y = j.contains("y") && j["y"].is_number() ? j["y"].get<double>() : NAN;
      try {
        const GazeSample s = ingestor_.ingest(x, y, t, valid, 1.0, 1.0);
        gateway_.on_ws_gaze(s.x, s.y, s.valid);
      } catch (const StaleSampleError&) {
        // Out-of-order client samples are dropped.
      }
    } else {
      fail("unknown message type '" + type + "'");
    }
  } catch (const nlohmann::json::exception&) {
    fail("malformed " + type + " message");
  }
}

inline void WsSession::finish() {
  if (finished_) return;
  finished_ = true;
  closed_ = true;
  gateway_.on_ws_closed(*this);
}

}  // namespace detail

}  // namespace gazeforge
