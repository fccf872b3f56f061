#include "inkweave/server.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "inkweave/base64.hpp"
#include "inkweave/http_adapters.hpp"
#include "inkweave/png_io.hpp"
#include "inkweave/protocol.hpp"
#include "inkweave/scheduler.hpp"

namespace inkweave {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

std::shared_ptr<const std::string> frame(const proto::ServerMessage& m) {
  return std::make_shared<const std::string>(dump(proto::to_json(m)));
}

void log_line(const std::string& what) { std::cerr << "inkweave: " << what << std::endl; }

std::string_view mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".ico") return "image/x-icon";
  if (ext == ".map" || ext == ".txt") return "text/plain";
  return "application/octet-stream";
}

}  // namespace

class WsSession;

struct ServerCore {
  ServerConfig cfg;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  net::steady_timer tick{ioc};
  std::unique_ptr<net::thread_pool> pool;
  std::unique_ptr<Backend> backend;
  std::unique_ptr<Describer> describer;
  Session session;
  Scheduler sched;
  std::set<std::shared_ptr<WsSession>> clients;
  std::uint64_t next_client = 1;
  std::uint64_t next_contact = 1;
  std::deque<BlobId> pending;
  std::size_t running = 0;
  std::ofstream record;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double clock_offset = 0.0;
  double last_telemetry_log = 0.0;
  bool queue_full_reported = false;
  std::thread io_thread;
  std::mutex stop_mu;
  std::condition_variable stop_cv;
  bool stopped = false;
  bool started = false;

  explicit ServerCore(ServerConfig c);

  double now() const {
    return clock_offset + std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }

  void do_accept();
  void schedule_tick();
  void on_tick();
  void pump();
  void launch(const Job& job);
  void finish(std::uint64_t job_id, BlobId blob, double stroke_end, std::optional<PipelineOutput> out,
              std::string png, std::optional<Error> err);
  void enqueue_pending();

  void broadcast(const proto::ServerMessage& m);
  void on_frame(const std::shared_ptr<WsSession>& c, const std::string& text);
  void on_stroke(const std::shared_ptr<WsSession>& c, const proto::StrokeMsg& m);
  void drop(const std::shared_ptr<WsSession>& c);

  http::response<http::string_body> handle_http(const http::request<http::string_body>& req);
  json telemetry_json();
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, ServerCore& srv) : ws_(std::move(socket)), srv_(srv) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.read_message_max(1 << 20);
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->do_read();
    });
  }

  void send(std::shared_ptr<const std::string> msg) {
    if (dead_ || closing_) return;
    if (out_.size() >= srv_.cfg.outbound_limit) {
      log_line("client " + std::to_string(client_id) + " fell " + std::to_string(out_.size()) +
               " messages behind; disconnecting");
      kill();
      return;
    }
    out_.push_back(std::move(msg));
    if (!writing_) do_write();
  }

  /// Sends an error frame, then closes this connection only.
  void fail(const Error& e) {
    if (dead_ || closing_) return;
    send(frame(proto::ErrorMsg{std::string(to_string(e.code())), e.what()}));
    closing_ = true;
    if (!writing_) do_close();
  }

  void kill() {
    if (dead_) return;
    dead_ = true;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
    beast::get_lowest_layer(ws_).socket().close(ec);
    srv_.drop(shared_from_this());
  }

  bool greeted = false;
  std::uint64_t client_id = 0;
  std::string user;
  std::map<std::uint64_t, ContactId> contacts;  // wire id -> session id

 private:
  void do_read() {
    ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->kill();
        return;
      }
      if (self->dead_ || self->closing_) return;
      std::string text = beast::buffers_to_string(self->buf_.data());
      self->buf_.consume(self->buf_.size());
      if (!self->ws_.got_text()) {
        self->fail(Error(ErrorCode::ProtocolError, "binary frames are not accepted"));
        return;
      }
      self->srv_.on_frame(self, text);
      if (!self->dead_ && !self->closing_) self->do_read();
    });
  }

  void do_write() {
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(*out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (self->dead_) return;
      if (ec) {
        self->kill();
        return;
      }
      self->out_.pop_front();
      if (!self->out_.empty()) {
        self->do_write();
        return;
      }
      self->writing_ = false;
      if (self->closing_) self->do_close();
    });
  }

  void do_close() {
    ws_.async_close(websocket::close_code::policy_error, [self = shared_from_this()](beast::error_code) {
      self->kill();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  ServerCore& srv_;
  beast::flat_buffer buf_;
  std::deque<std::shared_ptr<const std::string>> out_;
  bool writing_ = false;
  bool closing_ = false;
  bool dead_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, ServerCore& srv) : stream_(std::move(socket)), srv_(srv) {}

  void run() { do_read(); }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->on_read(ec);
    });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      return;
    }
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/ws") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), srv_)->run(std::move(req_));
        return;
      }
    }
    auto res = std::make_shared<http::response<http::string_body>>(srv_.handle_http(req_));
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec || res->need_eof()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->do_read();
    });
  }

  beast::tcp_stream stream_;
  ServerCore& srv_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
};

ServerCore::ServerCore(ServerConfig c)
    : cfg(std::move(c)), session(cfg.session), sched({cfg.queue_capacity, cfg.max_retries, cfg.workers}) {
  if (!cfg.styles.empty()) cfg.pipeline.styles = load_style_registry(cfg.styles);
  validate_registry(cfg.pipeline.styles);
  if (cfg.backend == "http") {
    if (cfg.backend_url.empty()) throw Error(ErrorCode::InvalidArgument, "--backend http needs --backend-url");
    const auto timeout = std::chrono::milliseconds(std::int64_t(cfg.backend_timeout_ms));
    backend = std::make_unique<HttpBackend>(HttpBackendConfig{cfg.backend_url, timeout, int(cfg.workers)});
  } else {
    backend = std::make_unique<MockBackend>(
        MockBackendConfig{cfg.mock_stage_ms, cfg.mock_stage_ms, cfg.mock_sleep, int(cfg.workers)});
  }
  if (!cfg.describer_url.empty()) {
    describer = std::make_unique<HttpDescriber>(HttpDescriberConfig{
        cfg.describer_url, std::chrono::milliseconds(std::int64_t(cfg.backend_timeout_ms)), int(cfg.workers)});
  } else {
    describer = std::make_unique<HeuristicDescriber>();
  }
  if (!cfg.replay.empty()) {
    std::ifstream in(cfg.replay);
    if (!in) throw Error(ErrorCode::UnreadableInput, "cannot open event log " + cfg.replay);
    replay_events(session, in);
    for (const auto& [id, b] : session.blobs()) {
      clock_offset = std::max({clock_offset, b.last_activity, b.composited_at});
      if (b.state == BlobState::queued || b.state == BlobState::generating) pending.push_back(id);
    }
    log_line("replayed " + cfg.replay + " to revision " + std::to_string(session.revision()));
  }
  if (!cfg.record.empty()) {
    record.open(cfg.record, std::ios::app);
    if (!record) throw Error(ErrorCode::WriteFailure, "cannot open event log " + cfg.record);
    session.set_event_sink([this](const json& j) { record << dump(j) << '\n' << std::flush; });
  }
}

void ServerCore::do_accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec == net::error::operation_aborted) return;
    if (!ec) {
      if (cfg.send_buffer > 0) socket.set_option(net::socket_base::send_buffer_size(cfg.send_buffer), ec);
      std::make_shared<HttpSession>(std::move(socket), *this)->run();
    }
    do_accept();
  });
}

void ServerCore::schedule_tick() {
  tick.expires_after(std::chrono::microseconds(std::int64_t(cfg.tick_ms * 1000.0)));
  tick.async_wait([this](beast::error_code ec) {
    if (ec) return;
    on_tick();
    schedule_tick();
  });
}

void ServerCore::on_tick() {
  const double t = now();
  const auto sealed = session.seal_idle_blobs(t);
  if (!sealed.empty()) {
    broadcast(proto::BlobStateMsg{session.revision(), {sealed.begin(), sealed.end()}, "queued"});
    pending.insert(pending.end(), sealed.begin(), sealed.end());
  }
  enqueue_pending();
  pump();
  const auto expired = session.expire_stale(t);
  if (!expired.empty()) broadcast(proto::BlobStateMsg{session.revision(), {expired.begin(), expired.end()}, "expired"});
  if (cfg.telemetry_log_ms > 0 && t - last_telemetry_log >= cfg.telemetry_log_ms) {
    last_telemetry_log = t;
    log_line("telemetry " + dump(telemetry_json()));
  }
}

void ServerCore::enqueue_pending() {
  while (!pending.empty()) {
    const BlobId id = pending.front();
    const Blob& b = session.blob(id);
    Job j;
    j.blob_id = id;
    j.priority = Priority::interactive;
    j.region = patch_region(b.bbox, cfg.pipeline, cfg.session.width, cfg.session.height);
    j.tiles = tiles_for(j.region, cfg.pipeline.tile_size);
    j.enqueued_at = now();
    try {
      sched.enqueue(std::move(j));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::QueueFull) throw;
      if (!queue_full_reported) broadcast(proto::ErrorMsg{"QueueFull", "generation queue is full; retrying"});
      queue_full_reported = true;
      return;
    }
    queue_full_reported = false;
    pending.pop_front();
  }
}

void ServerCore::pump() {
  while (running < cfg.workers) {
    auto job = sched.dispatch(now());
    if (!job) return;
    launch(*job);
  }
}

void ServerCore::launch(const Job& job) {
  const Blob& b = session.blob(job.blob_id);
  if (b.state == BlobState::queued) {
    session.mark_generating(job.blob_id);
    broadcast(proto::BlobStateMsg{session.revision(), {job.blob_id}, "generating"});
  }
  ++running;
  auto strokes = std::make_shared<std::vector<Polyline>>(b.polylines());
  const auto snap = session.snapshot();
  const BBox bbox = b.bbox;
  const double stroke_end = b.last_activity;
  const std::uint64_t job_id = job.job_id;
  const BlobId blob = job.blob_id;
  net::post(*pool, [this, strokes, snap, bbox, stroke_end, job_id, blob] {
    std::optional<PipelineOutput> out;
    std::optional<Error> err;
    std::string png;
    try {
      PipelineInput in{blob, *strokes, bbox, snap.background.get(), nullptr, snap.revision};
      PipelineConfig pc = cfg.pipeline;
      pc.keep_artifacts = false;
      out = run_pipeline(in, *backend, *describer, pc);
      png = base64_encode(encode_png(out->patch.pixels));
    } catch (const Error& e) {
      err = e;
    } catch (const std::exception& e) {
      err = Error(ErrorCode::BadResponse, e.what());
    }
    net::post(ioc, [this, job_id, blob, stroke_end, out = std::move(out), png = std::move(png), err]() mutable {
      finish(job_id, blob, stroke_end, std::move(out), std::move(png), err);
    });
  });
}

void ServerCore::finish(std::uint64_t job_id, BlobId blob, double stroke_end, std::optional<PipelineOutput> out,
                          std::string png, std::optional<Error> err) {
  --running;
  if (out) {
    try {
      session.apply_patch(out->patch, now());
    } catch (const Error& e) {
      err = e;
      out.reset();
    }
  }
  if (out) {
    const auto& p = out->patch;
    broadcast(proto::ResultPatchMsg{session.revision(), blob, p.region, std::move(png), out->style.style_id,
                                    out->prompt});
    sched.complete(job_id, Outcome::done, false, &out->latency_ms);
    sched.record_end_to_end(now() - stroke_end);
  } else {
    log_line("blob " + std::to_string(blob) + " failed: " + std::string(to_string(err->code())) + " " + err->what());
    const auto r = sched.complete(job_id, Outcome::failed, is_retryable(err->code()));
    if (r.failed_for_good && session.blobs().count(blob) &&
        session.blob(blob).state == BlobState::generating) {
      session.mark_failed(blob);
      broadcast(proto::BlobStateMsg{session.revision(), {blob}, "failed"});
    }
  }
  pump();
}

void ServerCore::broadcast(const proto::ServerMessage& m) {
  const auto f = frame(m);
  // send() may drop a client from the set.
  const std::vector<std::shared_ptr<WsSession>> targets(clients.begin(), clients.end());
  for (const auto& c : targets) c->send(f);
}

void ServerCore::on_frame(const std::shared_ptr<WsSession>& c, const std::string& text) {
  proto::ClientMessage msg;
  try {
    msg = proto::parse_client(text);
  } catch (const Error& e) {
    c->fail(e);
    return;
  }
  if (!c->greeted) {
    const auto* hello = std::get_if<proto::Hello>(&msg);
    if (!hello) {
      c->fail(Error(ErrorCode::ProtocolError, "hello must be the first message"));
      return;
    }
    if (!proto::compatible(hello->protocol)) {
      c->fail(Error(ErrorCode::ProtocolError, "protocol " + hello->protocol + " is not supported; server speaks " +
                                                  proto::kProtocolVersion));
      return;
    }
    c->greeted = true;
    c->client_id = next_client++;
    c->user = hello->user;
    clients.insert(c);
    c->send(frame(proto::Welcome{proto::kProtocolVersion, c->client_id, session.revision(), cfg.session.width,
                                 cfg.session.height, cfg.pipeline.tile_size}));
    return;
  }
  if (std::holds_alternative<proto::Hello>(msg)) {
    c->fail(Error(ErrorCode::ProtocolError, "hello sent twice"));
  } else if (std::holds_alternative<proto::Ping>(msg)) {
    c->send(frame(proto::TelemetryMsg{telemetry_json()}));
  } else {
    on_stroke(c, std::get<proto::StrokeMsg>(msg));
  }
}

void ServerCore::on_stroke(const std::shared_ptr<WsSession>& c, const proto::StrokeMsg& m) {
  StrokeEvent e;
  e.x = m.x;
  e.y = m.y;
  e.t = m.t;
  e.user_id = c->user;
  auto it = c->contacts.find(m.contact_id);
  switch (m.phase) {
    case proto::Phase::begin:
      if (it != c->contacts.end()) {
        c->send(frame(proto::ErrorMsg{"ContactAlreadyActive", "contact " + std::to_string(m.contact_id)}));
        return;
      }
      e.kind = StrokeEventKind::begin;
      e.contact = ContactId{next_contact++};
      break;
    case proto::Phase::point:
    case proto::Phase::end:
      if (it == c->contacts.end()) {
        c->send(frame(proto::ErrorMsg{"UnknownContact", "contact " + std::to_string(m.contact_id)}));
        return;
      }
      e.kind = m.phase == proto::Phase::point ? StrokeEventKind::point : StrokeEventKind::end;
      e.contact = it->second;
      break;
  }
  IngestResult r;
  try {
    r = session.ingest(e, now());
  } catch (const Error& err) {
    c->send(frame(proto::ErrorMsg{std::string(to_string(err.code())), err.what()}));
    return;
  }
  if (m.phase == proto::Phase::begin) c->contacts.emplace(m.contact_id, e.contact);
  if (m.phase == proto::Phase::end) c->contacts.erase(m.contact_id);
  broadcast(proto::StrokeEcho{r.revision, c->client_id, c->user, m.phase, m.contact_id, r.point.x, r.point.y, m.t,
                              r.blob});
}

void ServerCore::drop(const std::shared_ptr<WsSession>& c) {
  if (!clients.erase(c)) return;
  // Close any stroke the client left open so nearby blobs can still seal.
  const auto open = c->contacts;
  for (const auto& [wire, cid] : open) {
    const auto& live = session.live_strokes();
    auto it = live.find(cid);
    if (it == live.end()) continue;
    const auto& pts = it->second.points.points();
    const auto& times = it->second.points.times();
    on_stroke(c, {proto::Phase::end, wire, pts.back().x, pts.back().y, times.empty() ? 0.0 : times.back()});
  }
}

json ServerCore::telemetry_json() {
  json j = sched.snapshot_telemetry();
  j["revision"] = session.revision();
  j["clients"] = clients.size();
  j["blobs"] = session.blobs().size();
  j["backend"] = backend->name();
  return j;
}

http::response<http::string_body> ServerCore::handle_http(const http::request<http::string_body>& req) {
  http::response<http::string_body> res{http::status::ok, req.version()};
  res.set(http::field::server, "inkweave");
  res.keep_alive(req.keep_alive());
  const auto reply = [&](http::status s, std::string_view type, std::string body) {
    res.result(s);
    res.set(http::field::content_type, beast::string_view(type.data(), type.size()));
    res.body() = std::move(body);
    if (req.method() == http::verb::head) res.body().clear();
    return res;
  };
  if (req.method() != http::verb::get && req.method() != http::verb::head) {
    return reply(http::status::method_not_allowed, "text/plain", "GET only\n");
  }
  std::string path(req.target());
  if (auto q = path.find('?'); q != std::string::npos) path.resize(q);
  if (path == "/healthz") return reply(http::status::ok, "text/plain", "ok\n");
  if (path == "/telemetry") return reply(http::status::ok, "application/json", dump(telemetry_json()));
  if (path == "/snapshot") {
    const auto snap = session.snapshot();
    const auto png = encode_png(*snap.background);
    res.set("X-Canvas-Revision", std::to_string(snap.revision));
    return reply(http::status::ok, "image/png", std::string(png.begin(), png.end()));
  }
  if (path == "/ws") return reply(http::status::upgrade_required, "text/plain", "WebSocket upgrade required\n");
  if (path.empty() || path.front() != '/' || path.find("..") != std::string::npos) {
    return reply(http::status::bad_request, "text/plain", "bad path\n");
  }
  if (path.back() == '/') path += "index.html";
  const std::filesystem::path file = std::filesystem::path(cfg.static_dir) / path.substr(1);
  std::ifstream in(file, std::ios::binary);
  if (!in || std::filesystem::is_directory(file)) return reply(http::status::not_found, "text/plain", "not found\n");
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return reply(http::status::ok, mime_type(file), std::move(body));
}

struct Server::Impl : ServerCore {
  using ServerCore::ServerCore;
};

Server::Server(ServerConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}

Server::~Server() { stop(); }

const ServerConfig& Server::config() const { return impl_->cfg; }

unsigned short Server::start() {
  auto& s = *impl_;
  if (s.started) throw Error(ErrorCode::InvalidArgument, "server already started");
  beast::error_code ec;
  const auto addr = net::ip::make_address(s.cfg.host, ec);
  if (ec) throw Error(ErrorCode::BindFailure, "bad host " + s.cfg.host);
  const tcp::endpoint ep{addr, static_cast<unsigned short>(s.cfg.port)};
  s.acceptor.open(ep.protocol(), ec);
  if (!ec) s.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) s.acceptor.bind(ep, ec);
  if (!ec) s.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    throw Error(ErrorCode::BindFailure, "cannot listen on " + s.cfg.host + ":" + std::to_string(s.cfg.port) + ": " +
                                            ec.message());
  }
  s.pool = std::make_unique<net::thread_pool>(s.cfg.workers);
  s.started = true;
  s.do_accept();
  net::post(s.ioc, [&s] {
    s.enqueue_pending();
    s.pump();
  });
  s.schedule_tick();
  s.io_thread = std::thread([&s] { s.ioc.run(); });
  return s.acceptor.local_endpoint().port();
}

void Server::wait() {
  std::unique_lock lk(impl_->stop_mu);
  impl_->stop_cv.wait(lk, [this] { return impl_->stopped; });
}

void Server::stop() {
  auto& s = *impl_;
  {
    std::lock_guard lk(s.stop_mu);
    if (s.stopped) return;
    s.stopped = true;
  }
  s.stop_cv.notify_all();
  if (!s.started) return;
  net::post(s.ioc, [&s] {
    beast::error_code ec;
    s.acceptor.close(ec);
    s.tick.cancel();
    const std::vector<std::shared_ptr<WsSession>> all(s.clients.begin(), s.clients.end());
    for (const auto& c : all) c->kill();
  });
  s.pool->join();
  s.ioc.stop();
  if (s.io_thread.joinable()) s.io_thread.join();
}

}  // namespace inkweave
