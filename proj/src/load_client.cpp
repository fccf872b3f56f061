#include "inkweave/load_client.hpp"

#include <httplib.h>

#include <chrono>
#include <map>
#include <mutex>
#include <thread>

#include "inkweave/loadsim.hpp"
#include "inkweave/ws_client.hpp"

namespace inkweave {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) { return std::chrono::duration<double, std::milli>(Clock::now() - t0).count(); }

struct UserResult {
  std::vector<double> latencies;
  std::size_t blobs = 0;
  std::size_t failed = 0;
  std::string error;
};

void run_user(const WallLoadConfig& cfg, int u, std::vector<std::vector<Point>> strokes, Clock::time_point t0,
              UserResult& out) {
  WsClient ws(cfg.host, cfg.port);
  ws.send(proto::Hello{"load" + std::to_string(u), proto::kProtocolVersion});
  std::uint64_t me = 0;
  std::map<std::uint64_t, double> end_sent;       // contact -> ms
  std::map<std::uint64_t, double> waiting;        // blob -> stroke end ms
  std::size_t open = 0;

  const auto handle = [&](const proto::ServerMessage& m) {
    if (auto* w = std::get_if<proto::Welcome>(&m)) {
      me = w->client_id;
    } else if (auto* e = std::get_if<proto::StrokeEcho>(&m)) {
      if (e->client_id == me && e->phase == proto::Phase::end && e->blob_id) {
        const double sent = end_sent.at(e->contact_id);
        // A stroke merged into a pending blob extends that blob's wait.
        auto [it, fresh] = waiting.try_emplace(*e->blob_id, sent);
        if (!fresh) it->second = std::max(it->second, sent);
        if (fresh) ++out.blobs;
      }
    } else if (auto* p = std::get_if<proto::ResultPatchMsg>(&m)) {
      auto it = waiting.find(p->blob_id);
      if (it != waiting.end()) {
        out.latencies.push_back(ms_since(t0) - it->second);
        waiting.erase(it);
      }
    } else if (auto* b = std::get_if<proto::BlobStateMsg>(&m)) {
      if (b->state == "failed") {
        for (auto id : b->blob_ids) out.failed += waiting.erase(id);
      }
    }
  };
  const auto pump_until = [&](double at_ms) {
    for (;;) {
      const double left = at_ms - ms_since(t0);
      if (left <= 0) return;
      if (auto m = ws.receive(std::chrono::milliseconds(std::int64_t(std::ceil(left))))) handle(*m);
    }
  };

  double last = 0.0;
  for (std::size_t k = 0; k < strokes.size(); ++k) {
    const auto& pts = strokes[k];
    const double start = u * cfg.user_offset_ms + double(k) * (cfg.stroke_ms + cfg.gap_ms);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      pump_until(start + double(i) * cfg.point_every_ms);
      const auto phase = i == 0 ? proto::Phase::begin : proto::Phase::point;
      ws.send(proto::StrokeMsg{phase, k, pts[i].x, pts[i].y, ms_since(t0)});
    }
    pump_until(start + double(pts.size() - 1) * cfg.point_every_ms);
    end_sent[k] = ms_since(t0);
    ws.send(proto::StrokeMsg{proto::Phase::end, k, pts.back().x, pts.back().y, end_sent[k]});
    ++open;
    last = end_sent[k];
  }
  const double deadline = last + cfg.drain_timeout_ms;
  while ((!waiting.empty() || out.blobs < open) && ms_since(t0) < deadline) {
    if (auto m = ws.receive(std::chrono::milliseconds(100))) handle(*m);
  }
  out.failed += waiting.size();
  ws.close();
}

}  // namespace

nlohmann::json run_wall_load(const WallLoadConfig& cfg) {
  int cw = 0, ch = 0;
  {
    WsClient probe(cfg.host, cfg.port);
    probe.send(proto::Hello{"load-probe", proto::kProtocolVersion});
    auto m = probe.receive(std::chrono::seconds(5));
    if (!m || !std::holds_alternative<proto::Welcome>(*m)) throw Error(ErrorCode::ConnectFailure, "no welcome");
    cw = std::get<proto::Welcome>(*m).canvas_w;
    ch = std::get<proto::Welcome>(*m).canvas_h;
    probe.close();
  }
  const int cols = std::max(1, cw / cfg.cell), rows = std::max(1, ch / cfg.cell);
  if (cfg.users > cols * rows) {
    throw Error(ErrorCode::InvalidArgument, "canvas " + std::to_string(cw) + "x" + std::to_string(ch) + " has room for " +
                                                std::to_string(cols * rows) + " users");
  }
  std::mt19937_64 rng(cfg.seed);
  const int samples = std::max(2, int(cfg.stroke_ms / cfg.point_every_ms) + 1);
  std::vector<std::vector<std::vector<Point>>> scripts(std::size_t(cfg.users));
  for (int u = 0; u < cfg.users; ++u) {
    const IRect cell{(u % cols) * cfg.cell, (u / cols) * cfg.cell, std::min(cfg.cell, cw), std::min(cfg.cell, ch)};
    for (int k = 0; k < cfg.strokes_per_user; ++k) scripts[std::size_t(u)].push_back(detail::scripted_stroke(rng, cell, samples));
  }

  std::vector<UserResult> results(std::size_t(cfg.users));
  const auto t0 = Clock::now() + std::chrono::milliseconds(100);
  {
    std::vector<std::thread> threads;
    for (int u = 0; u < cfg.users; ++u) {
      threads.emplace_back([&, u] {
        try {
          run_user(cfg, u, scripts[std::size_t(u)], t0, results[std::size_t(u)]);
        } catch (const std::exception& e) {
          results[std::size_t(u)].error = e.what();
        }
      });
    }
    for (auto& t : threads) t.join();
  }

  Histogram e2e;
  std::size_t blobs = 0, failed = 0;
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& r : results) {
    for (double v : r.latencies) e2e.record(v);
    blobs += r.blobs;
    failed += r.failed;
    if (!r.error.empty()) errors.push_back(r.error);
  }
  nlohmann::json j;
  j["mode"] = "wall-clock";
  j["server"] = cfg.host + ":" + std::to_string(cfg.port);
  j["users"] = cfg.users;
  j["strokes_per_user"] = cfg.strokes_per_user;
  j["canvas"] = {cw, ch};
  j["seed"] = cfg.seed;
  j["blobs"] = blobs;
  j["patches"] = e2e.count();
  j["failed_or_missing"] = failed;
  j["end_to_end_ms"] = {
      {"p50", e2e.percentile(50)}, {"p95", e2e.percentile(95)}, {"p99", e2e.percentile(99)}, {"count", e2e.count()}};
  if (!errors.empty()) j["errors"] = errors;
  httplib::Client http(cfg.host, cfg.port);
  if (auto res = http.Get("/telemetry"); res && res->status == 200) {
    auto t = nlohmann::json::parse(res->body, nullptr, false);
    if (!t.is_discarded() && t.contains("latency_ms")) {
      nlohmann::json stages;
      for (const auto& [name, h] : t["latency_ms"].items()) {
        if (name == Telemetry::kEndToEnd) continue;
        stages[name] = {{"p50", h["p50"]}, {"p95", h["p95"]}, {"p99", h["p99"]}};
      }
      j["stages_ms"] = stages;
      j["server_end_to_end_ms"] = t["latency_ms"][std::string(Telemetry::kEndToEnd)];
    }
  }
  return j;
}

}  // namespace inkweave
