#pragma once

// Virtual-clock load harness: synthetic users draw scripted strokes into a
// real Session; sealed blobs become Scheduler jobs run through the real
// pipeline on the mock backend. Time advances only by events, so results
// depend on the script and (in measured mode) on how long the pipeline
// actually computes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "inkweave/pipeline.hpp"
#include "inkweave/scheduler.hpp"
#include "inkweave/session.hpp"

namespace inkweave {

enum class LoadTiming {
  measured,  // non-generation stages cost their measured wall time
  fixed,     // every stage costs a scripted amount; output is reproducible
};

struct LoadConfig {
  int users = 8;
  int strokes_per_user = 6;
  std::size_t workers = 4;
  int canvas_w = 2048;
  int canvas_h = 1024;
  int tile_size = 256;
  int cell = 512;               // each user draws inside its own cell
  double stroke_ms = 320.0;     // pen-down duration
  double point_every_ms = 16.0;
  double gap_ms = 3000.0;       // pen-up pause between a user's strokes
  double user_offset_ms = 40.0; // start skew between users
  double stage_ms = 400.0;      // mock coarse and refine each
  double fixed_other_stage_ms = 5.0;
  double tick_ms = 25.0;        // sequencer tick: seal + dispatch
  LoadTiming timing = LoadTiming::measured;
  std::uint64_t seed = 1;
  SessionConfig session;        // size is overwritten from canvas_w/h
  PipelineConfig pipeline;      // tile_size is overwritten
};

struct LoadReport {
  LoadConfig config;
  std::size_t blobs = 0;
  TelemetryReport telemetry;
  double virtual_duration_ms = 0.0;
};

inline nlohmann::json to_json_report(const LoadReport& r) {
  const auto& c = r.config;
  nlohmann::json j;
  j["mode"] = "virtual-clock";
  j["timing"] = c.timing == LoadTiming::measured ? "measured" : "fixed";
  j["users"] = c.users;
  j["strokes_per_user"] = c.strokes_per_user;
  j["workers"] = c.workers;
  j["canvas"] = {c.canvas_w, c.canvas_h};
  j["tile_size"] = c.tile_size;
  j["backend_stage_ms"] = c.stage_ms;
  j["seal_idle_ms"] = c.session.idle_ms;
  j["denoise"] = c.pipeline.denoise;
  j["seed"] = c.seed;
  j["blobs"] = r.blobs;
  j["jobs_done"] = r.telemetry.jobs_done;
  j["jobs_failed"] = r.telemetry.jobs_failed;
  j["virtual_duration_ms"] = r.virtual_duration_ms;
  const auto& e2e = r.telemetry.latency_ms.at(std::string(Telemetry::kEndToEnd));
  j["end_to_end_ms"] = {{"p50", e2e.p50}, {"p95", e2e.p95}, {"p99", e2e.p99}, {"count", e2e.count}};
  nlohmann::json stages;
  for (const auto& [name, h] : r.telemetry.latency_ms) {
    if (name == Telemetry::kEndToEnd) continue;
    stages[name] = {{"p50", h.p50}, {"p95", h.p95}, {"p99", h.p99}};
  }
  j["stages_ms"] = stages;
  return j;
}

namespace detail {

/// One wobbly loop or zigzag inside the user's cell.
inline std::vector<Point> scripted_stroke(std::mt19937_64& rng, const IRect& cell, int samples) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double cx = cell.x + cell.w * (0.35 + 0.3 * u(rng));
  const double cy = cell.y + cell.h * (0.35 + 0.3 * u(rng));
  const double r = std::min(cell.w, cell.h) * (0.08 + 0.08 * u(rng));
  const bool loop = u(rng) < 0.5;
  std::vector<Point> pts;
  for (int i = 0; i < samples; ++i) {
    const double f = samples > 1 ? double(i) / (samples - 1) : 0.0;
    if (loop) {
      const double a = 2 * std::numbers::pi * f;
      pts.push_back({cx + r * std::cos(a) * (1 + 0.1 * std::sin(5 * a)), cy + r * std::sin(a)});
    } else {
      pts.push_back({cx - r + 2 * r * f, cy + ((i % 2) ? r / 2 : -r / 2)});
    }
  }
  return pts;
}

}  // namespace detail

inline LoadReport run_load(LoadConfig cfg) {
  cfg.session.width = cfg.canvas_w;
  cfg.session.height = cfg.canvas_h;
  cfg.pipeline.tile_size = cfg.tile_size;
  cfg.pipeline.seed = cfg.seed;
  cfg.pipeline.keep_artifacts = false;
  const int cols = std::max(1, cfg.canvas_w / cfg.cell), rows = std::max(1, cfg.canvas_h / cfg.cell);
  if (cfg.users > cols * rows) throw Error(ErrorCode::InvalidArgument, "more users than canvas cells");
  if (cfg.workers < 1) throw Error(ErrorCode::InvalidArgument, "need at least one worker");

  Session session(cfg.session);
  Scheduler sched({1024, 1, cfg.workers});
  MockBackend backend({cfg.stage_ms, cfg.stage_ms, false, int(cfg.workers)});
  HeuristicDescriber describer;

  enum class Kind { complete = 0, stroke = 1, tick = 2 };  // order within one instant
  struct Ev {
    double time;
    Kind kind;
    std::uint64_t seq;
    StrokeEvent stroke;
    std::uint64_t job = 0;
    bool operator>(const Ev& o) const {
      return std::tie(time, kind, seq) > std::tie(o.time, o.kind, o.seq);
    }
  };
  std::priority_queue<Ev, std::vector<Ev>, std::greater<>> events;
  std::uint64_t seq = 0;

  std::mt19937_64 rng(cfg.seed);
  const int samples = std::max(2, int(cfg.stroke_ms / cfg.point_every_ms) + 1);
  double last_input = 0.0;
  for (int u = 0; u < cfg.users; ++u) {
    const IRect cell{(u % cols) * cfg.cell, (u / cols) * cfg.cell, cfg.cell, cfg.cell};
    for (int k = 0; k < cfg.strokes_per_user; ++k) {
      const double t0 = u * cfg.user_offset_ms + k * (cfg.stroke_ms + cfg.gap_ms);
      const auto pts = detail::scripted_stroke(rng, cell, samples);
      const ContactId cid{std::uint64_t(u) << 32 | std::uint64_t(k)};
      for (int i = 0; i < samples; ++i) {
        const double t = t0 + i * cfg.point_every_ms;
        const auto kind = i == 0 ? StrokeEventKind::begin : StrokeEventKind::point;
        events.push({t, Kind::stroke, seq++, {kind, cid, pts[i].x, pts[i].y, t, "user" + std::to_string(u)}});
        last_input = std::max(last_input, t);
      }
      const double te = t0 + (samples - 1) * cfg.point_every_ms;
      events.push({te, Kind::stroke, seq++, {StrokeEventKind::end, cid, pts.back().x, pts.back().y, te, ""}});
    }
  }
  events.push({0.0, Kind::tick, seq++, {}});

  struct Running {
    PipelineOutput out;
    double stroke_end = 0.0;
  };
  std::map<std::uint64_t, Running> running;
  std::map<BlobId, double> last_end;  // latest stroke_end per blob
  std::size_t blobs = 0;
  double now = 0.0;

  const auto dispatch_all = [&] {
    while (running.size() < cfg.workers) {
      auto job = sched.dispatch(now);
      if (!job) break;
      session.mark_generating(job->blob_id);
      const Blob& b = session.blob(job->blob_id);
      const auto strokes = b.polylines();
      const auto snap = session.snapshot();
      PipelineInput in{b.blob_id, strokes, b.bbox, snap.background.get(), nullptr, snap.revision};
      Running r;
      r.out = run_pipeline(in, backend, describer, cfg.pipeline);
      r.stroke_end = last_end.at(b.blob_id);
      if (cfg.timing == LoadTiming::fixed) {
        for (std::size_t i = 0; i < kPipelineStageCount; ++i) r.out.latency_ms[i] = cfg.fixed_other_stage_ms;
        r.out.latency_ms[std::size_t(PipelineStage::coarse)] = cfg.stage_ms;
        r.out.latency_ms[std::size_t(PipelineStage::refine)] = cfg.stage_ms;
      }
      double cost = 0.0;
      for (double ms : r.out.latency_ms) cost += ms;
      events.push({now + cost, Kind::complete, seq++, {}, job->job_id});
      running.emplace(job->job_id, std::move(r));
    }
  };

  while (!events.empty()) {
    Ev ev = events.top();
    events.pop();
    now = ev.time;
    switch (ev.kind) {
      case Kind::stroke: {
        const auto res = session.ingest(ev.stroke, now);
        if (res.blob) {
          for (BlobId gone : res.absorbed) last_end.erase(gone);
          if (!last_end.count(*res.blob)) ++blobs;
          last_end[*res.blob] = now;
        }
        break;
      }
      case Kind::tick: {
        for (BlobId id : session.seal_idle_blobs(now)) {
          const Blob& b = session.blob(id);
          Job j;
          j.blob_id = id;
          j.priority = Priority::interactive;
          j.region = patch_region(b.bbox, cfg.pipeline, cfg.canvas_w, cfg.canvas_h);
          j.tiles = tiles_for(j.region, cfg.tile_size);
          j.enqueued_at = now;
          sched.enqueue(std::move(j));
        }
        dispatch_all();
        const bool pending = now <= last_input || sched.queue_depth() > 0 || !running.empty() ||
                             std::any_of(session.blobs().begin(), session.blobs().end(), [](const auto& kv) {
                               return kv.second.state == BlobState::collecting;
                             });
        if (pending) events.push({now + cfg.tick_ms, Kind::tick, seq++, {}});
        break;
      }
      case Kind::complete: {
        auto it = running.find(ev.job);
        Running r = std::move(it->second);
        running.erase(it);
        session.apply_patch(r.out.patch, now);
        sched.complete(ev.job, Outcome::done, false, &r.out.latency_ms);
        sched.record_end_to_end(now - r.stroke_end);
        dispatch_all();
        break;
      }
    }
  }

  LoadReport rep;
  rep.config = cfg;
  rep.blobs = blobs;
  rep.telemetry = sched.snapshot_telemetry();
  rep.virtual_duration_ms = now;
  return rep;
}

}  // namespace inkweave
