#pragma once

// Prioritized job queue over a tile-locked canvas, telemetry, and a
// deterministic virtual-clock simulator for scheduling properties.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "inkweave/error.hpp"
#include "inkweave/pipeline.hpp"
#include "inkweave/raster.hpp"

namespace inkweave {

struct TileIndex {
  int col = 0;
  int row = 0;
  friend auto operator<=>(const TileIndex&, const TileIndex&) = default;
};

struct Tile {
  TileIndex index;
  IRect rect;
};

/// ceil(w/t) x ceil(h/t) tiles in row-major order; edge tiles truncated.
inline std::vector<Tile> partition(int width, int height, int tile_size) {
  if (tile_size < 1) throw Error(ErrorCode::InvalidArgument, "tile size must be >= 1");
  std::vector<Tile> tiles;
  for (int r = 0; r * tile_size < height; ++r) {
    for (int c = 0; c * tile_size < width; ++c) {
      const int x = c * tile_size, y = r * tile_size;
      tiles.push_back({{c, r}, {x, y, std::min(tile_size, width - x), std::min(tile_size, height - y)}});
    }
  }
  return tiles;
}

/// Tiles a canvas rectangle touches.
inline std::vector<TileIndex> tiles_for(const IRect& region, int tile_size) {
  std::vector<TileIndex> out;
  if (region.empty()) return out;
  for (int r = region.y / tile_size; r <= (region.bottom() - 1) / tile_size; ++r)
    for (int c = region.x / tile_size; c <= (region.right() - 1) / tile_size; ++c) out.push_back({c, r});
  return out;
}

enum class Priority { interactive = 0, background = 1 };
enum class JobState { queued, running, done, failed };
enum class Outcome { done, failed };

constexpr std::string_view to_string(Priority p) { return p == Priority::interactive ? "interactive" : "background"; }

struct Job {
  std::uint64_t job_id = 0;
  BlobId blob_id = 0;
  Priority priority = Priority::interactive;
  std::vector<TileIndex> tiles;
  double enqueued_at = 0.0;
  JobState state = JobState::queued;
  int attempt = 1;
  double dispatched_at = 0.0;
  IRect region;
};

// ---------------------------------------------------------------------------
// Telemetry

/// Nearest-rank percentiles over all recorded samples.
class Histogram {
 public:
  void record(double v) {
    samples_.push_back(v);
    sorted_ = false;
  }
  std::size_t count() const { return samples_.size(); }
  double percentile(double p) const {
    if (samples_.empty()) return 0.0;
    sort();
    const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(samples_.size())));
    return samples_[std::clamp<std::size_t>(rank, 1, samples_.size()) - 1];
  }
  double mean() const {
    if (samples_.empty()) return 0.0;
    double s = 0;
    for (double v : samples_) s += v;
    return s / static_cast<double>(samples_.size());
  }

 private:
  void sort() const {
    if (!sorted_) {
      std::sort(samples_.begin(), samples_.end());
      sorted_ = true;
    }
  }
  mutable std::vector<double> samples_;
  mutable bool sorted_ = true;
};

struct HistogramReport {
  std::size_t count = 0;
  double p50 = 0, p95 = 0, p99 = 0, mean = 0;
};

struct TelemetryReport {
  std::size_t queue_depth = 0;
  std::size_t workers_busy = 0;
  std::size_t workers_total = 0;
  std::uint64_t jobs_enqueued = 0;
  std::uint64_t jobs_dispatched = 0;
  std::uint64_t jobs_done = 0;
  std::uint64_t jobs_failed = 0;
  std::uint64_t jobs_retried = 0;
  std::map<std::string, HistogramReport> latency_ms;  // 7 stages + queue_wait + end_to_end
};

inline void to_json(nlohmann::json& j, const HistogramReport& h) {
  j = {{"count", h.count}, {"p50", h.p50}, {"p95", h.p95}, {"p99", h.p99}, {"mean", h.mean}};
}

inline void to_json(nlohmann::json& j, const TelemetryReport& r) {
  j = {{"queue_depth", r.queue_depth},
       {"workers_busy", r.workers_busy},
       {"workers_total", r.workers_total},
       // No GPUs here: busy/total workers stands in for utilization.
       {"worker_utilization", r.workers_total ? double(r.workers_busy) / double(r.workers_total) : 0.0},
       {"jobs_enqueued", r.jobs_enqueued},
       {"jobs_dispatched", r.jobs_dispatched},
       {"jobs_done", r.jobs_done},
       {"jobs_failed", r.jobs_failed},
       {"jobs_retried", r.jobs_retried},
       {"latency_ms", r.latency_ms}};
}

class Telemetry {
 public:
  static constexpr std::string_view kQueueWait = "queue_wait";
  static constexpr std::string_view kEndToEnd = "end_to_end";

  void record_stages(const StageLatencies& ms) {
    std::lock_guard lock(m_);
    for (std::size_t i = 0; i < kPipelineStageCount; ++i) hist_[std::string(kPipelineStageNames[i])].record(ms[i]);
  }
  void record(std::string_view name, double ms) {
    std::lock_guard lock(m_);
    hist_[std::string(name)].record(ms);
  }

  TelemetryReport snapshot(std::size_t queue_depth, std::size_t busy, std::size_t total) const {
    std::lock_guard lock(m_);
    TelemetryReport r;
    r.queue_depth = queue_depth;
    r.workers_busy = busy;
    r.workers_total = total;
    r.jobs_enqueued = enqueued;
    r.jobs_dispatched = dispatched;
    r.jobs_done = done;
    r.jobs_failed = failed;
    r.jobs_retried = retried;
    for (const auto& name : names()) {
      auto it = hist_.find(name);
      HistogramReport h;
      if (it != hist_.end()) h = {it->second.count(), it->second.percentile(50), it->second.percentile(95),
                                  it->second.percentile(99), it->second.mean()};
      r.latency_ms[name] = h;
    }
    return r;
  }

  static std::vector<std::string> names() {
    std::vector<std::string> out(kPipelineStageNames.begin(), kPipelineStageNames.end());
    out.emplace_back(kQueueWait);
    out.emplace_back(kEndToEnd);
    return out;
  }

  std::uint64_t enqueued = 0, dispatched = 0, done = 0, failed = 0, retried = 0;  // guarded by the scheduler

 private:
  mutable std::mutex m_;
  std::map<std::string, Histogram> hist_;
};

// ---------------------------------------------------------------------------
// Scheduler

struct SchedulerConfig {
  std::size_t capacity = 1024;
  int max_retries = 1;
  std::size_t workers = 4;
};

struct CompleteResult {
  bool requeued = false;
  bool failed_for_good = false;
};

/// Queue + tile-lock table. All transitions happen under one mutex.
class Scheduler {
 public:
  explicit Scheduler(SchedulerConfig cfg = {}) : cfg_(cfg) {}

  const SchedulerConfig& config() const { return cfg_; }

  struct Enqueued {
    std::uint64_t job_id;
    std::size_t position;  // in dispatch order, 0 = next
  };

  /// job_id 0 asks the scheduler to assign one.
  Enqueued enqueue(Job job) {
    std::lock_guard lock(m_);
    if (job.tiles.empty()) throw Error(ErrorCode::InvalidArgument, "job touches no tiles");
    if (queue_.size() >= cfg_.capacity) throw Error(ErrorCode::QueueFull, "job queue is full");
    if (job.job_id == 0) job.job_id = next_job_id_;
    if (jobs_.count(job.job_id)) throw Error(ErrorCode::InvalidArgument, "duplicate job id");
    next_job_id_ = std::max(next_job_id_, job.job_id + 1);
    job.state = JobState::queued;
    const Key k = key(job);
    const std::uint64_t id = job.job_id;
    jobs_[id] = std::move(job);
    queue_.insert(k);
    ++telemetry_.enqueued;
    return {id, static_cast<std::size_t>(std::distance(queue_.begin(), queue_.find(k)))};
  }

  /// Highest-priority queued job whose tiles are all free; its tiles are
  /// locked before returning. Blocked jobs are skipped, not reordered.
  std::optional<Job> dispatch(double now) {
    std::lock_guard lock(m_);
    for (auto it = queue_.begin(); it != queue_.end(); ++it) {
      Job& job = jobs_.at(std::get<2>(*it));
      const bool free = std::none_of(job.tiles.begin(), job.tiles.end(),
                                     [&](const TileIndex& t) { return locks_.count(t) != 0; });
      if (!free) continue;
      for (const auto& t : job.tiles) locks_[t] = job.job_id;
      queue_.erase(it);
      job.state = JobState::running;
      job.dispatched_at = now;
      ++running_;
      ++telemetry_.dispatched;
      return job;
    }
    return std::nullopt;
  }

  /// Releases the job's tiles. Retryable failures re-enter the queue with
  /// their original priority and timestamp while attempts remain.
  CompleteResult complete(std::uint64_t job_id, Outcome outcome, bool retryable = false,
                          const StageLatencies* stages = nullptr) {
    std::lock_guard lock(m_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end() || it->second.state != JobState::running) {
      throw Error(ErrorCode::InvalidArgument, "job " + std::to_string(job_id) + " is not running");
    }
    Job& job = it->second;
    for (const auto& t : job.tiles) locks_.erase(t);
    --running_;
    CompleteResult res;
    if (outcome == Outcome::done) {
      job.state = JobState::done;
      ++telemetry_.done;
      if (stages) telemetry_.record_stages(*stages);
      telemetry_.record(Telemetry::kQueueWait, job.dispatched_at - job.enqueued_at);
      jobs_.erase(it);
      return res;
    }
    if (retryable && job.attempt <= cfg_.max_retries) {
      ++job.attempt;
      job.state = JobState::queued;
      queue_.insert(key(job));
      ++telemetry_.enqueued;
      ++telemetry_.retried;
      res.requeued = true;
      return res;
    }
    job.state = JobState::failed;
    ++telemetry_.failed;
    jobs_.erase(it);
    res.failed_for_good = true;
    return res;
  }

  void record_end_to_end(double ms) { telemetry_.record(Telemetry::kEndToEnd, ms); }

  TelemetryReport snapshot_telemetry() const {
    std::lock_guard lock(m_);
    return telemetry_.snapshot(queue_.size(), running_, cfg_.workers);
  }

  std::size_t queue_depth() const {
    std::lock_guard lock(m_);
    return queue_.size();
  }
  std::size_t running() const {
    std::lock_guard lock(m_);
    return running_;
  }
  std::optional<std::uint64_t> tile_holder(TileIndex t) const {
    std::lock_guard lock(m_);
    auto it = locks_.find(t);
    if (it == locks_.end()) return std::nullopt;
    return it->second;
  }

 private:
  using Key = std::tuple<int, double, std::uint64_t>;  // priority, enqueued_at, job_id
  static Key key(const Job& j) { return {static_cast<int>(j.priority), j.enqueued_at, j.job_id}; }

  SchedulerConfig cfg_;
  mutable std::mutex m_;
  std::set<Key> queue_;
  std::map<std::uint64_t, Job> jobs_;
  std::map<TileIndex, std::uint64_t> locks_;
  std::size_t running_ = 0;
  std::uint64_t next_job_id_ = 1;
  Telemetry telemetry_;
};

// ---------------------------------------------------------------------------
// Deterministic simulation

struct SimJob {
  Priority priority = Priority::interactive;
  std::vector<TileIndex> tiles;
  double arrival_ms = 0.0;
  double duration_ms = 0.0;
  int failures = 0;  // leading attempts that fail retryably
};

enum class SimEventKind { enqueue, dispatch, complete, fail, requeue };

struct SimEvent {
  double time = 0.0;
  SimEventKind kind = SimEventKind::enqueue;
  std::uint64_t job_id = 0;
  int worker = -1;
};

struct SimResult {
  std::vector<SimEvent> trace;
  std::map<std::uint64_t, double> finished_at;
  std::map<std::uint64_t, double> started_at;  // first dispatch
  TelemetryReport telemetry;
  std::size_t steps = 0;
};

/// Runs scripted jobs on a virtual clock. Job ids are script index + 1. At
/// each instant: completions, then arrivals, then dispatch to idle workers
/// (lowest worker index first) until nothing eligible remains.
inline SimResult simulate(const std::vector<SimJob>& script, std::size_t workers, SchedulerConfig cfg = {},
                          std::size_t max_steps = 1'000'000) {
  cfg.workers = workers;
  Scheduler sched(cfg);
  SimResult res;
  std::vector<int> attempts(script.size(), 0);
  // Per worker: (finish time, job) while busy.
  std::vector<std::optional<std::pair<double, std::uint64_t>>> busy(workers);
  std::vector<std::size_t> arrivals(script.size());
  std::iota(arrivals.begin(), arrivals.end(), std::size_t{0});
  std::stable_sort(arrivals.begin(), arrivals.end(),
                   [&](std::size_t a, std::size_t b) { return script[a].arrival_ms < script[b].arrival_ms; });
  std::size_t next_arrival = 0;
  double now = 0.0;

  while (res.steps++ < max_steps) {
    // Next instant.
    double t = std::numeric_limits<double>::infinity();
    if (next_arrival < arrivals.size()) t = script[arrivals[next_arrival]].arrival_ms;
    for (const auto& b : busy)
      if (b) t = std::min(t, b->first);
    if (!std::isfinite(t)) break;
    now = t;

    for (std::size_t w = 0; w < workers; ++w) {
      if (!busy[w] || busy[w]->first != now) continue;
      const std::uint64_t id = busy[w]->second;
      busy[w].reset();
      const std::size_t idx = id - 1;
      const bool fails = attempts[idx] <= script[idx].failures;
      if (fails) {
        const auto r = sched.complete(id, Outcome::failed, true);
        res.trace.push_back({now, r.requeued ? SimEventKind::requeue : SimEventKind::fail, id, int(w)});
        if (!r.requeued) res.finished_at[id] = now;
      } else {
        StageLatencies st{};
        st[std::size_t(PipelineStage::coarse)] = script[idx].duration_ms;
        sched.complete(id, Outcome::done, false, &st);
        res.trace.push_back({now, SimEventKind::complete, id, int(w)});
        res.finished_at[id] = now;
      }
    }
    while (next_arrival < arrivals.size() && script[arrivals[next_arrival]].arrival_ms == now) {
      const std::size_t idx = arrivals[next_arrival++];
      Job j;
      j.job_id = idx + 1;
      j.blob_id = idx + 1;
      j.priority = script[idx].priority;
      j.tiles = script[idx].tiles;
      j.enqueued_at = now;
      sched.enqueue(std::move(j));
      res.trace.push_back({now, SimEventKind::enqueue, idx + 1, -1});
    }
    for (std::size_t w = 0; w < workers; ++w) {
      if (busy[w]) continue;
      auto job = sched.dispatch(now);
      if (!job) break;
      const std::size_t idx = job->job_id - 1;
      ++attempts[idx];
      res.started_at.emplace(job->job_id, now);
      busy[w] = std::pair{now + script[idx].duration_ms, job->job_id};
      res.trace.push_back({now, SimEventKind::dispatch, job->job_id, int(w)});
    }
  }
  res.telemetry = sched.snapshot_telemetry();
  return res;
}

}  // namespace inkweave
