#pragma once

// Independent replay checks over a scheduler simulation trace.

#include <map>
#include <random>
#include <set>
#include <vector>

#include "inkweave/scheduler.hpp"

namespace oracle {

struct ScheduleAudit {
  std::size_t same_tile_overlaps = 0;
  std::size_t priority_inversions = 0;
  std::size_t dispatches = 0;
};

inline ScheduleAudit audit_schedule(const std::vector<inkweave::SimJob>& script,
                                    const std::vector<inkweave::SimEvent>& trace) {
  using inkweave::SimEventKind;
  ScheduleAudit a;
  std::map<std::pair<int, int>, std::uint64_t> held;
  std::set<std::uint64_t> queued;
  const auto tiles_of = [&](std::uint64_t id) -> const std::vector<inkweave::TileIndex>& {
    return script[id - 1].tiles;
  };
  const auto all_free = [&](std::uint64_t id) {
    for (const auto& t : tiles_of(id))
      if (held.count({t.col, t.row})) return false;
    return true;
  };
  const auto share = [&](std::uint64_t x, std::uint64_t y) {
    for (const auto& s : tiles_of(x))
      for (const auto& t : tiles_of(y))
        if (s.col == t.col && s.row == t.row) return true;
    return false;
  };
  for (const auto& e : trace) {
    switch (e.kind) {
      case SimEventKind::enqueue:
      case SimEventKind::requeue:
        if (e.kind == SimEventKind::requeue)
          for (const auto& t : tiles_of(e.job_id)) held.erase({t.col, t.row});
        queued.insert(e.job_id);
        break;
      case SimEventKind::dispatch: {
        ++a.dispatches;
        if (script[e.job_id - 1].priority == inkweave::Priority::background) {
          for (auto other : queued) {
            if (other == e.job_id || script[other - 1].priority != inkweave::Priority::interactive) continue;
            if (all_free(other) && share(other, e.job_id)) ++a.priority_inversions;
          }
        }
        for (const auto& t : tiles_of(e.job_id)) {
          if (held.count({t.col, t.row})) ++a.same_tile_overlaps;
          held[{t.col, t.row}] = e.job_id;
        }
        queued.erase(e.job_id);
        break;
      }
      case SimEventKind::complete:
      case SimEventKind::fail:
        for (const auto& t : tiles_of(e.job_id)) held.erase({t.col, t.row});
        break;
    }
  }
  return a;
}

/// Jobs over a cols x rows grid, each covering a 1-2 x 1-2 tile block.
inline std::vector<inkweave::SimJob> random_script(std::mt19937_64& rng, std::size_t n, int cols, int rows,
                                                   double horizon_ms) {
  std::uniform_int_distribution<int> col(0, cols - 1), row(0, rows - 1), extent(1, 2), pct(0, 99);
  std::uniform_real_distribution<double> arrival(0, horizon_ms);
  std::uniform_int_distribution<int> duration(5, 40);
  std::vector<inkweave::SimJob> script;
  for (std::size_t i = 0; i < n; ++i) {
    inkweave::SimJob j;
    const int c0 = col(rng), r0 = row(rng);
    const int c1 = std::min(cols - 1, c0 + extent(rng) - 1), r1 = std::min(rows - 1, r0 + extent(rng) - 1);
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) j.tiles.push_back({c, r});
    j.priority = pct(rng) < 35 ? inkweave::Priority::background : inkweave::Priority::interactive;
    j.arrival_ms = std::floor(arrival(rng));
    j.duration_ms = duration(rng) * 10.0;
    j.failures = pct(rng) < 10 ? 1 : 0;
    script.push_back(std::move(j));
  }
  return script;
}

}  // namespace oracle
