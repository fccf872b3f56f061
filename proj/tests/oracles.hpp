#pragma once

// Test-only reference implementations. Deliberately naive and independent of
// the library code paths they check.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <algorithm>
#include <random>
#include <set>
#include <vector>

#include "inkweave/geometry.hpp"

namespace oracle {

using inkweave::Point;

/// Winding-number containment: 1 inside, 0 on boundary (within eps), -1 outside.
inline int winding_containment(const Point& p, const std::vector<Point>& ring, double eps = 1e-9) {
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % n];
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double wx = p.x - a.x, wy = p.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? (wx * vx + wy * vy) / len2 : 0.0;
    t = t < 0 ? 0 : (t > 1 ? 1 : t);
    const double dx = a.x + t * vx - p.x, dy = a.y + t * vy - p.y;
    if (std::sqrt(dx * dx + dy * dy) <= eps) return 0;
  }
  int winding = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % n];
    const double side = (b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y);
    if (a.y <= p.y) {
      if (b.y > p.y && side > 0) ++winding;
    } else {
      if (b.y <= p.y && side < 0) --winding;
    }
  }
  return winding != 0 ? 1 : -1;
}

inline double shoelace(const std::vector<Point>& ring) {
  double s = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % ring.size()];
    s += (a.x + b.x) * (b.y - a.y);
  }
  return std::abs(s) / 2.0;
}

inline int orient(const Point& a, const Point& b, const Point& c) {
  const double v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  return (v > 0) - (v < 0);
}

inline bool between(const Point& p, const Point& a, const Point& b) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

inline bool closed_segments_meet(const Point& a, const Point& b, const Point& c, const Point& d) {
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0) return true;
  if (o1 == 0 && between(c, a, b)) return true;
  if (o2 == 0 && between(d, a, b)) return true;
  if (o3 == 0 && between(a, c, d)) return true;
  if (o4 == 0 && between(b, c, d)) return true;
  return false;
}

/// O(n^2) check that no two non-adjacent edges meet and no vertex repeats.
inline bool ring_is_simple(const std::vector<Point>& ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (ring[i] == ring[j]) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (closed_segments_meet(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n])) return false;
    }
  }
  return true;
}

inline std::vector<Point> random_points(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Point> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pts.push_back({u(rng), u(rng)});
  return pts;
}

/// Stable 64-bit FNV-1a over bytes.
template <typename Bytes>
std::uint64_t fnv1a(const Bytes& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto b : bytes) {
    h ^= static_cast<std::uint8_t>(b);
    h *= 1099511628211ULL;
  }
  return h;
}

struct Rect {
  double x0, y0, x1, y1;
};

inline bool rects_meet(const Rect& a, const Rect& b) {
  return a.x0 <= b.x1 && b.x0 <= a.x1 && a.y0 <= b.y1 && b.y0 <= a.y1;
}

/// Groups items whose rects overlap, growing each group's rect to the union
/// of its members and repeating until no two group rects overlap. Returns
/// the partition as sorted sets of item indices.
inline std::set<std::set<std::size_t>> overlap_components(const std::vector<Rect>& rects) {
  const std::size_t n = rects.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  const auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (bool changed = true; changed;) {
    changed = false;
    std::vector<Rect> group(n);
    std::vector<bool> seen(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = find(i);
      if (!seen[r]) {
        group[r] = rects[i];
        seen[r] = true;
      } else {
        group[r] = {std::min(group[r].x0, rects[i].x0), std::min(group[r].y0, rects[i].y0),
                    std::max(group[r].x1, rects[i].x1), std::max(group[r].y1, rects[i].y1)};
      }
    }
    for (std::size_t a = 0; a < n && !changed; ++a) {
      if (!seen[a] || find(a) != a) continue;
      for (std::size_t b = a + 1; b < n && !changed; ++b) {
        if (!seen[b] || find(b) != b) continue;
        if (rects_meet(group[a], group[b])) {
          parent[b] = a;
          changed = true;
        }
      }
    }
  }
  std::vector<std::set<std::size_t>> by_root(n);
  for (std::size_t i = 0; i < n; ++i) by_root[find(i)].insert(i);
  std::set<std::set<std::size_t>> out;
  for (auto& s : by_root)
    if (!s.empty()) out.insert(std::move(s));
  return out;
}

/// Short random strokes scattered over a w x h canvas.
inline std::vector<std::vector<Point>> random_strokes(std::mt19937_64& rng, std::size_t count, double w, double h,
                                                      double reach) {
  std::uniform_real_distribution<double> ux(0, w - 1), uy(0, h - 1), step(-reach, reach);
  std::uniform_int_distribution<int> len(1, 6);
  std::vector<std::vector<Point>> out;
  for (std::size_t i = 0; i < count; ++i) {
    Point p{ux(rng), uy(rng)};
    std::vector<Point> s{p};
    for (int k = len(rng); k > 0; --k) {
      p = {std::clamp(p.x + step(rng), 0.0, w - 1), std::clamp(p.y + step(rng), 0.0, h - 1)};
      s.push_back(p);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace oracle
