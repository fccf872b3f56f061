#pragma once

// Planar geometry kernels used to turn raw touch strokes into silhouettes.
//
// Coordinates are canvas pixels. Orientation predicates use the usual
// mathematical convention (positive signed area = counter-clockwise); on a
// y-down canvas this appears clockwise on screen, which is irrelevant to
// every predicate here.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "inkweave/error.hpp"

namespace inkweave {

/// Persistent identifier of one touch contact.
enum class ContactId : std::uint64_t {};

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline bool is_finite(const Point& p) { return std::isfinite(p.x) && std::isfinite(p.y); }

inline double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

inline double squared_distance(const Point& a, const Point& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

/// Euclidean distance from p to the closed segment [a, b].
inline double distance_to_segment(const Point& p, const Point& a, const Point& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  return distance(p, Point{a.x + t * dx, a.y + t * dy});
}

/// Axis-aligned box in real canvas coordinates. Empty when min > max.
struct BBox {
  double min_x = std::numeric_limits<double>::infinity();
  double min_y = std::numeric_limits<double>::infinity();
  double max_x = -std::numeric_limits<double>::infinity();
  double max_y = -std::numeric_limits<double>::infinity();

  bool empty() const { return min_x > max_x || min_y > max_y; }
  double width() const { return empty() ? 0.0 : max_x - min_x; }
  double height() const { return empty() ? 0.0 : max_y - min_y; }

  void extend(const Point& p) {
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  void extend(const BBox& o) {
    if (o.empty()) return;
    min_x = std::min(min_x, o.min_x);
    min_y = std::min(min_y, o.min_y);
    max_x = std::max(max_x, o.max_x);
    max_y = std::max(max_y, o.max_y);
  }
  BBox expanded(double margin) const {
    if (empty()) return *this;
    return {min_x - margin, min_y - margin, max_x + margin, max_y + margin};
  }
  /// Closed-interval overlap: boxes that touch along an edge intersect.
  bool intersects(const BBox& o) const {
    if (empty() || o.empty()) return false;
    return min_x <= o.max_x && o.min_x <= max_x && min_y <= o.max_y && o.min_y <= max_y;
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// A touch trace: ordered points plus the contact that produced them.
/// Optional per-point timestamps (ms) travel with the points.
class Polyline {
 public:
  Polyline() = default;

  explicit Polyline(std::vector<Point> points, ContactId contact = ContactId{0},
                    std::vector<double> times = {})
      : contact_id_(contact) {
    if (!times.empty() && times.size() != points.size()) {
      throw Error(ErrorCode::InvalidArgument, "polyline times must parallel points");
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
      append(points[i], times.empty() ? std::optional<double>{} : times[i]);
    }
  }

  /// Appends unless p equals the last point (consecutive duplicates collapse).
  void append(const Point& p, std::optional<double> t = std::nullopt) {
    if (!is_finite(p)) throw Error(ErrorCode::InvalidArgument, "non-finite point");
    if (!points_.empty() && points_.back() == p) return;
    if (t) {
      if (times_.size() != points_.size()) {
        throw Error(ErrorCode::InvalidArgument, "mixing timed and untimed points");
      }
      times_.push_back(*t);
    } else if (!times_.empty()) {
      throw Error(ErrorCode::InvalidArgument, "mixing timed and untimed points");
    }
    points_.push_back(p);
  }

  const std::vector<Point>& points() const { return points_; }
  const std::vector<double>& times() const { return times_; }
  bool timed() const { return !points_.empty() && times_.size() == points_.size(); }
  ContactId contact_id() const { return contact_id_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  BBox bbox() const {
    BBox b;
    for (const auto& p : points_) b.extend(p);
    return b;
  }

  double length() const {
    double total = 0.0;
    for (std::size_t i = 1; i < points_.size(); ++i) total += distance(points_[i - 1], points_[i]);
    return total;
  }

  Polyline translated(double dx, double dy) const {
    Polyline out;
    out.contact_id_ = contact_id_;
    out.times_ = times_;
    out.points_.reserve(points_.size());
    for (const auto& p : points_) out.points_.push_back({p.x + dx, p.y + dy});
    return out;
  }

  friend bool operator==(const Polyline&, const Polyline&) = default;

 private:
  std::vector<Point> points_;
  std::vector<double> times_;
  ContactId contact_id_{0};
};

inline double signed_area(std::span<const Point> vertices) {
  double twice = 0.0;
  const std::size_t n = vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = vertices[i];
    const Point& b = vertices[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return twice / 2.0;
}

namespace detail {

inline bool on_segment(const Point& p, const Point& a, const Point& b) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

inline int sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace detail

/// Closed-segment intersection, touching and collinear overlap included.
inline bool segments_intersect(const Point& p1, const Point& p2, const Point& q1, const Point& q2) {
  const int d1 = detail::sign(cross(q1, q2, p1));
  const int d2 = detail::sign(cross(q1, q2, p2));
  const int d3 = detail::sign(cross(p1, p2, q1));
  const int d4 = detail::sign(cross(p1, p2, q2));
  if (d1 * d2 < 0 && d3 * d4 < 0) return true;
  if (d1 == 0 && detail::on_segment(p1, q1, q2)) return true;
  if (d2 == 0 && detail::on_segment(p2, q1, q2)) return true;
  if (d3 == 0 && detail::on_segment(q1, p1, p2)) return true;
  if (d4 == 0 && detail::on_segment(q2, p1, p2)) return true;
  return false;
}

/// True when the closed ring has no self-intersection: non-adjacent edges are
/// disjoint and adjacent edges meet only at their shared vertex.
inline bool is_simple_ring(std::span<const Point> v) {
  const std::size_t n = v.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = v[i];
    const Point& b = v[(i + 1) % n];
    if (a == b) return false;
    const Point& c = v[(i + 2) % n];
    // Fold-back onto the previous edge.
    if (cross(a, b, c) == 0.0 && (detail::on_segment(c, a, b) || detail::on_segment(a, b, c))) {
      return false;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = v[i];
    const Point& b = v[(i + 1) % n];
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent through the closing edge
      if (segments_intersect(a, b, v[j], v[(j + 1) % n])) return false;
    }
  }
  return true;
}

/// Simple polygon with counter-clockwise (positive-area) vertex order.
class Polygon {
 public:
  explicit Polygon(std::vector<Point> vertices) : vertices_(std::move(vertices)) {
    if (vertices_.size() < 3) throw Error(ErrorCode::DegenerateInput, "polygon needs 3 vertices");
    for (const auto& p : vertices_) {
      if (!is_finite(p)) throw Error(ErrorCode::InvalidArgument, "non-finite polygon vertex");
    }
    const double area = signed_area(vertices_);
    if (area == 0.0) throw Error(ErrorCode::DegenerateInput, "zero-area polygon");
    if (area < 0.0) std::reverse(vertices_.begin(), vertices_.end());
    if (!is_simple_ring(vertices_)) {
      throw Error(ErrorCode::InvalidArgument, "polygon is not simple");
    }
  }

  const std::vector<Point>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }

  BBox bbox() const {
    BBox b;
    for (const auto& p : vertices_) b.extend(p);
    return b;
  }

  friend bool operator==(const Polygon&, const Polygon&) = default;

 private:
  std::vector<Point> vertices_;
};

/// Shoelace area; always positive for a valid polygon.
inline double polygon_area(const Polygon& poly) { return signed_area(poly.vertices()); }

enum class Containment { inside, boundary, outside };

inline constexpr double kBoundaryEpsilon = 1e-9;

inline Containment point_in_polygon(const Point& p, const Polygon& poly) {
  const auto& v = poly.vertices();
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (distance_to_segment(p, v[i], v[(i + 1) % n]) <= kBoundaryEpsilon) {
      return Containment::boundary;
    }
  }
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point& a = v[i];
    const Point& b = v[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside ? Containment::inside : Containment::outside;
}

inline constexpr double kDedupEpsilon = 1e-6;

/// Drops points within eps of an earlier point; first occurrence order is kept.
inline std::vector<Point> dedup_points(std::span<const Point> points, double eps = kDedupEpsilon) {
  struct CellHash {
    std::size_t operator()(const std::pair<std::int64_t, std::int64_t>& c) const {
      return std::hash<std::int64_t>{}(c.first * 0x9E3779B97F4A7C15LL ^ c.second);
    }
  };
  std::unordered_map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>, CellHash> grid;
  std::vector<Point> out;
  out.reserve(points.size());
  const double eps2 = eps * eps;
  for (const auto& p : points) {
    if (!is_finite(p)) throw Error(ErrorCode::InvalidArgument, "non-finite point");
    const auto cx = static_cast<std::int64_t>(std::floor(p.x / eps));
    const auto cy = static_cast<std::int64_t>(std::floor(p.y / eps));
    bool duplicate = false;
    for (std::int64_t dx = -1; dx <= 1 && !duplicate; ++dx) {
      for (std::int64_t dy = -1; dy <= 1 && !duplicate; ++dy) {
        auto it = grid.find({cx + dx, cy + dy});
        if (it == grid.end()) continue;
        for (auto idx : it->second) {
          if (squared_distance(out[idx], p) <= eps2) {
            duplicate = true;
            break;
          }
        }
      }
    }
    if (duplicate) continue;
    grid[{cx, cy}].push_back(out.size());
    out.push_back(p);
  }
  return out;
}

/// Andrew's monotone chain. Collinear boundary points are not hull vertices.
inline Polygon convex_hull(std::span<const Point> input) {
  std::vector<Point> pts = dedup_points(input);
  if (pts.size() < 3) throw Error(ErrorCode::DegenerateInput, "fewer than 3 distinct points");
  std::sort(pts.begin(), pts.end(),
            [](const Point& a, const Point& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    const Point& p = pts[i - 1];
    while (k >= t && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  if (hull.size() < 3) throw Error(ErrorCode::DegenerateInput, "all points collinear");
  return Polygon(std::move(hull));
}

namespace detail {

/// Counter-clockwise angle from direction `from` to direction `to`, in (0, 2pi].
inline double ccw_angle(double from, double to) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(to - from, two_pi);
  if (a <= 0.0) a += two_pi;
  return a;
}

/// One k-nearest-neighbour wrap attempt. Returns the ring, or nullopt when the
/// walk gets stuck or its result leaves points outside or self-intersects.
inline std::optional<std::vector<Point>> knn_wrap(const std::vector<Point>& pts, std::size_t k) {
  const std::size_t n = pts.size();
  std::size_t first = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (pts[i].y < pts[first].y || (pts[i].y == pts[first].y && pts[i].x < pts[first].x)) first = i;
  }

  std::vector<char> used(n, 0);
  std::vector<std::size_t> ring{first};
  used[first] = 1;
  std::size_t current = first;
  // Walk counter-clockwise: pretend we arrived heading east.
  double back_dir = std::numbers::pi;

  struct Candidate {
    std::size_t index;
    double dist2;
    double angle;
  };
  std::vector<Candidate> pool;
  pool.reserve(n);

  const auto crosses_ring = [&](std::size_t cand) {
    const Point& a = pts[current];
    const Point& b = pts[cand];
    const bool closing = cand == first;
    const std::size_t m = ring.size();
    // Edges ring[i] -> ring[i+1]; the last one ends at `current`.
    for (std::size_t i = 0; i + 1 < m; ++i) {
      const Point& p = pts[ring[i]];
      const Point& q = pts[ring[i + 1]];
      const bool adjacent_end = i + 2 == m;
      const bool adjacent_start = closing && i == 0;
      if (adjacent_end) {
        // Shares `current`: reject only collinear fold-back.
        if (cross(p, q, b) == 0.0 && (on_segment(b, p, q) || on_segment(p, q, b))) return true;
        continue;
      }
      if (adjacent_start) {
        if (cross(p, q, a) == 0.0 && (on_segment(a, p, q) || on_segment(q, p, a))) return true;
        continue;
      }
      if (segments_intersect(a, b, p, q)) return true;
    }
    return false;
  };

  for (;;) {
    const bool may_close = ring.size() >= 4;
    pool.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i] && !(may_close && i == first)) continue;
      if (i == current) continue;
      pool.push_back({i, squared_distance(pts[current], pts[i]), 0.0});
    }
    if (pool.empty()) return std::nullopt;
    const std::size_t take = std::min(k, pool.size());
    const auto by_distance = [](const Candidate& a, const Candidate& b) {
      return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
    };
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end(),
                      by_distance);
    pool.resize(take);
    for (auto& c : pool) {
      const double dir = std::atan2(pts[c.index].y - pts[current].y, pts[c.index].x - pts[current].x);
      c.angle = ccw_angle(back_dir, dir);
    }
    // Smallest counter-clockwise sweep from the incoming edge = rightmost turn.
    std::sort(pool.begin(), pool.end(), [](const Candidate& a, const Candidate& b) {
      constexpr double tie = 1e-12;
      if (std::abs(a.angle - b.angle) > tie) return a.angle < b.angle;
      if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
      return a.index < b.index;
    });

    std::optional<std::size_t> chosen;
    for (const auto& c : pool) {
      if (!crosses_ring(c.index)) {
        chosen = c.index;
        break;
      }
    }
    if (!chosen) return std::nullopt;
    if (*chosen == first) break;
    const std::size_t next = *chosen;
    used[next] = 1;
    back_dir = std::atan2(pts[current].y - pts[next].y, pts[current].x - pts[next].x);
    ring.push_back(next);
    current = next;
    if (ring.size() > n) return std::nullopt;
  }

  std::vector<Point> out;
  out.reserve(ring.size());
  for (auto idx : ring) out.push_back(pts[idx]);
  if (signed_area(out) <= 0.0 || !is_simple_ring(out)) return std::nullopt;
  return out;
}

}  // namespace detail

/// k-nearest-neighbour concave hull (gift wrapping restricted to the k
/// nearest unvisited points). k grows by one per failed attempt; once every
/// point is a candidate the convex hull is returned.
inline Polygon concave_hull(std::span<const Point> input, std::size_t k = 3) {
  if (k < 3) throw Error(ErrorCode::InvalidArgument, "concave hull needs k >= 3");
  std::vector<Point> pts = dedup_points(input);
  if (pts.size() < 3) throw Error(ErrorCode::DegenerateInput, "fewer than 3 distinct points");
  Polygon convex = convex_hull(pts);  // also rejects collinear input
  if (pts.size() == 3) return convex;

  for (std::size_t kk = k; kk < pts.size(); ++kk) {
    auto ring = detail::knn_wrap(pts, kk);
    if (!ring) continue;
    Polygon poly(std::move(*ring));
    const bool contains_all = std::all_of(pts.begin(), pts.end(), [&](const Point& p) {
      return point_in_polygon(p, poly) != Containment::outside;
    });
    if (contains_all) return poly;
  }
  return convex;
}

inline Polygon concave_hull(std::span<const Polyline> lines, std::size_t k = 3) {
  std::vector<Point> all;
  for (const auto& l : lines) all.insert(all.end(), l.points().begin(), l.points().end());
  return concave_hull(all, k);
}

/// Douglas-Peucker decimation. Endpoints are kept; tolerance 0 is the identity.
inline Polyline simplify_polyline(const Polyline& line, double tolerance) {
  if (tolerance < 0.0) throw Error(ErrorCode::InvalidArgument, "negative tolerance");
  const auto& pts = line.points();
  if (tolerance == 0.0 || pts.size() <= 2) return line;

  std::vector<char> keep(pts.size(), 0);
  keep.front() = keep.back() = 1;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, pts.size() - 1}};
  while (!stack.empty()) {
    auto [lo, hi] = stack.back();
    stack.pop_back();
    double worst = -1.0;
    std::size_t worst_idx = lo;
    for (std::size_t i = lo + 1; i < hi; ++i) {
      const double d = distance_to_segment(pts[i], pts[lo], pts[hi]);
      if (d > worst) {
        worst = d;
        worst_idx = i;
      }
    }
    if (worst > tolerance) {
      keep[worst_idx] = 1;
      stack.push_back({lo, worst_idx});
      stack.push_back({worst_idx, hi});
    }
  }

  std::vector<Point> out_pts;
  std::vector<double> out_times;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!keep[i]) continue;
    out_pts.push_back(pts[i]);
    if (line.timed()) out_times.push_back(line.times()[i]);
  }
  return Polyline(std::move(out_pts), line.contact_id(), std::move(out_times));
}

}  // namespace inkweave
