#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "inkweave/geometry.hpp"
#include "oracles.hpp"

using namespace inkweave;

namespace {

bool has_vertex(const Polygon& poly, Point p) {
  for (const auto& v : poly.vertices())
    if (v == p) return true;
  return false;
}

bool vertices_subset(const Polygon& poly, const std::vector<Point>& input) {
  for (const auto& v : poly.vertices()) {
    bool found = false;
    for (const auto& p : input) found = found || p == v;
    if (!found) return false;
  }
  return true;
}

const std::vector<Point> kSquare4{{0, 0}, {4, 0}, {4, 4}, {0, 4}};

}  // namespace

TEST(Polyline, CollapsesConsecutiveDuplicates) {
  Polyline line({{0, 0}, {0, 0}, {1, 1}, {1, 1}, {0, 0}}, ContactId{7});
  EXPECT_EQ(line.size(), 3u);
  EXPECT_EQ(line.contact_id(), ContactId{7});
}

TEST(Polygon, EnforcesCounterClockwiseOrientation) {
  Polygon cw({{0, 0}, {0, 4}, {4, 4}, {4, 0}});
  EXPECT_GT(signed_area(cw.vertices()), 0.0);
  EXPECT_THROW(Polygon({{0, 0}, {1, 1}, {2, 2}}), Error);
  // Bow-tie is not simple.
  EXPECT_THROW(Polygon({{0, 0}, {4, 4}, {4, 0}, {0, 4}}), Error);
}

TEST(PolygonArea, KnownShapes) {
  EXPECT_DOUBLE_EQ(polygon_area(Polygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}})), 1.0);
  EXPECT_DOUBLE_EQ(polygon_area(Polygon(kSquare4)), 16.0);
  EXPECT_DOUBLE_EQ(polygon_area(Polygon({{0, 0}, {3, 0}, {0, 4}})), 6.0);
}

TEST(PointInPolygon, InsideBoundaryOutside) {
  Polygon sq(kSquare4);
  EXPECT_EQ(point_in_polygon({2, 2}, sq), Containment::inside);
  EXPECT_EQ(point_in_polygon({0, 2}, sq), Containment::boundary);
  EXPECT_EQ(point_in_polygon({4, 4}, sq), Containment::boundary);
  EXPECT_EQ(point_in_polygon({5, 5}, sq), Containment::outside);
  EXPECT_EQ(point_in_polygon({0, 2 + 1e-10}, sq), Containment::boundary);
}

TEST(ConvexHull, MinimalTriangle) {
  std::vector<Point> pts{{0, 0}, {4, 0}, {0, 4}};
  auto hull = convex_hull(pts);
  ASSERT_EQ(hull.size(), 3u);
  for (const auto& p : pts) EXPECT_TRUE(has_vertex(hull, p));
}

TEST(ConvexHull, InteriorPointExcluded) {
  std::vector<Point> pts{{0, 0}, {4, 0}, {4, 4}, {0, 4}, {2, 2}};
  auto hull = convex_hull(pts);
  EXPECT_EQ(hull.size(), 4u);
  EXPECT_FALSE(has_vertex(hull, {2, 2}));
}

TEST(ConvexHull, DegenerateInputs) {
  std::vector<Point> two{{0, 0}, {1, 1}, {0, 0}};
  EXPECT_THROW(convex_hull(two), Error);
  std::vector<Point> line{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  try {
    convex_hull(line);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateInput);
  }
  // Within the dedup epsilon these are one point.
  std::vector<Point> near{{0, 0}, {1e-7, 0}, {0, 1e-7}};
  EXPECT_THROW(convex_hull(near), Error);
}

TEST(ConvexHull, RandomContainmentAgainstWindingOracle) {
  std::mt19937_64 rng(11);
  auto pts = oracle::random_points(rng, 200, 0.0, 100.0);
  auto hull = convex_hull(pts);
  for (const auto& p : pts) EXPECT_GE(oracle::winding_containment(p, hull.vertices()), 0);
  EXPECT_TRUE(vertices_subset(hull, pts));
  // Convexity: every consecutive triple turns left.
  const auto& v = hull.vertices();
  for (std::size_t i = 0; i < v.size(); ++i)
    EXPECT_GT(cross(v[i], v[(i + 1) % v.size()], v[(i + 2) % v.size()]), 0.0);
}

TEST(ConcaveHull, TriangleIsItself) {
  std::vector<Point> pts{{0, 0}, {4, 0}, {0, 4}};
  auto hull = concave_hull(pts, 3);
  EXPECT_EQ(hull.size(), 3u);
  for (const auto& p : pts) EXPECT_TRUE(has_vertex(hull, p));
}

TEST(ConcaveHull, RejectsBadArguments) {
  EXPECT_THROW(concave_hull(kSquare4, 2), Error);
  std::vector<Point> line{{0, 0}, {1, 0}, {2, 0}, {3, 0}};
  EXPECT_THROW(concave_hull(line, 3), Error);
}

TEST(ConcaveHull, EightPointCShapeIsValidAndBoundedByConvexHull) {
  std::vector<Point> c{{0, 0}, {4, 0}, {4, 1}, {1, 1}, {1, 3}, {4, 3}, {4, 4}, {0, 4}};
  auto hull = concave_hull(c, 3);
  for (const auto& p : c) EXPECT_GE(oracle::winding_containment(p, hull.vertices()), 0);
  EXPECT_TRUE(oracle::ring_is_simple(hull.vertices()));
  EXPECT_LE(oracle::shoelace(hull.vertices()), oracle::shoelace(convex_hull(c).vertices()) + 1e-9);
}

TEST(ConcaveHull, DenseCShapeIsStrictlyConcave) {
  // Unit-spaced outline of a C: outer 10x10 square with a 7x4 notch cut from
  // the right edge.
  std::vector<Point> c;
  for (int x = 0; x <= 10; ++x) c.push_back({double(x), 0});
  for (int y = 1; y <= 3; ++y) c.push_back({10, double(y)});
  for (int x = 9; x >= 3; --x) c.push_back({double(x), 3});
  for (int y = 4; y <= 7; ++y) c.push_back({3, double(y)});
  for (int x = 4; x <= 10; ++x) c.push_back({double(x), 7});
  for (int y = 8; y <= 10; ++y) c.push_back({10, double(y)});
  for (int x = 9; x >= 0; --x) c.push_back({double(x), 10});
  for (int y = 9; y >= 1; --y) c.push_back({0, double(y)});

  auto hull = concave_hull(c, 3);
  const double concave_area = oracle::shoelace(hull.vertices());
  const double convex_area = oracle::shoelace(convex_hull(c).vertices());
  EXPECT_LT(concave_area, convex_area);
  // The notch centre lies outside the hull.
  EXPECT_EQ(oracle::winding_containment({7, 5}, hull.vertices()), -1);
  for (const auto& p : c) EXPECT_GE(oracle::winding_containment(p, hull.vertices()), 0);
  EXPECT_TRUE(oracle::ring_is_simple(hull.vertices()));
}

TEST(ConcaveHull, RandomSetsHoldAllProperties) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    auto pts = oracle::random_points(rng, 500, 0.0, 100.0);
    auto hull = concave_hull(pts, 3);
    for (const auto& p : pts) ASSERT_GE(oracle::winding_containment(p, hull.vertices()), 0);
    ASSERT_TRUE(oracle::ring_is_simple(hull.vertices()));
    ASSERT_TRUE(vertices_subset(hull, pts));
    ASSERT_LE(oracle::shoelace(hull.vertices()),
              oracle::shoelace(convex_hull(pts).vertices()) * (1 + 1e-12));
  }
}

TEST(ConcaveHull, DeterministicVertexSequence) {
  std::mt19937_64 rng(5);
  auto pts = oracle::random_points(rng, 300, 0.0, 50.0);
  auto a = concave_hull(pts, 3);
  auto b = concave_hull(pts, 3);
  EXPECT_EQ(a.vertices(), b.vertices());
}

TEST(SimplifyPolyline, ZeroToleranceIsIdentity) {
  Polyline line({{0, 0}, {1, 0}, {2, 0}, {3, 1}});
  EXPECT_EQ(simplify_polyline(line, 0.0), line);
}

TEST(SimplifyPolyline, DropsExactlyCollinearPoint) {
  Polyline line({{0, 0}, {1, 0}, {2, 0}});
  auto out = simplify_polyline(line, 0.1);
  EXPECT_EQ(out.points(), (std::vector<Point>{{0, 0}, {2, 0}}));
}

TEST(SimplifyPolyline, NoisySineDeviationBound) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<Point> pts;
  for (int i = 0; i < 1000; ++i) {
    const double x = i * 0.1;
    pts.push_back({x, 10.0 * std::sin(x / 5.0) + noise(rng)});
  }
  Polyline line(pts);
  auto out = simplify_polyline(line, 0.5);
  ASSERT_LT(out.size(), line.size());
  EXPECT_EQ(out.points().front(), line.points().front());
  EXPECT_EQ(out.points().back(), line.points().back());
  // Brute force: each removed point is within tolerance of the chain segment
  // spanning it.
  const auto& kept = out.points();
  std::size_t seg = 0;
  for (const auto& p : line.points()) {
    if (seg + 1 < kept.size() && p == kept[seg + 1]) {
      ++seg;
      continue;
    }
    if (p == kept[seg]) continue;
    EXPECT_LE(distance_to_segment(p, kept[seg], kept[seg + 1]), 0.5 + 1e-12);
  }
}
