#pragma once

// Raster kernels: stroke rasterization, mask construction, Canny edges,
// aspect padding, chamfer feathering and seam-aware compositing.
//
// Pixel (x, y) has its centre at canvas coordinate (x, y). All blending and
// resampling is integer fixed-point so outputs are byte-stable everywhere.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "inkweave/error.hpp"
#include "inkweave/geometry.hpp"

namespace inkweave {

/// Integer pixel rectangle, half-open: [x, x+w) x [y, y+h).
struct IRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  bool empty() const { return w <= 0 || h <= 0; }
  int right() const { return x + w; }
  int bottom() const { return y + h; }
  bool contains(int px, int py) const { return px >= x && px < right() && py >= y && py < bottom(); }
  bool contains(const IRect& o) const {
    return o.x >= x && o.y >= y && o.right() <= right() && o.bottom() <= bottom();
  }
  IRect intersect(const IRect& o) const {
    const int x0 = std::max(x, o.x), y0 = std::max(y, o.y);
    const int x1 = std::min(right(), o.right()), y1 = std::min(bottom(), o.bottom());
    if (x1 <= x0 || y1 <= y0) return {x0, y0, 0, 0};
    return {x0, y0, x1 - x0, y1 - y0};
  }
  IRect expanded(int m) const { return {x - m, y - m, w + 2 * m, h + 2 * m}; }
  /// Smallest rect covering both; an empty operand is ignored.
  IRect united(const IRect& o) const {
    if (empty()) return o;
    if (o.empty()) return *this;
    const int x0 = std::min(x, o.x), y0 = std::min(y, o.y);
    return {x0, y0, std::max(right(), o.right()) - x0, std::max(bottom(), o.bottom()) - y0};
  }
  /// Grows outward to multiples of `tile`.
  IRect aligned(int tile) const {
    if (tile <= 1 || empty()) return *this;
    const auto floor_to = [tile](int v) { return (v >= 0 ? v / tile : -((-v + tile - 1) / tile)) * tile; };
    const auto ceil_to = [tile](int v) { return (v >= 0 ? (v + tile - 1) / tile : -((-v) / tile)) * tile; };
    const int x0 = floor_to(x), y0 = floor_to(y);
    return {x0, y0, ceil_to(right()) - x0, ceil_to(bottom()) - y0};
  }

  friend bool operator==(const IRect&, const IRect&) = default;
};

/// Pixel cover of a real box: every pixel whose centre lies inside it.
inline IRect to_pixel_rect(const BBox& b) {
  if (b.empty()) return {};
  const int x0 = static_cast<int>(std::ceil(b.min_x));
  const int y0 = static_cast<int>(std::ceil(b.min_y));
  const int x1 = static_cast<int>(std::floor(b.max_x)) + 1;
  const int y1 = static_cast<int>(std::floor(b.max_y)) + 1;
  return {x0, y0, std::max(0, x1 - x0), std::max(0, y1 - y0)};
}

/// Row-major 8-bit image with 1 (gray/mask) or 4 (RGBA) channels.
class Raster {
 public:
  Raster() = default;

  Raster(int width, int height, int channels, std::uint8_t fill = 0)
      : width_(width), height_(height), channels_(channels) {
    if (width < 1 || height < 1) throw Error(ErrorCode::InvalidArgument, "raster size must be >= 1");
    if (channels != 1 && channels != 4) throw Error(ErrorCode::InvalidArgument, "channels must be 1 or 4");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  Raster(int width, int height, int channels, std::vector<std::uint8_t> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (width < 1 || height < 1) throw Error(ErrorCode::InvalidArgument, "raster size must be >= 1");
    if (channels != 1 && channels != 4) throw Error(ErrorCode::InvalidArgument, "channels must be 1 or 4");
    if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
      throw Error(ErrorCode::DimensionMismatch, "raster data length does not match dimensions");
    }
  }

  static Raster rgba(int width, int height, std::array<std::uint8_t, 4> fill) {
    Raster r(width, height, 4);
    for (std::size_t i = 0; i < r.data_.size(); i += 4) std::copy(fill.begin(), fill.end(), r.data_.begin() + i);
    return r;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  IRect rect() const { return {0, 0, width_, height_}; }
  bool same_size(const Raster& o) const { return width_ == o.width_ && height_ == o.height_; }

  std::uint8_t& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

  std::span<std::uint8_t> pixel(int x, int y) { return {data_.data() + index(x, y, 0), std::size_t(channels_)}; }
  std::span<const std::uint8_t> pixel(int x, int y) const {
    return {data_.data() + index(x, y, 0), std::size_t(channels_)};
  }

  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t>& data() { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

inline Raster crop(const Raster& src, const IRect& r) {
  if (r.empty() || !src.rect().contains(r)) throw Error(ErrorCode::OutOfBounds, "crop outside raster");
  Raster out(r.w, r.h, src.channels());
  const std::size_t row = static_cast<std::size_t>(r.w) * src.channels();
  for (int y = 0; y < r.h; ++y) {
    const auto* from = src.data().data() + (static_cast<std::size_t>(r.y + y) * src.width() + r.x) * src.channels();
    std::copy(from, from + row, out.data().data() + y * row);
  }
  return out;
}

inline void paste(Raster& dst, const Raster& src, int at_x, int at_y) {
  if (dst.channels() != src.channels()) throw Error(ErrorCode::DimensionMismatch, "channel mismatch in paste");
  if (!dst.rect().contains(IRect{at_x, at_y, src.width(), src.height()})) {
    throw Error(ErrorCode::OutOfBounds, "paste outside raster");
  }
  const std::size_t row = static_cast<std::size_t>(src.width()) * src.channels();
  for (int y = 0; y < src.height(); ++y) {
    const auto* from = src.data().data() + y * row;
    std::copy(from, from + row,
              dst.data().data() + (static_cast<std::size_t>(at_y + y) * dst.width() + at_x) * dst.channels());
  }
}

/// Gray to RGBA (opaque), RGBA passes through.
inline Raster to_rgba(const Raster& src) {
  if (src.channels() == 4) return src;
  Raster out(src.width(), src.height(), 4);
  for (std::size_t i = 0; i < src.data().size(); ++i) {
    const auto v = src.data()[i];
    out.data()[4 * i] = out.data()[4 * i + 1] = out.data()[4 * i + 2] = v;
    out.data()[4 * i + 3] = 255;
  }
  return out;
}

/// RGBA to gray with integer Rec.601 luma; gray passes through.
inline Raster to_gray(const Raster& src) {
  if (src.channels() == 1) return src;
  Raster out(src.width(), src.height(), 1);
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    const auto* p = src.data().data() + 4 * i;
    out.data()[i] = static_cast<std::uint8_t>((299 * p[0] + 587 * p[1] + 114 * p[2] + 500) / 1000);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stroke rasterization

inline void rasterize_strokes_into(Raster& out, std::span<const Polyline> strokes, double thickness) {
  const double radius = thickness / 2.0;
  const double w = out.width(), h = out.height();
  const auto clamp_pt = [&](const Point& p) {
    return Point{std::clamp(p.x, 0.0, w - 1.0), std::clamp(p.y, 0.0, h - 1.0)};
  };
  const auto draw_segment = [&](Point a, Point b) {
    a = clamp_pt(a);
    b = clamp_pt(b);
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - radius)));
    const int x1 = std::min(out.width() - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - radius)));
    const int y1 = std::min(out.height() - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + radius)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (distance_to_segment(Point{double(x), double(y)}, a, b) <= radius) out.at(x, y) = 255;
  };
  for (const auto& stroke : strokes) {
    const auto& pts = stroke.points();
    if (pts.size() == 1) draw_segment(pts[0], pts[0]);
    for (std::size_t i = 1; i < pts.size(); ++i) draw_segment(pts[i - 1], pts[i]);
  }
}

/// 1-channel raster: 255 where the pixel centre is within thickness/2 of a stroke.
inline Raster rasterize_strokes(std::span<const Polyline> strokes, double thickness, int width, int height) {
  if (strokes.empty()) throw Error(ErrorCode::EmptyInput, "no strokes to rasterize");
  if (thickness < 1.0) throw Error(ErrorCode::InvalidArgument, "thickness must be >= 1");
  Raster out(width, height, 1);
  rasterize_strokes_into(out, strokes, thickness);
  return out;
}

/// Scanline fill of a polygon: pixels whose centre is inside or on the boundary.
inline Raster fill_polygon(const Polygon& poly, int width, int height) {
  Raster out(width, height, 1);
  const auto& v = poly.vertices();
  const std::size_t n = v.size();
  constexpr double eps = 1e-9;
  std::vector<double> xs;
  for (int y = 0; y < height; ++y) {
    const double py = y;
    xs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const Point& a = v[i];
      const Point& b = v[(i + 1) % n];
      if ((a.y > py) != (b.y > py)) xs.push_back(a.x + (py - a.y) * (b.x - a.x) / (b.y - a.y));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
      const int x0 = std::max(0, static_cast<int>(std::ceil(xs[i] - eps)));
      const int x1 = std::min(width - 1, static_cast<int>(std::floor(xs[i + 1] + eps)));
      for (int x = x0; x <= x1; ++x) out.at(x, y) = 255;
    }
  }
  // Edges themselves (covers horizontal edges and vertex-only rows).
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = v[i];
    const Point& b = v[(i + 1) % n];
    const int x0 = std::max(0, static_cast<int>(std::ceil(std::min(a.x, b.x) - eps)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(std::max(a.x, b.x) + eps)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(std::min(a.y, b.y) - eps)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(std::max(a.y, b.y) + eps)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (distance_to_segment(Point{double(x), double(y)}, a, b) <= eps) out.at(x, y) = 255;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Distance transform and morphology

inline constexpr int kChamferOrtho = 3;
inline constexpr int kChamferDiag = 4;
inline constexpr int kChamferInfinity = std::numeric_limits<int>::max() / 4;

/// Two-pass 3-4 chamfer distance to the nearest nonzero pixel (0 on support).
/// Divide by 3 for an approximate Euclidean pixel distance.
inline std::vector<int> chamfer_distance(const Raster& mask) {
  const int w = mask.width(), h = mask.height();
  std::vector<int> d(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) d[y * w + x] = mask.at(x, y) ? 0 : kChamferInfinity;
  const auto relax = [&](int x, int y, int nx, int ny, int cost) {
    if (nx < 0 || ny < 0 || nx >= w || ny >= h) return;
    d[y * w + x] = std::min(d[y * w + x], d[ny * w + nx] + cost);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      relax(x, y, x - 1, y, kChamferOrtho);
      relax(x, y, x - 1, y - 1, kChamferDiag);
      relax(x, y, x, y - 1, kChamferOrtho);
      relax(x, y, x + 1, y - 1, kChamferDiag);
    }
  }
  for (int y = h - 1; y >= 0; --y) {
    for (int x = w - 1; x >= 0; --x) {
      relax(x, y, x + 1, y, kChamferOrtho);
      relax(x, y, x + 1, y + 1, kChamferDiag);
      relax(x, y, x, y + 1, kChamferOrtho);
      relax(x, y, x - 1, y + 1, kChamferDiag);
    }
  }
  return d;
}

/// Dilation by a chamfer disc of the given radius (px).
inline Raster dilate(const Raster& mask, double radius) {
  Raster out(mask.width(), mask.height(), 1);
  const auto d = chamfer_distance(mask);
  const double limit = radius * kChamferOrtho;
  for (std::size_t i = 0; i < d.size(); ++i) out.data()[i] = d[i] <= limit ? 255 : 0;
  return out;
}

/// Linear alpha ramp: 255 on the mask, falling to 0 at feather_width px.
inline Raster feather_mask(const Raster& mask, double feather_width) {
  Raster out(mask.width(), mask.height(), 1);
  const auto d = chamfer_distance(mask);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] == 0) {
      out.data()[i] = 255;
    } else if (feather_width > 0.0 && d[i] < kChamferInfinity) {
      const double dist = static_cast<double>(d[i]) / kChamferOrtho;
      if (dist < feather_width) {
        const double a = 255.0 * (1.0 - dist / feather_width);
        out.data()[i] = static_cast<std::uint8_t>(std::clamp(std::floor(a + 0.5), 0.0, 255.0));
      }
    }
  }
  return out;
}

/// Bounding rect of nonzero pixels (empty rect when none).
inline IRect support_bbox(const Raster& mask) {
  int x0 = mask.width(), y0 = mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return {};
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

// ---------------------------------------------------------------------------
// Canny

struct CannyParams {
  double sigma = 1.4;
  double low = 50.0;
  double high = 150.0;
};

namespace detail {

inline std::vector<std::int64_t> gaussian_taps(double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<std::int64_t> taps(2 * r + 1);
  for (int i = -r; i <= r; ++i) {
    taps[i + r] = static_cast<std::int64_t>(std::llround(4096.0 * std::exp(-(i * i) / (2.0 * sigma * sigma))));
  }
  return taps;
}

/// Largest gradient magnitude the blur+Sobel operator can produce on 8-bit
/// input, in the same integer units as `canny_gradients`.
inline double max_gradient_response(const std::vector<std::int64_t>& taps) {
  const int r = static_cast<int>(taps.size() / 2);
  const int n = 2 * r + 3;
  // Derivative and smoothing profiles of the combined kernel.
  std::vector<double> deriv(n, 0.0), smooth(n, 0.0);
  for (int i = 0; i < static_cast<int>(taps.size()); ++i) {
    const double t = static_cast<double>(taps[i]);
    deriv[i] += -t;
    deriv[i + 2] += t;
    smooth[i] += t;
    smooth[i + 1] += 2 * t;
    smooth[i + 2] += t;
  }
  double best = 0.0;
  for (int step = 0; step < 720; ++step) {
    const double th = step * std::numbers::pi / 360.0;
    const double c = std::cos(th), s = std::sin(th);
    double positive = 0.0;
    for (int yy = 0; yy < n; ++yy)
      for (int xx = 0; xx < n; ++xx) {
        const double k = c * deriv[xx] * smooth[yy] + s * smooth[xx] * deriv[yy];
        if (k > 0) positive += k;
      }
    best = std::max(best, positive);
  }
  return 255.0 * best;
}

struct Gradients {
  int width = 0;
  int height = 0;
  std::vector<std::int64_t> gx, gy;
  double scale = 1.0;  // multiply hypot(gx, gy) by this to get 0..255 units

  double magnitude(std::size_t i) const {
    return std::hypot(static_cast<double>(gx[i]), static_cast<double>(gy[i])) * scale;
  }
  /// Squared magnitude in raw units; the integer gradients are exact, so equal
  /// inputs give equal keys.
  double magnitude2(std::size_t i) const {
    const double x = static_cast<double>(gx[i]), y = static_cast<double>(gy[i]);
    return x * x + y * y;
  }
};

}  // namespace detail

/// Gaussian-smoothed Sobel gradients in exact integer arithmetic (replicate
/// borders). Used by `canny` and exposed for gradient-level checks.
inline detail::Gradients canny_gradients(const Raster& image, double sigma) {
  if (image.channels() != 1) throw Error(ErrorCode::InvalidArgument, "canny expects a 1-channel raster");
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be > 0");
  const int w = image.width(), h = image.height();
  const auto taps = detail::gaussian_taps(sigma);
  const int r = static_cast<int>(taps.size() / 2);
  const auto cx = [w](int x) { return std::clamp(x, 0, w - 1); };
  const auto cy = [h](int y) { return std::clamp(y, 0, h - 1); };

  std::vector<std::int64_t> tmp(static_cast<std::size_t>(w) * h), blur(tmp.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::int64_t acc = 0;
      for (int k = -r; k <= r; ++k) acc += taps[k + r] * image.at(cx(x + k), y);
      tmp[y * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::int64_t acc = 0;
      for (int k = -r; k <= r; ++k) acc += taps[k + r] * tmp[cy(y + k) * w + x];
      blur[y * w + x] = acc;
    }

  detail::Gradients g;
  g.width = w;
  g.height = h;
  g.gx.resize(blur.size());
  g.gy.resize(blur.size());
  const auto B = [&](int x, int y) { return blur[cy(y) * w + cx(x)]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      g.gx[y * w + x] = (B(x + 1, y - 1) + 2 * B(x + 1, y) + B(x + 1, y + 1)) -
                        (B(x - 1, y - 1) + 2 * B(x - 1, y) + B(x - 1, y + 1));
      g.gy[y * w + x] = (B(x - 1, y + 1) + 2 * B(x, y + 1) + B(x + 1, y + 1)) -
                        (B(x - 1, y - 1) + 2 * B(x, y - 1) + B(x + 1, y - 1));
    }
  g.scale = 255.0 / detail::max_gradient_response(taps);
  return g;
}

/// Canny edge map (0/255): blur, Sobel, 4-bin non-maximum suppression,
/// double threshold, 8-connected hysteresis.
inline Raster canny(const Raster& image, const CannyParams& params = {}) {
  if (!(params.low < params.high)) throw Error(ErrorCode::BadThresholds, "low must be < high");
  const auto g = canny_gradients(image, params.sigma);
  const int w = g.width, h = g.height;

  // tan(22.5 deg) and tan(67.5 deg) bin edges.
  constexpr double t1 = 0.41421356237309503;
  constexpr double t2 = 2.414213562373095;
  std::vector<std::uint8_t> cls(static_cast<std::size_t>(w) * h, 0);  // 0 none, 1 weak, 2 strong
  const auto mag2 = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0;
    return g.magnitude2(static_cast<std::size_t>(y) * w + x);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double m2 = g.magnitude2(i);
      if (m2 == 0.0) continue;
      const double m = g.magnitude(i);
      if (m < params.low) continue;
      const double ax = std::abs(static_cast<double>(g.gx[i]));
      const double ay = std::abs(static_cast<double>(g.gy[i]));
      int dx, dy;
      if (ay <= ax * t1) {
        dx = 1, dy = 0;
      } else if (ay >= ax * t2) {
        dx = 0, dy = 1;
      } else if ((g.gx[i] > 0) == (g.gy[i] > 0)) {
        dx = 1, dy = 1;
      } else {
        dx = 1, dy = -1;
      }
      if (m2 < mag2(x + dx, y + dy) || m2 < mag2(x - dx, y - dy)) continue;
      cls[i] = m >= params.high ? 2 : 1;
    }

  Raster out(w, h, 1);
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (cls[y * w + x] == 2) {
        out.at(x, y) = 255;
        queue.emplace_back(x, y);
      }
  while (!queue.empty()) {
    auto [x, y] = queue.front();
    queue.pop_front();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        if (cls[ny * w + nx] == 1 && out.at(nx, ny) == 0) {
          out.at(nx, ny) = 255;
          queue.emplace_back(nx, ny);
        }
      }
  }
  return out;
}

inline Raster canny(const Raster& image, double sigma, double low, double high) {
  return canny(image, CannyParams{sigma, low, high});
}

// ---------------------------------------------------------------------------
// Masks

struct MaskParams {
  double thickness = 4.0;
  double feather_width = 8.0;
  std::size_t hull_k = 3;
  double simplify_tolerance = 0.5;
  CannyParams canny;
};

struct MaskBundle {
  std::optional<Polygon> hull;  // absent when the strokes were degenerate
  Raster mask;
  Raster feather;
  Raster edges;
  Raster strokes;  // the rasterized sketch the edges were taken from
  double stroke_thickness = 0.0;
  IRect bbox;  // mask support

  bool hull_absent() const { return !hull.has_value(); }
};

/// Formal-intent extraction: concave-hull silhouette dilated by the stroke
/// thickness, a feather ramp around it, and Canny edges of the sketch.
inline MaskBundle build_mask(std::span<const Polyline> strokes, const MaskParams& params, int width,
                             int height) {
  if (strokes.empty() || std::all_of(strokes.begin(), strokes.end(), [](const Polyline& s) { return s.empty(); })) {
    throw Error(ErrorCode::EmptyInput, "no stroke points");
  }
  MaskBundle b;
  b.stroke_thickness = params.thickness;
  b.strokes = rasterize_strokes(strokes, params.thickness, width, height);

  std::vector<Point> points;
  for (const auto& s : strokes) {
    const auto simplified = simplify_polyline(s, params.simplify_tolerance);
    points.insert(points.end(), simplified.points().begin(), simplified.points().end());
  }
  try {
    b.hull = concave_hull(points, params.hull_k);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateInput) throw;
  }

  if (b.hull) {
    b.mask = dilate(fill_polygon(*b.hull, width, height), params.thickness / 2.0);
    for (std::size_t i = 0; i < b.mask.data().size(); ++i) b.mask.data()[i] |= b.strokes.data()[i];
  } else {
    b.mask = b.strokes;
  }
  b.feather = feather_mask(b.mask, params.feather_width);
  b.bbox = support_bbox(b.mask);

  const Raster all_edges = canny(b.strokes, params.canny);
  const IRect keep = b.bbox.expanded(static_cast<int>(std::ceil(params.feather_width))).intersect(b.mask.rect());
  b.edges = Raster(width, height, 1);
  for (int y = keep.y; y < keep.bottom(); ++y)
    for (int x = keep.x; x < keep.right(); ++x) b.edges.at(x, y) = all_edges.at(x, y);
  return b;
}

// ---------------------------------------------------------------------------
// Aspect padding

struct PaddingRecord {
  int left = 0;
  int right = 0;
  int top = 0;
  int bottom = 0;
  int original_w = 0;
  int original_h = 0;
  int padded_w = 0;
  int padded_h = 0;

  bool is_zero() const { return left == 0 && right == 0 && top == 0 && bottom == 0; }
  friend bool operator==(const PaddingRecord&, const PaddingRecord&) = default;
};

struct PaddedRaster {
  Raster image;
  PaddingRecord record;
};

/// Replicate-edge padding to width/height = target_aspect. The odd extra
/// pixel goes right or bottom.
inline PaddedRaster pad_to_aspect(const Raster& image, double target_aspect) {
  if (!(target_aspect > 0.0) || !std::isfinite(target_aspect)) {
    throw Error(ErrorCode::InvalidArgument, "target aspect must be > 0");
  }
  const int w = image.width(), h = image.height();
  PaddingRecord rec{0, 0, 0, 0, w, h, w, h};
  const double current = static_cast<double>(w) / h;
  if (current < target_aspect) {
    rec.padded_w = std::max(w, static_cast<int>(std::lround(h * target_aspect)));
  } else if (current > target_aspect) {
    rec.padded_h = std::max(h, static_cast<int>(std::lround(w / target_aspect)));
  }
  const int pw = rec.padded_w - w, ph = rec.padded_h - h;
  rec.left = pw / 2;
  rec.right = pw - rec.left;
  rec.top = ph / 2;
  rec.bottom = ph - rec.top;
  if (rec.is_zero()) return {image, rec};

  Raster out(rec.padded_w, rec.padded_h, image.channels());
  const int ch = image.channels();
  for (int y = 0; y < rec.padded_h; ++y) {
    const int sy = std::clamp(y - rec.top, 0, h - 1);
    for (int x = 0; x < rec.padded_w; ++x) {
      const int sx = std::clamp(x - rec.left, 0, w - 1);
      for (int c = 0; c < ch; ++c) out.at(x, y, c) = image.at(sx, sy, c);
    }
  }
  return {std::move(out), rec};
}

inline Raster remove_padding(const Raster& image, const PaddingRecord& record) {
  if (image.width() != record.padded_w || image.height() != record.padded_h ||
      record.padded_w - record.left - record.right != record.original_w ||
      record.padded_h - record.top - record.bottom != record.original_h) {
    throw Error(ErrorCode::DimensionMismatch, "padding record does not match image");
  }
  if (record.is_zero()) return image;
  return crop(image, IRect{record.left, record.top, record.original_w, record.original_h});
}

// ---------------------------------------------------------------------------
// Compositing

/// out = a*gen + (1-a)*bg per channel, a = 1 on the mask else feather/255,
/// rounded half up in 8-bit fixed point.
inline Raster composite(const Raster& background, const Raster& generated, const MaskBundle& bundle) {
  if (background.channels() != 4 || generated.channels() != 4) {
    throw Error(ErrorCode::DimensionMismatch, "composite expects RGBA background and generated images");
  }
  if (!background.same_size(generated) || !background.same_size(bundle.mask) ||
      !background.same_size(bundle.feather)) {
    throw Error(ErrorCode::DimensionMismatch, "composite inputs differ in size");
  }
  Raster out = background;
  const std::size_t n = static_cast<std::size_t>(background.width()) * background.height();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t a = bundle.mask.data()[i] == 255 ? 255u : bundle.feather.data()[i];
    if (a == 0) continue;
    for (int c = 0; c < 4; ++c) {
      const std::uint32_t g = generated.data()[4 * i + c];
      const std::uint32_t bg = background.data()[4 * i + c];
      out.data()[4 * i + c] = static_cast<std::uint8_t>((2 * (a * g + (255 - a) * bg) + 255) / 510);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Resampling

/// Bilinear resize with 16.16 fixed-point weights (pixel-centre aligned).
inline Raster resize_bilinear(const Raster& src, int width, int height) {
  if (src.width() == width && src.height() == height) return src;
  Raster out(width, height, src.channels());
  const int ch = src.channels();
  const auto coord = [](int dst, int dst_len, int src_len) {
    // Source position in 16.16: ((dst + 0.5) * src_len / dst_len - 0.5).
    std::int64_t v = ((2LL * dst + 1) * src_len * 65536LL) / (2LL * dst_len) - 32768;
    return std::max<std::int64_t>(0, v);
  };
  for (int y = 0; y < height; ++y) {
    const std::int64_t sy = coord(y, height, src.height());
    const int y0 = std::min(static_cast<int>(sy >> 16), src.height() - 1);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const std::int64_t fy = sy & 0xFFFF;
    for (int x = 0; x < width; ++x) {
      const std::int64_t sx = coord(x, width, src.width());
      const int x0 = std::min(static_cast<int>(sx >> 16), src.width() - 1);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const std::int64_t fx = sx & 0xFFFF;
      for (int c = 0; c < ch; ++c) {
        const std::int64_t top = src.at(x0, y0, c) * (65536 - fx) + src.at(x1, y0, c) * fx;
        const std::int64_t bot = src.at(x0, y1, c) * (65536 - fx) + src.at(x1, y1, c) * fx;
        const std::int64_t v = top * (65536 - fy) + bot * fy;
        out.at(x, y, c) = static_cast<std::uint8_t>((v + (1LL << 31)) >> 32);
      }
    }
  }
  return out;
}

inline Raster resize_nearest(const Raster& src, int width, int height) {
  if (src.width() == width && src.height() == height) return src;
  Raster out(width, height, src.channels());
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>(((2LL * y + 1) * src.height()) / (2LL * height));
    for (int x = 0; x < width; ++x) {
      const int sx = static_cast<int>(((2LL * x + 1) * src.width()) / (2LL * width));
      for (int c = 0; c < src.channels(); ++c) out.at(x, y, c) = src.at(sx, sy, c);
    }
  }
  return out;
}

}  // namespace inkweave
