#pragma once

// Per-blob transformation: pad -> mask -> describe -> style -> coarse ->
// refine -> composite -> unpad. Generators are pluggable backends; the mock
// backend is a deterministic stylizer.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "inkweave/error.hpp"
#include "inkweave/geometry.hpp"
#include "inkweave/intent.hpp"
#include "inkweave/raster.hpp"

namespace inkweave {

using BlobId = std::uint64_t;

enum class GenerationStage { coarse, refine };

constexpr std::string_view to_string(GenerationStage s) { return s == GenerationStage::coarse ? "coarse" : "refine"; }

struct GenerationRequest {
  BlobId blob_id = 0;
  Raster padded_sketch;  // RGBA
  Raster edges;          // gray
  Raster mask;           // gray
  std::string prompt;
  StyleProfile style;
  GenerationStage stage = GenerationStage::coarse;
  double denoise = 1.0;
  std::uint64_t seed = 0;
};

struct GenerationResult {
  BlobId blob_id = 0;
  Raster image;  // RGBA, request dimensions
  GenerationStage stage = GenerationStage::coarse;
  double latency_ms = 0.0;
};

inline void validate_request(const GenerationRequest& r) {
  if (!(r.denoise >= 0.0 && r.denoise <= 1.0)) throw Error(ErrorCode::InvalidArgument, "denoise outside [0,1]");
  if (r.padded_sketch.empty() || r.padded_sketch.channels() != 4) {
    throw Error(ErrorCode::InvalidArgument, "sketch must be a non-empty RGBA raster");
  }
  if (!r.padded_sketch.same_size(r.edges) || !r.padded_sketch.same_size(r.mask) || r.edges.channels() != 1 ||
      r.mask.channels() != 1) {
    throw Error(ErrorCode::DimensionMismatch, "request rasters differ in size");
  }
  if (r.style.palette.empty()) throw Error(ErrorCode::InvalidArgument, "style has no palette");
}

class Backend {
 public:
  virtual ~Backend() = default;
  virtual GenerationResult generate(const GenerationRequest& request) = 0;
  virtual std::string name() const = 0;
  virtual int max_concurrency() const = 0;
  /// True when latency_ms is scripted rather than spent; the pipeline then
  /// books it as stage time on top of what it measured.
  virtual bool virtual_time() const { return false; }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct MockBackendConfig {
  double coarse_ms = 0.0;
  double refine_ms = 0.0;
  bool sleep = false;  // spend the scripted latency on the wall clock
  int max_concurrency = 4;
};

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockBackendConfig cfg = {}) : cfg_(cfg) {}

  GenerationResult generate(const GenerationRequest& r) override {
    validate_request(r);
    const double ms = r.stage == GenerationStage::coarse ? cfg_.coarse_ms : cfg_.refine_ms;
    if (cfg_.sleep && ms > 0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
    return {r.blob_id, r.stage == GenerationStage::coarse ? coarse(r) : refine(r), r.stage, ms};
  }

  std::string name() const override { return "mock"; }
  int max_concurrency() const override { return cfg_.max_concurrency; }
  bool virtual_time() const override { return !cfg_.sleep; }

  static std::uint8_t posterize(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255) / 64 * 85); }

  /// Mask interior filled with a seed-chosen palette pair under a diagonal
  /// lighting ramp, posterized to 4 levels. Outside the mask: input as is.
  static Raster coarse(const GenerationRequest& r) {
    const auto& pal = r.style.palette;
    const std::size_t n = pal.size();
    const Rgb base = pal[r.seed % n];
    const Rgb light = pal[(r.seed / n + 1 + r.seed % n) % n];
    Raster out = r.padded_sketch;
    const int w = out.width(), h = out.height();
    const int span = std::max(1, w + h - 2);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (r.mask.at(x, y) == 0) continue;
        const int t = x + y;
        auto p = out.pixel(x, y);
        for (int c = 0; c < 3; ++c) {
          const int v = (base[c] * (span - t) + light[c] * t + span / 2) / span;
          p[c] = posterize(v + 32);
        }
        p[3] = 255;
      }
    }
    return out;
  }

  /// Edge overlay in the accent (last palette) colour plus seeded detail
  /// inside the mask, blended over the incoming image at weight = denoise.
  static Raster refine(const GenerationRequest& r) {
    const Rgb accent = r.style.palette.back();
    const std::int64_t wt = std::llround(r.denoise * 256.0);
    Raster out = r.padded_sketch;
    if (wt == 0) return out;
    const int w = out.width(), h = out.height();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (r.mask.at(x, y) == 0) continue;
        auto p = out.pixel(x, y);
        std::array<int, 4> target;
        if (r.edges.at(x, y) != 0) {
          target = {accent[0], accent[1], accent[2], 255};
        } else {
          const std::uint64_t hsh = splitmix64(r.seed ^ (static_cast<std::uint64_t>(y) << 32 | std::uint32_t(x)));
          const int d = static_cast<int>(hsh % 33) - 16;
          target = {std::clamp(p[0] + d, 0, 255), std::clamp(p[1] + d, 0, 255), std::clamp(p[2] + d, 0, 255), 255};
        }
        for (int c = 0; c < 4; ++c) {
          p[c] = static_cast<std::uint8_t>((p[c] * (256 - wt) + target[c] * wt + 128) >> 8);
        }
      }
    }
    return out;
  }

 private:
  MockBackendConfig cfg_;
};

// ---------------------------------------------------------------------------
// Orchestration

enum class PipelineStage : std::size_t { preprocess, mask, describe, style, coarse, refine, composite };

inline constexpr std::size_t kPipelineStageCount = 7;
inline constexpr std::array<std::string_view, kPipelineStageCount> kPipelineStageNames{
    "preprocess", "mask", "describe", "style", "coarse", "refine", "composite"};

using StageLatencies = std::array<double, kPipelineStageCount>;

struct PipelineConfig {
  MaskParams mask;
  int tile_size = 256;
  int work_size = 512;
  double denoise = 0.3;
  double coarse_denoise = 1.0;
  double context_expansion = 1.5;
  std::uint64_t seed = 0;
  std::vector<StyleProfile> styles = default_style_registry();
  bool keep_artifacts = true;
};

struct ResultPatch {
  BlobId blob_id = 0;
  IRect region;
  Raster pixels;  // RGBA, region size
  std::uint64_t revision_applied = 0;
};

struct PipelineArtifacts {
  Raster mask, feather, edges, coarse, refined;  // region coordinates
};

struct PipelineOutput {
  ResultPatch patch;
  ContextDescriptor descriptor;
  StyleProfile style;
  std::string prompt;
  double refine_denoise = 0.0;
  StageLatencies latency_ms{};
  PipelineArtifacts artifacts;
};

/// Canvas rectangle a blob's job may write: bbox grown by the stroke
/// half-thickness plus the feather band, aligned to the tile grid and clamped
/// to the canvas.
inline IRect patch_region(const BBox& blob_bbox, const PipelineConfig& cfg, int canvas_w, int canvas_h) {
  const double grow = cfg.mask.feather_width + cfg.mask.thickness / 2.0;
  return to_pixel_rect(blob_bbox.expanded(grow)).aligned(cfg.tile_size).intersect({0, 0, canvas_w, canvas_h});
}

/// Surrounding area shown to the describer: the bbox scaled about its centre.
inline IRect context_region(const BBox& blob_bbox, double factor, int canvas_w, int canvas_h) {
  const double cx = (blob_bbox.min_x + blob_bbox.max_x) / 2.0, cy = (blob_bbox.min_y + blob_bbox.max_y) / 2.0;
  const double hw = (blob_bbox.width() + 1.0) * factor / 2.0, hh = (blob_bbox.height() + 1.0) * factor / 2.0;
  const BBox b{cx - hw, cy - hh, cx + hw, cy + hh};
  return to_pixel_rect(b).intersect({0, 0, canvas_w, canvas_h});
}

struct PipelineInput {
  BlobId blob_id = 0;
  std::span<const Polyline> strokes;  // canvas coordinates
  std::optional<BBox> bbox;           // defaults to the stroke bbox
  const Raster* background = nullptr; // RGBA canvas
  const Raster* ink = nullptr;        // optional RGBA layer giving ink colours
  std::uint64_t revision = 0;
};

inline std::uint64_t blob_seed(std::uint64_t seed, BlobId blob) { return splitmix64(seed ^ splitmix64(blob)); }

namespace detail {

inline std::vector<Polyline> shift_all(std::span<const Polyline> strokes, double dx, double dy) {
  std::vector<Polyline> out;
  out.reserve(strokes.size());
  for (const auto& s : strokes) out.push_back(s.translated(dx, dy));
  return out;
}

/// Ink coverage (alpha) over RGB taken from the ink layer, or black.
inline Raster ink_image(const Raster& coverage, const Raster* ink, int ox, int oy) {
  Raster out(coverage.width(), coverage.height(), 4);
  for (int y = 0; y < coverage.height(); ++y) {
    for (int x = 0; x < coverage.width(); ++x) {
      const auto a = coverage.at(x, y);
      if (a == 0) continue;
      auto p = out.pixel(x, y);
      if (ink) {
        const auto q = ink->pixel(x + ox, y + oy);
        p[0] = q[0], p[1] = q[1], p[2] = q[2];
      }
      p[3] = a;
    }
  }
  return out;
}

class StageClock {
 public:
  explicit StageClock(StageLatencies& out) : out_(out) {}
  void start() { t0_ = std::chrono::steady_clock::now(); }
  void stop(PipelineStage s, double extra_ms = 0.0) {
    const auto dt = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count();
    out_[static_cast<std::size_t>(s)] += dt + extra_ms;
  }

 private:
  StageLatencies& out_;
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace detail

inline PipelineOutput run_pipeline(const PipelineInput& in, Backend& backend, const Describer& describer,
                                   const PipelineConfig& cfg) {
  if (!in.background || in.background->empty() || in.background->channels() != 4) {
    throw Error(ErrorCode::InvalidArgument, "pipeline needs an RGBA canvas");
  }
  if (in.strokes.empty() ||
      std::all_of(in.strokes.begin(), in.strokes.end(), [](const Polyline& s) { return s.empty(); })) {
    throw Error(ErrorCode::EmptyInput, "blob has no strokes");
  }
  if (!(cfg.denoise >= 0.0 && cfg.denoise <= 1.0)) throw Error(ErrorCode::InvalidArgument, "denoise outside [0,1]");
  const Raster& canvas = *in.background;
  const int cw = canvas.width(), ch = canvas.height();

  PipelineOutput out;
  detail::StageClock clock(out.latency_ms);

  // preprocess
  clock.start();
  BBox bbox;
  for (const auto& s : in.strokes) bbox.extend(s.bbox());
  if (in.bbox) bbox.extend(*in.bbox);
  const IRect region = patch_region(bbox, cfg, cw, ch);
  if (region.empty()) throw Error(ErrorCode::OutOfBounds, "blob lies outside the canvas");
  const Raster bg = crop(canvas, region);
  const auto local = detail::shift_all(in.strokes, -region.x, -region.y);
  const Raster coverage = rasterize_strokes(local, cfg.mask.thickness, region.w, region.h);
  Raster sketch = bg;
  {
    const Raster ink = detail::ink_image(coverage, in.ink, region.x, region.y);
    for (std::size_t i = 0; i < coverage.data().size(); ++i) {
      if (coverage.data()[i] == 0) continue;
      for (int c = 0; c < 3; ++c) sketch.data()[4 * i + c] = ink.data()[4 * i + c];
      sketch.data()[4 * i + 3] = 255;
    }
  }
  const PaddedRaster padded_sketch = pad_to_aspect(sketch, 1.0);
  const PaddedRaster padded_bg = pad_to_aspect(bg, 1.0);
  const PaddingRecord& rec = padded_sketch.record;
  const int side = rec.padded_w;
  const auto padded_strokes = detail::shift_all(local, rec.left, rec.top);
  clock.stop(PipelineStage::preprocess);

  // mask
  clock.start();
  const MaskBundle bundle = build_mask(padded_strokes, cfg.mask, side, side);
  clock.stop(PipelineStage::mask);

  // describe
  clock.start();
  const IRect ctx = context_region(bbox, cfg.context_expansion, cw, ch);
  const auto ctx_strokes = detail::shift_all(in.strokes, -ctx.x, -ctx.y);
  const Raster ctx_cov = rasterize_strokes(ctx_strokes, cfg.mask.thickness, ctx.w, ctx.h);
  const Raster ctx_image = in.ink ? detail::ink_image(ctx_cov, in.ink, ctx.x, ctx.y) : ctx_cov;
  out.descriptor = describer.describe(ctx_image, ctx_strokes);
  clock.stop(PipelineStage::describe);

  // style
  clock.start();
  out.style = select_style(out.descriptor, cfg.styles);
  out.prompt = render_prompt(out.descriptor, out.style);
  clock.stop(PipelineStage::style);

  // coarse
  clock.start();
  const std::uint64_t seed = blob_seed(cfg.seed, in.blob_id);
  const int ws = cfg.work_size;
  GenerationRequest req;
  req.blob_id = in.blob_id;
  req.padded_sketch = resize_bilinear(padded_sketch.image, ws, ws);
  req.edges = resize_nearest(bundle.edges, ws, ws);
  req.mask = resize_nearest(bundle.mask, ws, ws);
  req.prompt = out.prompt;
  req.style = out.style;
  req.stage = GenerationStage::coarse;
  req.denoise = cfg.coarse_denoise;
  req.seed = seed;
  const auto check = [&](const GenerationResult& r) {
    if (r.image.width() != ws || r.image.height() != ws || r.image.channels() != 4) {
      throw Error(ErrorCode::BadResponse, "backend returned a " + std::to_string(r.image.width()) + "x" +
                                              std::to_string(r.image.height()) + " image");
    }
  };
  const GenerationResult coarse = backend.generate(req);
  check(coarse);
  clock.stop(PipelineStage::coarse, backend.virtual_time() ? coarse.latency_ms : 0.0);

  // refine
  clock.start();
  req.padded_sketch = coarse.image;
  req.stage = GenerationStage::refine;
  req.denoise = cfg.denoise;
  out.refine_denoise = req.denoise;
  const GenerationResult refined = backend.generate(req);
  check(refined);
  clock.stop(PipelineStage::refine, backend.virtual_time() ? refined.latency_ms : 0.0);

  // composite
  clock.start();
  const Raster generated = resize_bilinear(refined.image, side, side);
  const Raster blended = composite(padded_bg.image, generated, bundle);
  out.patch = {in.blob_id, region, remove_padding(blended, rec), in.revision};
  if (cfg.keep_artifacts) {
    out.artifacts.mask = remove_padding(bundle.mask, rec);
    out.artifacts.feather = remove_padding(bundle.feather, rec);
    out.artifacts.edges = remove_padding(bundle.edges, rec);
    out.artifacts.coarse = remove_padding(resize_bilinear(coarse.image, side, side), rec);
    out.artifacts.refined = remove_padding(generated, rec);
  }
  clock.stop(PipelineStage::composite);
  return out;
}

}  // namespace inkweave
