#pragma once

// Offline pipeline runs on sketch images: one blob per input file, every
// intermediate written as PNG beside a stage-latency JSON.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "inkweave/pipeline.hpp"
#include "inkweave/png_io.hpp"

namespace inkweave {

struct SketchTrace {
  int luminance_threshold = 160;  // darker than this over white is ink
  std::size_t max_points = 600;
};

/// Ink pixels of a sketch as single-point strokes. When there are more than
/// max_points, keeps one pixel per s x s cell with the smallest s that fits.
inline std::vector<Polyline> strokes_from_sketch(const Raster& sketch, const SketchTrace& opt = {}) {
  const Raster rgba = to_rgba(sketch);
  const int w = rgba.width(), h = rgba.height();
  std::vector<Point> ink;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto p = rgba.pixel(x, y);
      const int a = p[3];
      // Composite over white, then Rec. 601 luma in integers.
      const int r = (p[0] * a + 255 * (255 - a)) / 255, g = (p[1] * a + 255 * (255 - a)) / 255,
                b = (p[2] * a + 255 * (255 - a)) / 255;
      if ((299 * r + 587 * g + 114 * b) / 1000 < opt.luminance_threshold) ink.push_back({double(x), double(y)});
    }
  }
  if (ink.empty()) throw Error(ErrorCode::EmptyInput, "sketch has no ink");
  for (int s = 1; ink.size() > opt.max_points; ++s) {
    std::vector<Point> kept;
    std::vector<bool> seen(std::size_t((w + s - 1) / s) * std::size_t((h + s - 1) / s), false);
    const int cols = (w + s - 1) / s;
    for (const auto& p : ink) {
      const std::size_t cell = std::size_t(int(p.y) / s) * std::size_t(cols) + std::size_t(int(p.x) / s);
      if (seen[cell]) continue;
      seen[cell] = true;
      kept.push_back(p);
    }
    if (kept.size() <= opt.max_points) {
      ink = std::move(kept);
      break;
    }
  }
  std::vector<Polyline> out;
  out.reserve(ink.size());
  for (const auto& p : ink) out.emplace_back(std::vector<Point>{p});
  return out;
}

struct BatchResult {
  PipelineOutput output;
  std::vector<std::filesystem::path> files;
  nlohmann::json report;
};

namespace detail {

/// Opaque copy of an RGBA image flattened over white.
inline Raster over_white(const Raster& rgba) {
  Raster out = rgba;
  for (std::size_t i = 0; i < out.data().size(); i += 4) {
    const int a = out.data()[i + 3];
    for (int c = 0; c < 3; ++c) out.data()[i + c] = std::uint8_t((out.data()[i + c] * a + 255 * (255 - a) + 127) / 255);
    out.data()[i + 3] = 255;
  }
  return out;
}

inline Raster on_canvas(const Raster& part, const IRect& region, int w, int h) {
  Raster out(w, h, part.channels());
  paste(out, part, region.x, region.y);
  return out;
}

}  // namespace detail

/// Writes mask, feather and edges (canvas-sized), coarse and refined
/// (patch region), composite (canvas) and latency.json into out_dir.
/// Throws UnreadableInput, WriteFailure.
inline BatchResult run_batch(const std::filesystem::path& input, const std::filesystem::path& out_dir, Backend& backend,
                             const Describer& describer, PipelineConfig cfg, const SketchTrace& trace = {}) {
  const Raster sketch = to_rgba(read_png(input));
  const Raster background = detail::over_white(sketch);
  const auto strokes = strokes_from_sketch(sketch, trace);
  cfg.keep_artifacts = true;
  PipelineInput in{1, strokes, std::nullopt, &background, &background, 0};
  BatchResult res;
  res.output = run_pipeline(in, backend, describer, cfg);
  const auto& out = res.output;
  const auto& a = out.artifacts;
  const IRect& region = out.patch.region;
  const int w = background.width(), h = background.height();

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::WriteFailure, "cannot create " + out_dir.string() + ": " + ec.message());
  Raster composed = background;
  paste(composed, out.patch.pixels, region.x, region.y);
  const std::vector<std::pair<const char*, Raster>> images{
      {"mask.png", detail::on_canvas(a.mask, region, w, h)},
      {"feather.png", detail::on_canvas(a.feather, region, w, h)},
      {"edges.png", detail::on_canvas(a.edges, region, w, h)},
      {"coarse.png", a.coarse},
      {"refined.png", a.refined},
      {"composite.png", composed},
  };
  for (const auto& [name, img] : images) {
    write_png(out_dir / name, img);
    res.files.push_back(out_dir / name);
  }

  nlohmann::json stages;
  for (std::size_t i = 0; i < kPipelineStageCount; ++i) stages[std::string(kPipelineStageNames[i])] = out.latency_ms[i];
  double total = 0.0;
  for (double ms : out.latency_ms) total += ms;
  res.report = {
      {"input", input.filename().string()},
      {"canvas", {w, h}},
      {"region", {{"x", region.x}, {"y", region.y}, {"w", region.w}, {"h", region.h}}},
      {"stroke_points", strokes.size()},
      {"seed", cfg.seed},
      {"denoise", out.refine_denoise},
      {"coarse_denoise", cfg.coarse_denoise},
      {"thickness", cfg.mask.thickness},
      {"feather_width", cfg.mask.feather_width},
      {"work_size", cfg.work_size},
      {"backend", backend.name()},
      {"virtual_backend_time", backend.virtual_time()},
      {"descriptor",
       {{"keywords", out.descriptor.keywords},
        {"tone", to_string(out.descriptor.tone)},
        {"confidence", out.descriptor.confidence}}},
      {"style", out.style.style_id},
      {"prompt", out.prompt},
      {"stages_ms", stages},
      {"total_ms", total},
  };
  const auto path = out_dir / "latency.json";
  std::ofstream f(path);
  if (!(f << res.report.dump(2) << '\n')) throw Error(ErrorCode::WriteFailure, "cannot write " + path.string());
  res.files.push_back(path);
  return res;
}

}  // namespace inkweave
