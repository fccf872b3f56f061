#pragma once

// Contextual intent: a descriptor of what the sketch seems to be about, the
// style registry it selects from, and the prompt handed to generators.
//
// The describer is a contract. HeuristicDescriber derives keywords from
// measurable stroke features; HttpDescriber (http_describer.hpp) asks an
// external captioning service and falls back to the heuristic.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <cctype>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "inkweave/error.hpp"
#include "inkweave/geometry.hpp"
#include "inkweave/raster.hpp"

namespace inkweave {

enum class Tone { calm, vivid, dark, playful };

constexpr std::string_view to_string(Tone t) {
  switch (t) {
    case Tone::calm: return "calm";
    case Tone::vivid: return "vivid";
    case Tone::dark: return "dark";
    case Tone::playful: return "playful";
  }
  return "calm";
}

inline std::optional<Tone> tone_from_string(std::string_view s) {
  for (Tone t : {Tone::calm, Tone::vivid, Tone::dark, Tone::playful})
    if (to_string(t) == s) return t;
  return std::nullopt;
}

struct ContextDescriptor {
  std::vector<std::string> keywords;  // lowercase, sorted, unique
  Tone tone = Tone::calm;
  std::string prompt;
  double confidence = 0.0;

  friend bool operator==(const ContextDescriptor&, const ContextDescriptor&) = default;
};

using Rgb = std::array<std::uint8_t, 3>;

struct StyleProfile {
  std::string style_id;
  std::string display_name;
  std::vector<Rgb> palette;
  std::vector<std::string> match_keywords;
  std::string backend_hint;

  friend bool operator==(const StyleProfile&, const StyleProfile&) = default;
};

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

/// Lowercases, sorts and deduplicates.
inline std::vector<std::string> normalize_keywords(std::vector<std::string> words) {
  for (auto& w : words) w = to_lower(std::move(w));
  std::erase_if(words, [](const std::string& w) { return w.empty(); });
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  return words;
}

/// "<keywords sorted, ', '>, <tone>, in <display_name> style"
inline std::string render_prompt(const ContextDescriptor& desc, const StyleProfile& style) {
  std::string out;
  for (const auto& k : normalize_keywords(desc.keywords)) {
    out += k;
    out += ", ";
  }
  out += to_string(desc.tone);
  out += ", in ";
  out += style.display_name;
  out += " style";
  return out;
}

/// Prompt fragment carried by the descriptor itself (no style yet).
inline std::string descriptor_prompt(const ContextDescriptor& desc) {
  std::string out;
  for (const auto& k : desc.keywords) {
    out += k;
    out += ", ";
  }
  out += to_string(desc.tone);
  return out;
}

/// Profile with the largest keyword overlap; ties and zero overlap resolve to
/// the earliest registry entry.
inline const StyleProfile& select_style(const ContextDescriptor& desc, std::span<const StyleProfile> registry) {
  if (registry.empty()) throw Error(ErrorCode::EmptyRegistry, "style registry is empty");
  const std::set<std::string> have(desc.keywords.begin(), desc.keywords.end());
  std::size_t best = 0;
  std::size_t best_overlap = 0;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const std::set<std::string> want(registry[i].match_keywords.begin(), registry[i].match_keywords.end());
    std::size_t overlap = 0;
    for (const auto& k : want) overlap += have.count(k);
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = i;
    }
  }
  return registry[best];
}

// ---------------------------------------------------------------------------
// Registry (de)serialization

inline void to_json(nlohmann::json& j, const StyleProfile& s) {
  nlohmann::json palette = nlohmann::json::array();
  for (const auto& c : s.palette) palette.push_back({c[0], c[1], c[2]});
  j = {{"style_id", s.style_id},
       {"display_name", s.display_name},
       {"palette", palette},
       {"match_keywords", s.match_keywords},
       {"backend_hint", s.backend_hint}};
}

inline void from_json(const nlohmann::json& j, StyleProfile& s) {
  s.style_id = j.at("style_id").get<std::string>();
  s.display_name = j.at("display_name").get<std::string>();
  s.palette.clear();
  for (const auto& c : j.at("palette")) {
    if (c.is_string()) {
      // "#rrggbb"
      const auto hex = c.get<std::string>();
      if (hex.size() != 7 || hex[0] != '#') throw Error(ErrorCode::InvalidArgument, "bad colour " + hex);
      const auto v = std::stoul(hex.substr(1), nullptr, 16);
      s.palette.push_back({std::uint8_t(v >> 16), std::uint8_t(v >> 8), std::uint8_t(v)});
    } else {
      s.palette.push_back({c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>(), c.at(2).get<std::uint8_t>()});
    }
  }
  s.match_keywords = normalize_keywords(j.value("match_keywords", std::vector<std::string>{}));
  s.backend_hint = j.value("backend_hint", std::string{});
}

inline void validate_registry(std::span<const StyleProfile> registry) {
  if (registry.empty()) throw Error(ErrorCode::EmptyRegistry, "style registry is empty");
  std::set<std::string> ids;
  for (const auto& s : registry) {
    if (s.palette.empty()) throw Error(ErrorCode::InvalidArgument, "style " + s.style_id + " has no palette");
    if (!ids.insert(s.style_id).second) throw Error(ErrorCode::InvalidArgument, "duplicate style id " + s.style_id);
  }
}

inline std::vector<StyleProfile> parse_style_registry(const nlohmann::json& doc) {
  if (!doc.is_array()) throw Error(ErrorCode::InvalidArgument, "style registry must be a JSON array");
  auto registry = doc.get<std::vector<StyleProfile>>();
  validate_registry(registry);
  return registry;
}

inline std::vector<StyleProfile> load_style_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::UnreadableInput, "cannot open style registry " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::UnreadableInput, "style registry is not JSON: " + std::string(e.what()));
  }
  return parse_style_registry(doc);
}

/// Built-in registry used when no file is configured. The first entry is
/// the default style.
inline std::vector<StyleProfile> default_style_registry() {
  return {
      {"pencil", "pencil drawing", {{58, 58, 64}, {120, 118, 112}, {196, 192, 182}}, {"open", "sparse", "tall"}, "lora:pencil"},
      {"oil", "oil painting", {{142, 68, 36}, {214, 160, 62}, {46, 84, 122}, {236, 220, 180}}, {"closed", "dense", "wide"}, "lora:oil"},
      {"ornament", "Christmas ornament", {{190, 30, 45}, {24, 120, 60}, {232, 190, 60}}, {"closed", "green", "red", "round"}, "lora:ornament"},
      {"watercolor", "watercolor", {{86, 160, 200}, {150, 200, 170}, {240, 190, 200}}, {"balanced", "blue", "cyan", "open"}, "lora:watercolor"},
  };
}

// ---------------------------------------------------------------------------
// Describers

class Describer {
 public:
  virtual ~Describer() = default;
  virtual ContextDescriptor describe(const Raster& blob_image, std::span<const Polyline> strokes) const = 0;
};

/// Feature thresholds of the heuristic describer. Fixed so outputs are stable.
struct DescriberConfig {
  double wide_ratio = 1.5;             // bbox w/h >= this -> "wide", <= 1/this -> "tall"
  double sparse_below = 0.15;          // ink fraction terciles
  double dense_from = 0.35;
  double closure_px = 6.0;             // endpoint gap that still counts as closed
  double closure_fraction = 0.15;      // ... or this fraction of the stroke bbox diagonal
  int saturation_min = 48;             // max-min channel spread for a coloured pixel
  double colour_fraction = 0.05;       // share of ink that must be coloured
  double calm_speed_var_below = 0.05;  // (px/ms)^2 speed-variance terciles
  double vivid_speed_var_from = 0.25;
  int dark_value_below = 96;           // dominant colour value under this reads as dark
};

struct SketchFeatures {
  double aspect = 1.0;
  double ink_fraction = 0.0;
  bool closed = false;
  std::optional<std::string> hue;
  int hue_value = 0;
  std::optional<double> speed_variance;
};

namespace detail {

inline bool stroke_is_closed(const Polyline& s, const DescriberConfig& cfg) {
  if (s.size() < 3) return false;
  const auto b = s.bbox();
  const double diag = std::hypot(b.width(), b.height());
  const double gap = distance(s.points().front(), s.points().back());
  const double tol = std::max(cfg.closure_px, cfg.closure_fraction * diag);
  return gap <= tol && s.length() > 2.0 * tol;
}

inline std::string_view hue_bucket(int r, int g, int b) {
  const int mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  double h;
  if (mx == r) {
    h = 60.0 * std::fmod((g - b) / d, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / d + 2.0);
  } else {
    h = 60.0 * ((r - g) / d + 4.0);
  }
  if (h < 0) h += 360.0;
  static constexpr std::array<std::string_view, 6> names{"red", "yellow", "green", "cyan", "blue", "magenta"};
  return names[static_cast<std::size_t>(std::fmod(h + 30.0, 360.0) / 60.0) % 6];
}

}  // namespace detail

inline SketchFeatures measure_sketch(const Raster& image, std::span<const Polyline> strokes,
                                     const DescriberConfig& cfg = {}) {
  if (image.empty()) throw Error(ErrorCode::EmptyInput, "blob image is empty");
  SketchFeatures f;

  BBox box;
  for (const auto& s : strokes) box.extend(s.bbox());
  if (box.empty()) {
    box = BBox{0, 0, double(image.width() - 1), double(image.height() - 1)};
  }
  f.aspect = (box.width() + 1.0) / (box.height() + 1.0);

  std::size_t ink = 0, coloured = 0;
  std::array<std::size_t, 6> hue_counts{};
  std::array<std::uint64_t, 6> hue_value_sum{};
  static constexpr std::array<std::string_view, 6> names{"red", "yellow", "green", "cyan", "blue", "magenta"};
  const std::size_t n = static_cast<std::size_t>(image.width()) * image.height();
  for (std::size_t i = 0; i < n; ++i) {
    if (image.channels() == 1) {
      ink += image.data()[i] != 0;
      continue;
    }
    const auto* p = image.data().data() + 4 * i;
    if (p[3] == 0) continue;
    ++ink;
    const int mx = std::max({p[0], p[1], p[2]}), mn = std::min({p[0], p[1], p[2]});
    if (mx - mn < cfg.saturation_min) continue;
    ++coloured;
    const auto name = detail::hue_bucket(p[0], p[1], p[2]);
    const auto idx = static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
    ++hue_counts[idx];
    hue_value_sum[idx] += mx;
  }
  f.ink_fraction = static_cast<double>(ink) / static_cast<double>(n);
  if (ink > 0 && static_cast<double>(coloured) >= cfg.colour_fraction * static_cast<double>(ink)) {
    const auto best = static_cast<std::size_t>(std::max_element(hue_counts.begin(), hue_counts.end()) - hue_counts.begin());
    f.hue = std::string(names[best]);
    f.hue_value = static_cast<int>(hue_value_sum[best] / hue_counts[best]);
  }

  double closed_len = 0.0, total_len = 0.0;
  for (const auto& s : strokes) {
    const double len = std::max(s.length(), 1.0);
    total_len += len;
    if (detail::stroke_is_closed(s, cfg)) closed_len += len;
  }
  f.closed = total_len > 0.0 && closed_len * 2.0 >= total_len;

  std::vector<double> speeds;
  for (const auto& s : strokes) {
    if (!s.timed()) continue;
    for (std::size_t i = 1; i < s.size(); ++i) {
      const double dt = s.times()[i] - s.times()[i - 1];
      if (dt > 0.0) speeds.push_back(distance(s.points()[i - 1], s.points()[i]) / dt);
    }
  }
  if (speeds.size() >= 2) {
    double mean = 0.0;
    for (double v : speeds) mean += v;
    mean /= static_cast<double>(speeds.size());
    double var = 0.0;
    for (double v : speeds) var += (v - mean) * (v - mean);
    f.speed_variance = var / static_cast<double>(speeds.size());
  }
  return f;
}

class HeuristicDescriber final : public Describer {
 public:
  explicit HeuristicDescriber(DescriberConfig cfg = {}) : cfg_(cfg) {}

  ContextDescriptor describe(const Raster& blob_image, std::span<const Polyline> strokes) const override {
    const auto f = measure_sketch(blob_image, strokes, cfg_);
    ContextDescriptor d;
    if (f.aspect >= cfg_.wide_ratio) {
      d.keywords.push_back("wide");
    } else if (f.aspect <= 1.0 / cfg_.wide_ratio) {
      d.keywords.push_back("tall");
    } else {
      d.keywords.push_back("round");
    }
    if (f.ink_fraction < cfg_.sparse_below) {
      d.keywords.push_back("sparse");
    } else if (f.ink_fraction < cfg_.dense_from) {
      d.keywords.push_back("balanced");
    } else {
      d.keywords.push_back("dense");
    }
    d.keywords.push_back(f.closed ? "closed" : "open");
    if (f.hue) d.keywords.push_back(*f.hue);
    d.keywords = normalize_keywords(std::move(d.keywords));

    if (f.hue && f.hue_value < cfg_.dark_value_below) {
      d.tone = Tone::dark;
    } else if (!f.speed_variance || *f.speed_variance < cfg_.calm_speed_var_below) {
      d.tone = Tone::calm;
    } else if (*f.speed_variance < cfg_.vivid_speed_var_from) {
      d.tone = Tone::playful;
    } else {
      d.tone = Tone::vivid;
    }
    d.confidence = (3.0 + (f.hue ? 1.0 : 0.0) + (f.speed_variance ? 1.0 : 0.0)) / 5.0;
    d.prompt = descriptor_prompt(d);
    return d;
  }

  const DescriberConfig& config() const { return cfg_; }

 private:
  DescriberConfig cfg_;
};

}  // namespace inkweave
