#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "inkweave/intent.hpp"

using namespace inkweave;

namespace {

Polyline circle(Point c, double r, int n, bool timed = false) {
  Polyline line({}, ContactId{1});
  for (int i = 0; i <= n; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n;
    const Point p{c.x + r * std::cos(a), c.y + r * std::sin(a)};
    if (timed) {
      line.append(p, i * 10.0);
    } else {
      line.append(p);
    }
  }
  return line;
}

StyleProfile style(std::string id, std::vector<std::string> kw) {
  return {id, id + " look", {{1, 2, 3}}, std::move(kw), ""};
}

}  // namespace

TEST(RenderPrompt, TemplateApplication) {
  ContextDescriptor d{{"round", "closed"}, Tone::vivid, "", 1.0};
  StyleProfile oil{"oil", "oil painting", {{0, 0, 0}}, {}, ""};
  EXPECT_EQ(render_prompt(d, oil), "closed, round, vivid, in oil painting style");
}

TEST(RenderPrompt, EmptyKeywords) {
  ContextDescriptor d{{}, Tone::calm, "", 0.0};
  StyleProfile s{"p", "pencil drawing", {{0, 0, 0}}, {}, ""};
  EXPECT_EQ(render_prompt(d, s), "calm, in pencil drawing style");
}

TEST(RenderPrompt, PermutationInvariant) {
  StyleProfile s{"p", "ink", {{0, 0, 0}}, {}, ""};
  std::vector<std::string> kw{"wide", "dense", "open", "red"};
  const auto base = render_prompt({kw, Tone::dark, "", 1}, s);
  std::sort(kw.begin(), kw.end());
  do {
    EXPECT_EQ(render_prompt({kw, Tone::dark, "", 1}, s), base);
  } while (std::next_permutation(kw.begin(), kw.end()));
}

TEST(SelectStyle, OverlapTieBreakAndDefault) {
  std::vector<StyleProfile> reg{style("a", {"x"}), style("b", {"round", "closed"}), style("c", {"round", "closed", "q"}),
                                style("d", {"wide"})};
  EXPECT_EQ(select_style({{"wide"}, Tone::calm, "", 1}, reg).style_id, "d");
  EXPECT_EQ(select_style({{"nothing"}, Tone::calm, "", 1}, reg).style_id, "a");
  EXPECT_EQ(select_style({{"closed", "round"}, Tone::calm, "", 1}, reg).style_id, "b");
  EXPECT_THROW(select_style({{"x"}, Tone::calm, "", 1}, std::span<const StyleProfile>{}), Error);
}

TEST(SelectStyle, EveryDefaultProfileIsSelectable) {
  const auto reg = default_style_registry();
  validate_registry(reg);
  for (const auto& s : reg) {
    ContextDescriptor d{s.match_keywords, Tone::calm, "", 1};
    EXPECT_EQ(select_style(d, reg).style_id, s.style_id);
    std::reverse(d.keywords.begin(), d.keywords.end());
    EXPECT_EQ(select_style(d, reg).style_id, s.style_id);
  }
}

TEST(Registry, JsonRoundTripAndValidation) {
  const auto reg = default_style_registry();
  nlohmann::json doc = reg;
  EXPECT_EQ(parse_style_registry(doc), reg);

  auto dup = doc;
  dup.push_back(doc[0]);
  EXPECT_THROW(parse_style_registry(dup), Error);
  auto nopal = doc;
  nopal[0]["palette"] = nlohmann::json::array();
  EXPECT_THROW(parse_style_registry(nopal), Error);
  EXPECT_THROW(parse_style_registry(nlohmann::json::array()), Error);

  const auto path = std::filesystem::temp_directory_path() / "inkweave_styles_test.json";
  {
    std::ofstream out(path);
    out << R"([{"style_id":"s","display_name":"S","palette":["#ff8000"],"match_keywords":["Round"]}])";
  }
  const auto loaded = load_style_registry(path);
  ASSERT_EQ(loaded.size(), 1u);
  EXPECT_EQ(loaded[0].palette[0], (Rgb{255, 128, 0}));
  EXPECT_EQ(loaded[0].match_keywords, std::vector<std::string>{"round"});
  std::filesystem::remove(path);
  EXPECT_THROW(load_style_registry(path), Error);
}

TEST(Describe, ClosedCircleIsRoundAndClosed) {
  const auto c = circle({50, 50}, 30, 64);
  // Recompute the features the test relies on directly.
  const double gap = distance(c.points().front(), c.points().back());
  const auto b = c.bbox();
  ASSERT_LE(gap, 6.0);
  ASSERT_GT(c.length(), 2.0 * std::max(6.0, 0.15 * std::hypot(b.width(), b.height())));
  const double aspect = (b.width() + 1) / (b.height() + 1);
  ASSERT_LT(aspect, 1.5);
  ASSERT_GT(aspect, 1.0 / 1.5);

  std::vector<Polyline> strokes{c};
  const Raster img = rasterize_strokes(strokes, 3, 100, 100);
  const auto d = HeuristicDescriber().describe(img, strokes);
  EXPECT_TRUE(std::count(d.keywords.begin(), d.keywords.end(), "round"));
  EXPECT_TRUE(std::count(d.keywords.begin(), d.keywords.end(), "closed"));
  EXPECT_TRUE(std::is_sorted(d.keywords.begin(), d.keywords.end()));
  EXPECT_FALSE(d.prompt.empty());
  EXPECT_GE(d.confidence, 0.0);
  EXPECT_LE(d.confidence, 1.0);
}

TEST(Describe, OpenWideStroke) {
  std::vector<Polyline> strokes{Polyline({{5, 40}, {60, 45}, {120, 40}})};
  const Raster img = rasterize_strokes(strokes, 2, 128, 64);
  const auto d = HeuristicDescriber().describe(img, strokes);
  EXPECT_TRUE(std::count(d.keywords.begin(), d.keywords.end(), "wide"));
  EXPECT_TRUE(std::count(d.keywords.begin(), d.keywords.end(), "open"));
  EXPECT_TRUE(std::count(d.keywords.begin(), d.keywords.end(), "sparse"));
  EXPECT_EQ(d.tone, Tone::calm);
}

TEST(Describe, EmptyRasterThrows) {
  try {
    HeuristicDescriber().describe(Raster{}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(Describe, Deterministic) {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(0, 99);
  std::vector<Polyline> strokes;
  for (int s = 0; s < 4; ++s) {
    Polyline line({}, ContactId{std::uint64_t(s)});
    for (int i = 0; i < 20; ++i) line.append({u(rng), u(rng)}, i * (5.0 + s));
    strokes.push_back(line);
  }
  const Raster img = rasterize_strokes(strokes, 2, 100, 100);
  HeuristicDescriber h;
  EXPECT_EQ(h.describe(img, strokes), h.describe(img, strokes));
}

TEST(Describe, HueBucketAndDarkTone) {
  std::vector<Polyline> strokes{circle({32, 32}, 20, 48)};
  const Raster gray = rasterize_strokes(strokes, 3, 64, 64);
  auto paint = [&](std::array<std::uint8_t, 3> rgb) {
    Raster img(64, 64, 4);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (gray.at(x, y)) {
          auto p = img.pixel(x, y);
          p[0] = rgb[0], p[1] = rgb[1], p[2] = rgb[2], p[3] = 255;
        }
    return img;
  };
  const auto red = HeuristicDescriber().describe(paint({220, 20, 30}), strokes);
  EXPECT_TRUE(std::count(red.keywords.begin(), red.keywords.end(), "red"));
  EXPECT_NE(red.tone, Tone::dark);
  const auto navy = HeuristicDescriber().describe(paint({10, 10, 80}), strokes);
  EXPECT_TRUE(std::count(navy.keywords.begin(), navy.keywords.end(), "blue"));
  EXPECT_EQ(navy.tone, Tone::dark);
  // Gray ink carries no hue.
  const auto plain = HeuristicDescriber().describe(paint({90, 90, 90}), strokes);
  for (const char* h : {"red", "yellow", "green", "cyan", "blue", "magenta"})
    EXPECT_FALSE(std::count(plain.keywords.begin(), plain.keywords.end(), h));
}

TEST(Describe, ToneFollowsSpeedVariance) {
  // Constant speed -> zero variance -> calm.
  std::vector<Polyline> steady{circle({50, 50}, 30, 64, true)};
  const Raster img = rasterize_strokes(steady, 2, 100, 100);
  HeuristicDescriber h;
  EXPECT_EQ(h.describe(img, steady).tone, Tone::calm);

  // Alternating slow/fast segments: recompute the variance here.
  Polyline jerky({}, ContactId{2});
  double t = 0;
  for (int i = 0; i < 40; ++i) {
    jerky.append({10.0 + 2.0 * i, 50.0}, t);
    t += (i % 2 == 0) ? 20.0 : 2.0;  // 0.1 px/ms vs 1 px/ms
  }
  std::vector<Polyline> js{jerky};
  const auto f = measure_sketch(img, js);
  ASSERT_TRUE(f.speed_variance);
  // Speeds split 20/19 between 0.1 and 1.0 px/ms.
  const double mean = (20 * 0.1 + 19 * 1.0) / 39.0;
  const double var = (20 * (0.1 - mean) * (0.1 - mean) + 19 * (1.0 - mean) * (1.0 - mean)) / 39.0;
  EXPECT_NEAR(*f.speed_variance, var, 1e-9);
  EXPECT_EQ(h.describe(img, js).tone, var >= 0.25 ? Tone::vivid : Tone::playful);
}
