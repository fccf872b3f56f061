#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "inkweave/png_io.hpp"

namespace fs = std::filesystem;
using namespace inkweave;

namespace {

int sh(const std::string& args) {
  const int rc = std::system((std::string(INKWEAVE_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path fixture() {
  const auto dir = fs::temp_directory_path() / "inkweave_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  Raster img = Raster::rgba(160, 120, {255, 255, 255, 255});
  const Raster cov = rasterize_strokes(std::vector<Polyline>{Polyline({{30, 30}, {120, 40}, {70, 95}})}, 4.0, 160, 120);
  for (std::size_t i = 0; i < cov.data().size(); ++i)
    if (cov.data()[i] > 127) img.data()[4 * i] = img.data()[4 * i + 1] = img.data()[4 * i + 2] = 0;
  write_png(dir / "sketch.png", img);
  return dir;
}

}  // namespace

TEST(Cli, PipelineIsByteIdenticalUnderSeed) {
  const auto dir = fixture();
  const auto in = (dir / "sketch.png").string();
  ASSERT_EQ(sh("pipeline " + in + " --seed 7 --work-size 128 -o " + (dir / "a").string()), 0);
  ASSERT_EQ(sh("pipeline " + in + " --seed 7 --work-size 128 -o " + (dir / "b").string()), 0);
  for (const char* f : {"mask.png", "feather.png", "edges.png", "coarse.png", "refined.png", "composite.png"}) {
    EXPECT_FALSE(slurp(dir / "a" / f).empty()) << f;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  const auto j = nlohmann::json::parse(slurp(dir / "a" / "latency.json"));
  EXPECT_EQ(j["denoise"].get<double>(), 0.3);
}

TEST(Cli, SeveralInputsGetTheirOwnDirectories) {
  const auto dir = fixture();
  fs::copy_file(dir / "sketch.png", dir / "second.png");
  ASSERT_EQ(sh("pipeline " + (dir / "sketch.png").string() + " " + (dir / "second.png").string() +
               " --work-size 64 --denoise 0 -o " + (dir / "many").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "many" / "sketch" / "composite.png"));
  EXPECT_TRUE(fs::exists(dir / "many" / "second" / "latency.json"));
  EXPECT_EQ(slurp(dir / "many" / "second" / "coarse.png"), slurp(dir / "many" / "second" / "refined.png"));
}

TEST(Cli, ErrorsExitNonZero) {
  const auto dir = fixture();
  EXPECT_EQ(sh("pipeline /nonexistent/sketch.png -o " + (dir / "x").string()), 1);
  EXPECT_NE(sh("pipeline"), 0);
  EXPECT_NE(sh("bogus"), 0);
  EXPECT_EQ(sh("serve --workers 0"), 1);
  EXPECT_NE(sh("pipeline " + (dir / "sketch.png").string() + " --denoise 1.5"), 0);
}

TEST(Cli, FixedTimingLoadReportIsReproducible) {
  const auto dir = fixture();
  const auto a = (dir / "a.json").string(), b = (dir / "b.json").string();
  ASSERT_EQ(sh("load --timing fixed --users 4 --strokes 2 -o " + a), 0);
  ASSERT_EQ(sh("load --timing fixed --users 4 --strokes 2 -o " + b), 0);
  EXPECT_EQ(slurp(a), slurp(b));
  const auto j = nlohmann::json::parse(slurp(a));
  EXPECT_EQ(j["blobs"], 8);
  EXPECT_EQ(j["timing"], "fixed");
}
