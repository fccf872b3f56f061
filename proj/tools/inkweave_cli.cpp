#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <pthread.h>

#include <CLI11.hpp>

#include "inkweave/batch.hpp"
#include "inkweave/http_adapters.hpp"
#include "inkweave/load_client.hpp"
#include "inkweave/loadsim.hpp"
#include "inkweave/server.hpp"

using namespace inkweave;
namespace fs = std::filesystem;

namespace {

struct PipelineArgs {
  std::vector<std::string> inputs;
  std::string out = "out";
  std::uint64_t seed = 0;
  double thickness = MaskParams{}.thickness;
  double feather_width = MaskParams{}.feather_width;
  double denoise = 0.3;
  int work_size = 512;
  int tile_size = 256;
  std::string styles;
  std::string backend = "mock";
  std::string backend_url;
  double mock_stage_ms = 400.0;
  int threshold = SketchTrace{}.luminance_threshold;
  std::size_t max_points = SketchTrace{}.max_points;
};

int run_pipeline_cmd(const PipelineArgs& a) {
  PipelineConfig cfg;
  cfg.seed = a.seed;
  cfg.mask.thickness = a.thickness;
  cfg.mask.feather_width = a.feather_width;
  cfg.denoise = a.denoise;
  cfg.work_size = a.work_size;
  cfg.tile_size = a.tile_size;
  if (!a.styles.empty()) cfg.styles = load_style_registry(a.styles);
  std::unique_ptr<Backend> backend;
  if (a.backend == "http") {
    if (a.backend_url.empty()) throw Error(ErrorCode::InvalidArgument, "--backend http needs --backend-url");
    backend = std::make_unique<HttpBackend>(HttpBackendConfig{a.backend_url});
  } else {
    backend = std::make_unique<MockBackend>(MockBackendConfig{a.mock_stage_ms, a.mock_stage_ms, false, 1});
  }
  HeuristicDescriber describer;
  for (const auto& input : a.inputs) {
    const fs::path out = a.inputs.size() == 1 ? fs::path(a.out) : fs::path(a.out) / fs::path(input).stem();
    const auto r = run_batch(input, out, *backend, describer, cfg, {a.threshold, a.max_points});
    std::cout << input << " -> " << out.string() << "  style=" << r.output.style.style_id << "  region="
              << r.report["region"].dump() << "  total_ms=" << r.report["total_ms"].get<double>() << "\n";
  }
  return 0;
}

struct LoadArgs {
  std::string mode = "virtual";
  std::string timing = "measured";
  int users = 8;
  int strokes = 6;
  std::optional<double> duration_ms;
  std::size_t workers = 4;
  double stage_ms = 400.0;
  int canvas_w = 2048;
  int canvas_h = 1024;
  std::uint64_t seed = 1;
  std::string url = "127.0.0.1:8080";
  std::string out;
};

int run_load_cmd(const LoadArgs& a) {
  const double period = LoadConfig{}.stroke_ms + LoadConfig{}.gap_ms;
  const int strokes = a.duration_ms ? std::max(1, int(*a.duration_ms / period)) : a.strokes;
  nlohmann::json report;
  if (a.mode == "wall") {
    WallLoadConfig c;
    const auto colon = a.url.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--url must be host:port");
    c.host = a.url.substr(0, colon);
    c.port = static_cast<unsigned short>(std::stoi(a.url.substr(colon + 1)));
    c.users = a.users;
    c.strokes_per_user = strokes;
    c.seed = a.seed;
    report = run_wall_load(c);
  } else {
    LoadConfig c;
    c.users = a.users;
    c.strokes_per_user = strokes;
    c.workers = a.workers;
    c.stage_ms = a.stage_ms;
    c.canvas_w = a.canvas_w;
    c.canvas_h = a.canvas_h;
    c.seed = a.seed;
    c.timing = a.timing == "fixed" ? LoadTiming::fixed : LoadTiming::measured;
    report = to_json_report(run_load(c));
  }
  const auto text = report.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(a.out);
    if (!(f << text)) throw Error(ErrorCode::WriteFailure, "cannot write " + a.out);
  }
  return 0;
}

int run_serve_cmd(const std::string& config, const std::map<std::string, std::string>& flags) {
  ServerConfig cfg;
  if (!config.empty()) load_config_file(cfg, config);
  for (const auto& [name, value] : flags) apply_setting(cfg, name, flag_value(value));

  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  Server server(cfg);
  const auto port = server.start();
  std::cerr << "inkweave: serving " << cfg.session.width << "x" << cfg.session.height << " canvas on http://"
            << cfg.host << ":" << port << " (ws /ws, " << cfg.workers << " workers, backend " << cfg.backend
            << ")" << std::endl;
  int sig = 0;
  sigwait(&stop_signals, &sig);
  std::cerr << "inkweave: signal " << sig << ", shutting down" << std::endl;
  server.stop();
  return 0;
}

/// --canvas.w and --canvas_w mean --canvas-w.
std::vector<std::string> normalize_flags(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a.rfind("--", 0) == 0) {
      const auto eq = a.find('=');
      std::string name = a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
      a = "--" + normalize_setting_name(name) + (eq == std::string::npos ? "" : a.substr(eq));
    }
    args.push_back(std::move(a));
  }
  std::reverse(args.begin(), args.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inkweave: collaborative sketch-to-image canvas", "inkweave"};
  app.require_subcommand(1);

  PipelineArgs pa;
  auto* pipeline = app.add_subcommand("pipeline", "run the generation pipeline on sketch PNGs");
  pipeline->add_option("inputs", pa.inputs, "sketch PNG files")->required();
  pipeline->add_option("-o,--out", pa.out, "output directory (one subdirectory per input when several)");
  pipeline->add_option("--seed", pa.seed, "generation seed");
  pipeline->add_option("--thickness", pa.thickness, "mask stroke thickness in px");
  pipeline->add_option("--feather-width", pa.feather_width, "feather band width in px");
  pipeline->add_option("--denoise", pa.denoise, "refine-stage denoise strength")->check(CLI::Range(0.0, 1.0));
  pipeline->add_option("--work-size", pa.work_size, "generation resolution in px");
  pipeline->add_option("--tile-size", pa.tile_size, "tile edge the patch region aligns to");
  pipeline->add_option("--styles", pa.styles, "style registry JSON");
  pipeline->add_option("--backend", pa.backend, "mock or http")->check(CLI::IsMember({"mock", "http"}));
  pipeline->add_option("--backend-url", pa.backend_url, "generator endpoint for --backend http");
  pipeline->add_option("--mock-stage-ms", pa.mock_stage_ms, "scripted mock latency per stage (not slept)");
  pipeline->add_option("--threshold", pa.threshold, "luminance below which a pixel is ink");
  pipeline->add_option("--max-points", pa.max_points, "cap on ink points fed to the hull");

  LoadArgs la;
  auto* load = app.add_subcommand("load", "drive synthetic users and report end-to-end latency");
  load->add_option("--mode", la.mode, "virtual (embedded, deterministic clock) or wall (live server)")
      ->check(CLI::IsMember({"virtual", "wall"}));
  load->add_option("--timing", la.timing, "virtual mode: measured or fixed non-generation stage costs")
      ->check(CLI::IsMember({"measured", "fixed"}));
  load->add_option("--users", la.users, "synthetic users");
  load->add_option("--strokes", la.strokes, "strokes per user");
  load->add_option("--duration-ms", la.duration_ms, "script length; overrides --strokes");
  load->add_option("--workers", la.workers, "virtual mode: generation workers");
  load->add_option("--stage-ms", la.stage_ms, "virtual mode: mock delay per generation stage");
  load->add_option("--canvas-w", la.canvas_w, "virtual mode: canvas width");
  load->add_option("--canvas-h", la.canvas_h, "virtual mode: canvas height");
  load->add_option("--seed", la.seed, "stroke script seed");
  load->add_option("--url", la.url, "wall mode: server host:port");
  load->add_option("-o,--out", la.out, "write the JSON report here instead of stdout");

  std::string config;
  std::map<std::string, std::string> flags;
  auto* serve = app.add_subcommand("serve", "run the WebSocket/HTTP server");
  serve->add_option("--config", config, "JSON config; flags override its values")->check(CLI::ExistingFile);
  for (const auto& s : server_settings()) {
    serve->add_option_function<std::string>(
        "--" + s.name, [&flags, name = s.name](const std::string& v) { flags[name] = v; }, s.help);
  }

  try {
    app.parse(normalize_flags(argc, argv));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    if (*pipeline) return run_pipeline_cmd(pa);
    if (*load) return run_load_cmd(la);
    return run_serve_cmd(config, flags);
  } catch (const Error& e) {
    std::cerr << "inkweave: " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "inkweave: " << e.what() << std::endl;
    return 1;
  }
}
