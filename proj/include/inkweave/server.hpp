#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "inkweave/pipeline.hpp"
#include "inkweave/session.hpp"

namespace inkweave {

struct ServerConfig {
  std::string host = "0.0.0.0";
  int port = 8080;
  SessionConfig session;
  std::size_t workers = 4;
  std::string backend = "mock";  // mock | http
  std::string backend_url;
  std::string describer_url;     // empty: heuristic describer
  double backend_timeout_ms = 30000.0;
  double mock_stage_ms = 400.0;
  bool mock_sleep = true;
  PipelineConfig pipeline;
  std::string styles;            // style registry JSON; empty: built-in
  std::string static_dir = "webclient";
  std::string record;            // event log written while serving
  std::string replay;            // event log replayed before serving
  std::size_t outbound_limit = 256;
  std::size_t queue_capacity = 1024;
  int max_retries = 1;
  double tick_ms = 25.0;
  double telemetry_log_ms = 10000.0;  // 0 disables the periodic log line
  int send_buffer = 0;                // SO_SNDBUF for client sockets; 0 keeps the OS default
};

/// One configurable value. Names are dashed; '.' and '_' in config-file
/// keys or flags are read as '-', so {"canvas": {"w": 512}}, "canvas.w"
/// and --canvas-w all name the same setting.
struct ServerSetting {
  std::string name;
  std::string help;
  std::function<void(ServerConfig&, const nlohmann::json&)> set;
};

const std::vector<ServerSetting>& server_settings();
std::string normalize_setting_name(std::string name);
/// Throws InvalidArgument for an unknown name or an ill-typed value.
void apply_setting(ServerConfig& cfg, const std::string& name, const nlohmann::json& value);
/// Flattens nested objects into dotted names and applies each value.
void apply_config_json(ServerConfig& cfg, const nlohmann::json& doc);
/// Throws UnreadableInput.
void load_config_file(ServerConfig& cfg, const std::string& path);
/// Flag text to JSON: numbers, booleans and JSON literals parse as such,
/// anything else is a string.
nlohmann::json flag_value(const std::string& text);

class Server {
 public:
  explicit Server(ServerConfig cfg);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving on background threads. Returns the bound port
  /// (useful with port 0). Throws BindFailure.
  unsigned short start();
  /// Blocks until stop() is called from another thread.
  void wait();
  void stop();

  const ServerConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace inkweave
