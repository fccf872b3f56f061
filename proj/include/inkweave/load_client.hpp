#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace inkweave {

/// Synthetic users drawing against a live server over WebSocket.
struct WallLoadConfig {
  std::string host = "127.0.0.1";
  unsigned short port = 8080;
  int users = 8;
  int strokes_per_user = 6;
  int cell = 512;
  double stroke_ms = 320.0;
  double point_every_ms = 16.0;
  double gap_ms = 3000.0;
  double user_offset_ms = 40.0;
  double drain_timeout_ms = 30000.0;  // wait for outstanding patches after the script
  std::uint64_t seed = 1;
};

/// End-to-end latency is stroke_end sent to result_patch received, per
/// blob. Stage breakdown comes from the server's /telemetry. Throws
/// ConnectFailure.
nlohmann::json run_wall_load(const WallLoadConfig& cfg);

}  // namespace inkweave
