#pragma once

// WebSocket wire format: one JSON object per text frame, discriminated by
// "type". Pixel payloads are base64 PNG.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "inkweave/error.hpp"
#include "inkweave/raster.hpp"

namespace inkweave::proto {

inline constexpr const char* kProtocolVersion = "1.0";

/// "1", "1.0" and "1.7" share major version 1.
inline std::string major_version(const std::string& v) { return v.substr(0, v.find('.')); }

inline bool compatible(const std::string& client_version) {
  return !client_version.empty() && major_version(client_version) == major_version(kProtocolVersion);
}

// Client -> server.

struct Hello {
  std::string user;
  std::string protocol;
  friend bool operator==(const Hello&, const Hello&) = default;
};

enum class Phase { begin, point, end };

struct StrokeMsg {
  Phase phase = Phase::begin;
  std::uint64_t contact_id = 0;
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;
  friend bool operator==(const StrokeMsg&, const StrokeMsg&) = default;
};

struct Ping {
  friend bool operator==(const Ping&, const Ping&) = default;
};

using ClientMessage = std::variant<Hello, StrokeMsg, Ping>;

// Server -> client.

struct Welcome {
  std::string protocol = kProtocolVersion;
  std::uint64_t client_id = 0;
  std::uint64_t revision = 0;
  int canvas_w = 0;
  int canvas_h = 0;
  int tile_size = 0;
  friend bool operator==(const Welcome&, const Welcome&) = default;
};

struct StrokeEcho {
  std::uint64_t revision = 0;
  std::uint64_t client_id = 0;
  std::string user;
  Phase phase = Phase::begin;
  std::uint64_t contact_id = 0;
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;
  std::optional<std::uint64_t> blob_id;  // set on end
  friend bool operator==(const StrokeEcho&, const StrokeEcho&) = default;
};

struct BlobStateMsg {
  std::uint64_t revision = 0;
  std::vector<std::uint64_t> blob_ids;
  std::string state;
  friend bool operator==(const BlobStateMsg&, const BlobStateMsg&) = default;
};

struct ResultPatchMsg {
  std::uint64_t revision = 0;
  std::uint64_t blob_id = 0;
  IRect region;
  std::string png;  // base64
  std::string style;
  std::string prompt;
  friend bool operator==(const ResultPatchMsg& a, const ResultPatchMsg& b) {
    return a.revision == b.revision && a.blob_id == b.blob_id && a.region.x == b.region.x &&
           a.region.y == b.region.y && a.region.w == b.region.w && a.region.h == b.region.h && a.png == b.png &&
           a.style == b.style && a.prompt == b.prompt;
  }
};

struct TelemetryMsg {
  nlohmann::json report;
  friend bool operator==(const TelemetryMsg&, const TelemetryMsg&) = default;
};

struct ErrorMsg {
  std::string code;
  std::string message;
  friend bool operator==(const ErrorMsg&, const ErrorMsg&) = default;
};

using ServerMessage = std::variant<Welcome, StrokeEcho, BlobStateMsg, ResultPatchMsg, TelemetryMsg, ErrorMsg>;

inline const char* to_string(Phase p) {
  return p == Phase::begin ? "begin" : p == Phase::point ? "point" : "end";
}

inline const char* stroke_type(Phase p) {
  return p == Phase::begin ? "stroke_begin" : p == Phase::point ? "stroke_point" : "stroke_end";
}

namespace detail {

[[noreturn]] inline void bad(const std::string& what) { throw Error(ErrorCode::ProtocolError, what); }

inline const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) bad(std::string("missing field '") + key + "'");
  return *it;
}

inline double number(const nlohmann::json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number()) bad(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

inline std::uint64_t uint(const nlohmann::json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_unsigned()) bad(std::string("field '") + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::int64_t sint(const nlohmann::json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_integer()) bad(std::string("field '") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

inline std::string text(const nlohmann::json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) bad(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

inline Phase phase_from(const std::string& s) {
  if (s == "begin") return Phase::begin;
  if (s == "point") return Phase::point;
  if (s == "end") return Phase::end;
  bad("unknown phase '" + s + "'");
}

inline nlohmann::json object_of(std::string_view frame) {
  nlohmann::json j = nlohmann::json::parse(frame, nullptr, false);
  if (j.is_discarded()) bad("frame is not valid JSON");
  if (!j.is_object()) bad("frame must be a JSON object");
  return j;
}

}  // namespace detail

inline nlohmann::json to_json(const ClientMessage& m) {
  return std::visit(
      [](const auto& v) -> nlohmann::json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Hello>) {
          return {{"type", "hello"}, {"user", v.user}, {"protocol", v.protocol}};
        } else if constexpr (std::is_same_v<T, StrokeMsg>) {
          return {{"type", stroke_type(v.phase)}, {"contact_id", v.contact_id}, {"x", v.x}, {"y", v.y}, {"t", v.t}};
        } else {
          return {{"type", "ping"}};
        }
      },
      m);
}

inline ClientMessage parse_client(std::string_view frame) {
  using namespace detail;
  const auto j = object_of(frame);
  const std::string type = text(j, "type");
  if (type == "hello") return Hello{text(j, "user"), text(j, "protocol")};
  if (type == "ping") return Ping{};
  for (Phase p : {Phase::begin, Phase::point, Phase::end}) {
    if (type == stroke_type(p)) return StrokeMsg{p, uint(j, "contact_id"), number(j, "x"), number(j, "y"), number(j, "t")};
  }
  bad("unknown message type '" + type + "'");
}

inline nlohmann::json to_json(const ServerMessage& m) {
  return std::visit(
      [](const auto& v) -> nlohmann::json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Welcome>) {
          return {{"type", "welcome"},         {"protocol", v.protocol}, {"client_id", v.client_id},
                  {"revision", v.revision},    {"canvas", {{"w", v.canvas_w}, {"h", v.canvas_h}}},
                  {"tile_size", v.tile_size}};
        } else if constexpr (std::is_same_v<T, StrokeEcho>) {
          nlohmann::json j{{"type", "stroke_echo"}, {"revision", v.revision},     {"client_id", v.client_id},
                           {"user", v.user},        {"phase", to_string(v.phase)}, {"contact_id", v.contact_id},
                           {"x", v.x},              {"y", v.y},                    {"t", v.t}};
          if (v.blob_id) j["blob_id"] = *v.blob_id;
          return j;
        } else if constexpr (std::is_same_v<T, BlobStateMsg>) {
          return {{"type", "blob_state"}, {"revision", v.revision}, {"blob_ids", v.blob_ids}, {"state", v.state}};
        } else if constexpr (std::is_same_v<T, ResultPatchMsg>) {
          return {{"type", "result_patch"},
                  {"revision", v.revision},
                  {"blob_id", v.blob_id},
                  {"region", {{"x", v.region.x}, {"y", v.region.y}, {"w", v.region.w}, {"h", v.region.h}}},
                  {"png", v.png},
                  {"style", v.style},
                  {"prompt", v.prompt}};
        } else if constexpr (std::is_same_v<T, TelemetryMsg>) {
          return {{"type", "telemetry"}, {"report", v.report}};
        } else {
          return {{"type", "error"}, {"code", v.code}, {"message", v.message}};
        }
      },
      m);
}

inline ServerMessage parse_server(std::string_view frame) {
  using namespace detail;
  const auto j = object_of(frame);
  const std::string type = text(j, "type");
  if (type == "welcome") {
    const auto& c = field(j, "canvas");
    return Welcome{text(j, "protocol"), uint(j, "client_id"), uint(j, "revision"), int(sint(c, "w")),
                   int(sint(c, "h")),   int(sint(j, "tile_size"))};
  }
  if (type == "stroke_echo") {
    StrokeEcho e{uint(j, "revision"), uint(j, "client_id"), text(j, "user"), phase_from(text(j, "phase")),
                 uint(j, "contact_id"), number(j, "x"),     number(j, "y"),  number(j, "t"),
                 std::nullopt};
    if (j.contains("blob_id")) e.blob_id = uint(j, "blob_id");
    return e;
  }
  if (type == "blob_state") {
    BlobStateMsg b{uint(j, "revision"), {}, text(j, "state")};
    const auto& ids = field(j, "blob_ids");
    if (!ids.is_array()) bad("blob_ids must be an array");
    for (const auto& id : ids) {
      if (!id.is_number_unsigned()) bad("blob_ids must hold non-negative integers");
      b.blob_ids.push_back(id.get<std::uint64_t>());
    }
    return b;
  }
  if (type == "result_patch") {
    const auto& r = field(j, "region");
    return ResultPatchMsg{uint(j, "revision"),
                          uint(j, "blob_id"),
                          {int(sint(r, "x")), int(sint(r, "y")), int(sint(r, "w")), int(sint(r, "h"))},
                          text(j, "png"),
                          text(j, "style"),
                          text(j, "prompt")};
  }
  if (type == "telemetry") return TelemetryMsg{field(j, "report")};
  if (type == "error") return ErrorMsg{text(j, "code"), text(j, "message")};
  bad("unknown message type '" + type + "'");
}

/// Revision carried by a state-changing message; nullopt for the others.
inline std::optional<std::uint64_t> revision_of(const ServerMessage& m) {
  if (auto* e = std::get_if<StrokeEcho>(&m)) return e->revision;
  if (auto* b = std::get_if<BlobStateMsg>(&m)) return b->revision;
  if (auto* p = std::get_if<ResultPatchMsg>(&m)) return p->revision;
  return std::nullopt;
}

}  // namespace inkweave::proto
