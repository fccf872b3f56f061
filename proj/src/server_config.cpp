#include <algorithm>
#include <fstream>

#include "inkweave/server.hpp"

namespace inkweave {

namespace {

using nlohmann::json;

[[noreturn]] void ill_typed(const std::string& name, const char* want) {
  throw Error(ErrorCode::InvalidArgument, "setting '" + name + "' expects " + want);
}

std::string as_text(const std::string& name, const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return v.dump();
  ill_typed(name, "a string");
}

double as_number(const std::string& name, const json& v) {
  if (!v.is_number()) ill_typed(name, "a number");
  return v.get<double>();
}

std::int64_t as_int(const std::string& name, const json& v, std::int64_t lo) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < lo) {
    ill_typed(name, ("an integer >= " + std::to_string(lo)).c_str());
  }
  return v.get<std::int64_t>();
}

bool as_bool(const std::string& name, const json& v) {
  if (!v.is_boolean()) ill_typed(name, "true or false");
  return v.get<bool>();
}

ServerSetting text(std::string name, std::string help, std::string ServerConfig::*field) {
  return {name, std::move(help), [name, field](ServerConfig& c, const json& v) { c.*field = as_text(name, v); }};
}

template <typename F>
ServerSetting number(std::string name, std::string help, F assign) {
  return {name, std::move(help), [name, assign](ServerConfig& c, const json& v) { assign(c, as_number(name, v)); }};
}

template <typename F>
ServerSetting integer(std::string name, std::string help, std::int64_t lo, F assign) {
  return {name, std::move(help),
          [name, lo, assign](ServerConfig& c, const json& v) { assign(c, as_int(name, v, lo)); }};
}

std::vector<ServerSetting> build_settings() {
  using C = ServerConfig;
  std::vector<ServerSetting> s;
  s.push_back(text("host", "listen address", &C::host));
  s.push_back(integer("port", "listen port (0 picks a free one)", 0, [](C& c, auto v) { c.port = int(v); }));
  s.push_back(integer("canvas-w", "canvas width in px", 1, [](C& c, auto v) { c.session.width = int(v); }));
  s.push_back(integer("canvas-h", "canvas height in px", 1, [](C& c, auto v) { c.session.height = int(v); }));
  s.push_back(integer("tile-size", "tile edge in px", 1, [](C& c, auto v) { c.pipeline.tile_size = int(v); }));
  s.push_back(integer("workers", "generation workers", 1, [](C& c, auto v) { c.workers = std::size_t(v); }));
  s.push_back({"backend", "generator backend: mock or http", [](C& c, const json& v) {
                 const auto b = as_text("backend", v);
                 if (b != "mock" && b != "http") ill_typed("backend", "mock or http");
                 c.backend = b;
               }});
  s.push_back(text("backend-url", "generator endpoint for --backend http", &C::backend_url));
  s.push_back(text("describer-url", "describer endpoint; empty uses the local heuristic", &C::describer_url));
  s.push_back(number("backend-timeout-ms", "per-request timeout for HTTP services",
                     [](C& c, double v) { c.backend_timeout_ms = v; }));
  s.push_back(number("mock-stage-ms", "mock backend delay per stage", [](C& c, double v) { c.mock_stage_ms = v; }));
  s.push_back({"mock-sleep", "mock backend spends its delay on the wall clock",
               [](C& c, const json& v) { c.mock_sleep = as_bool("mock-sleep", v); }});
  s.push_back(integer("seed", "generation seed", 0, [](C& c, auto v) { c.pipeline.seed = std::uint64_t(v); }));
  s.push_back(number("denoise", "refine-stage denoise strength", [](C& c, double v) { c.pipeline.denoise = v; }));
  s.push_back(number("thickness", "mask stroke thickness in px", [](C& c, double v) { c.pipeline.mask.thickness = v; }));
  s.push_back(number("feather-width", "feather band width in px",
                     [](C& c, double v) { c.pipeline.mask.feather_width = v; }));
  s.push_back(integer("work-size", "generation resolution in px", 8, [](C& c, auto v) { c.pipeline.work_size = int(v); }));
  s.push_back(text("styles", "style registry JSON file", &C::styles));
  s.push_back(text("static-dir", "directory served under /", &C::static_dir));
  s.push_back(text("record", "write the session event log here", &C::record));
  s.push_back(text("replay", "replay this event log before serving", &C::replay));
  s.push_back(number("idle-ms", "seal a blob after this much idle time", [](C& c, double v) { c.session.idle_ms = v; }));
  s.push_back(number("merge-margin", "stroke merge distance in px", [](C& c, double v) { c.session.merge_margin = v; }));
  s.push_back(number("ttl-ms", "composited blob lifetime", [](C& c, double v) { c.session.ttl_ms = v; }));
  s.push_back(integer("max-blobs", "blob count cap", 1, [](C& c, auto v) { c.session.max_blobs = std::size_t(v); }));
  s.push_back(integer("outbound-limit", "queued messages per client before disconnect", 1,
                      [](C& c, auto v) { c.outbound_limit = std::size_t(v); }));
  s.push_back(integer("queue-capacity", "job queue bound", 1, [](C& c, auto v) { c.queue_capacity = std::size_t(v); }));
  s.push_back(integer("max-retries", "retries for transient backend failures", 0,
                      [](C& c, auto v) { c.max_retries = int(v); }));
  s.push_back(number("tick-ms", "sequencer period", [](C& c, double v) { c.tick_ms = v; }));
  s.push_back(number("telemetry-log-ms", "telemetry log period; 0 disables",
                     [](C& c, double v) { c.telemetry_log_ms = v; }));
  s.push_back(integer("send-buffer", "client socket send buffer in bytes; 0 keeps the OS default", 0,
                      [](C& c, auto v) { c.send_buffer = int(v); }));
  return s;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
  } else {
    out.emplace_back(prefix, j);
  }
}

}  // namespace

const std::vector<ServerSetting>& server_settings() {
  static const std::vector<ServerSetting> settings = build_settings();
  return settings;
}

std::string normalize_setting_name(std::string name) {
  while (!name.empty() && name.front() == '-') name.erase(name.begin());
  std::replace(name.begin(), name.end(), '.', '-');
  std::replace(name.begin(), name.end(), '_', '-');
  return name;
}

void apply_setting(ServerConfig& cfg, const std::string& name, const json& value) {
  const auto key = normalize_setting_name(name);
  for (const auto& s : server_settings()) {
    if (s.name == key) {
      s.set(cfg, value);
      return;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown setting '" + name + "'");
}

void apply_config_json(ServerConfig& cfg, const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
  std::vector<std::pair<std::string, json>> flat;
  flatten(doc, "", flat);
  for (const auto& [k, v] : flat) apply_setting(cfg, k, v);
}

void load_config_file(ServerConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::UnreadableInput, "cannot open config " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::UnreadableInput, "config " + path + " is not valid JSON");
  apply_config_json(cfg, doc);
}

json flag_value(const std::string& text) {
  json v = json::parse(text, nullptr, false);
  if (v.is_discarded() || v.is_object() || v.is_array()) return text;
  return v;
}

}  // namespace inkweave
