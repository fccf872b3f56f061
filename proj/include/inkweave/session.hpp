#pragma once

// Shared canvas state. One writer mutates it through the methods below (the
// server funnels every command through a single sequencer); readers take
// snapshots that share the immutable background raster.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "inkweave/base64.hpp"
#include "inkweave/error.hpp"
#include "inkweave/geometry.hpp"
#include "inkweave/pipeline.hpp"
#include "inkweave/png_io.hpp"
#include "inkweave/raster.hpp"

namespace inkweave {

struct Stroke {
  ContactId contact_id{};
  Polyline points;
  double started_at = 0.0;
  std::optional<double> ended_at;
  std::string user_id;
};

enum class BlobState { collecting, queued, generating, composited, expired, failed };

constexpr std::string_view to_string(BlobState s) {
  switch (s) {
    case BlobState::collecting: return "collecting";
    case BlobState::queued: return "queued";
    case BlobState::generating: return "generating";
    case BlobState::composited: return "composited";
    case BlobState::expired: return "expired";
    case BlobState::failed: return "failed";
  }
  return "collecting";
}

struct Blob {
  BlobId blob_id = 0;
  std::vector<Stroke> strokes;
  BBox bbox;  // union of member stroke bboxes grown by merge_margin
  BlobState state = BlobState::collecting;
  double last_activity = 0.0;
  double composited_at = 0.0;

  std::vector<Polyline> polylines() const {
    std::vector<Polyline> out;
    out.reserve(strokes.size());
    for (const auto& s : strokes) out.push_back(s.points);
    return out;
  }
};

struct SessionConfig {
  int width = 1024;
  int height = 1024;
  double merge_margin = 24.0;
  double idle_ms = 800.0;
  double ttl_ms = 10.0 * 60.0 * 1000.0;
  std::size_t max_blobs = 512;
  std::array<std::uint8_t, 4> paper{255, 255, 255, 255};
};

enum class StrokeEventKind { begin, point, end };

constexpr std::string_view to_string(StrokeEventKind k) {
  return k == StrokeEventKind::begin ? "begin" : k == StrokeEventKind::point ? "point" : "end";
}

struct StrokeEvent {
  StrokeEventKind kind = StrokeEventKind::begin;
  ContactId contact{};
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;  // client timestamp, kept on the polyline
  std::string user_id;
};

struct IngestResult {
  std::uint64_t revision = 0;
  Point point;                 // after clamping
  std::optional<BlobId> blob;  // set on end
  std::vector<BlobId> absorbed;  // blobs merged into *blob
};

struct CanvasSnapshot {
  std::shared_ptr<const Raster> background;
  std::uint64_t revision = 0;
};

class Session {
 public:
  using EventSink = std::function<void(const nlohmann::json&)>;

  explicit Session(SessionConfig cfg)
      : cfg_(cfg), background_(std::make_shared<const Raster>(Raster::rgba(cfg.width, cfg.height, cfg.paper))) {
    if (cfg.width <= 0 || cfg.height <= 0) throw Error(ErrorCode::InvalidArgument, "canvas size must be positive");
  }

  const SessionConfig& config() const { return cfg_; }
  std::uint64_t revision() const { return revision_; }
  const std::map<BlobId, Blob>& blobs() const { return blobs_; }
  const std::map<ContactId, Stroke>& live_strokes() const { return live_; }
  const Raster& background() const { return *background_; }
  CanvasSnapshot snapshot() const { return {background_, revision_}; }

  const Blob& blob(BlobId id) const {
    auto it = blobs_.find(id);
    if (it == blobs_.end()) throw Error(ErrorCode::StaleBlob, "no blob " + std::to_string(id));
    return it->second;
  }

  /// Every mutation is reported here as one JSON object (the event log).
  void set_event_sink(EventSink sink) { sink_ = std::move(sink); }

  IngestResult ingest(const StrokeEvent& e, double now) {
    if (!std::isfinite(e.x) || !std::isfinite(e.y) || !std::isfinite(e.t)) {
      throw Error(ErrorCode::InvalidArgument, "non-finite stroke coordinate");
    }
    const Point p{std::clamp(e.x, 0.0, double(cfg_.width - 1)), std::clamp(e.y, 0.0, double(cfg_.height - 1))};
    IngestResult res;
    res.point = p;
    switch (e.kind) {
      case StrokeEventKind::begin: {
        if (live_.count(e.contact)) throw Error(ErrorCode::ContactAlreadyActive, "contact already drawing");
        Stroke s;
        s.contact_id = e.contact;
        s.points = Polyline({}, e.contact);
        s.points.append(p, e.t);
        s.started_at = now;
        s.user_id = e.user_id;
        live_.emplace(e.contact, std::move(s));
        break;
      }
      case StrokeEventKind::point: {
        auto it = live_.find(e.contact);
        if (it == live_.end()) throw Error(ErrorCode::UnknownContact, "point for unknown contact");
        it->second.points.append(p, std::max(e.t, it->second.points.times().back()));
        break;
      }
      case StrokeEventKind::end: {
        auto it = live_.find(e.contact);
        if (it == live_.end()) throw Error(ErrorCode::UnknownContact, "end for unknown contact");
        Stroke s = std::move(it->second);
        live_.erase(it);
        s.ended_at = std::max(now, s.started_at);
        auto [id, absorbed] = assign_to_blob(std::move(s), now);
        res.blob = id;
        res.absorbed = std::move(absorbed);
        break;
      }
    }
    res.revision = bump();
    log({{"op", to_string(e.kind)},
         {"contact", static_cast<std::uint64_t>(e.contact)},
         {"x", e.x},
         {"y", e.y},
         {"t", e.t},
         {"user", e.user_id},
         {"now", now}});
    return res;
  }

  /// Moves idle collecting blobs without open contacts to queued. Idle means
  /// now - last_activity >= idle_ms.
  std::vector<BlobId> seal_idle_blobs(double now) {
    std::vector<BlobId> sealed;
    for (auto& [id, b] : blobs_) {
      if (b.state != BlobState::collecting || now - b.last_activity < cfg_.idle_ms) continue;
      if (has_open_contact(b)) continue;
      b.state = BlobState::queued;
      sealed.push_back(id);
    }
    if (!sealed.empty()) {
      bump();
      log({{"op", "seal"}, {"now", now}});
    }
    return sealed;
  }

  void mark_generating(BlobId id) { transition(id, BlobState::queued, BlobState::generating, "generating"); }
  void mark_failed(BlobId id) { transition(id, BlobState::generating, BlobState::failed, "failed"); }

  /// Drops composited blobs older than ttl_ms, then the oldest composited
  /// blobs while the count exceeds max_blobs.
  std::vector<BlobId> expire_stale(double now) {
    std::vector<BlobId> expired;
    for (const auto& [id, b] : blobs_) {
      if (b.state == BlobState::composited && now - b.composited_at >= cfg_.ttl_ms) expired.push_back(id);
    }
    for (BlobId id : expired) blobs_.erase(id);
    if (blobs_.size() > cfg_.max_blobs) {
      std::vector<std::pair<double, BlobId>> done;
      for (const auto& [id, b] : blobs_) {
        if (b.state == BlobState::composited) done.emplace_back(b.composited_at, id);
      }
      std::sort(done.begin(), done.end());
      for (const auto& [at, id] : done) {
        if (blobs_.size() <= cfg_.max_blobs) break;
        blobs_.erase(id);
        expired.push_back(id);
      }
    }
    if (!expired.empty()) {
      bump();
      log({{"op", "expire"}, {"now", now}});
    }
    return expired;
  }

  /// Returns false for a replayed (blob_id, revision_applied) pair.
  bool apply_patch(const ResultPatch& patch, double now) {
    if (applied_.count({patch.blob_id, patch.revision_applied})) return false;
    auto it = blobs_.find(patch.blob_id);
    if (it == blobs_.end() || it->second.state != BlobState::generating) {
      throw Error(ErrorCode::StaleBlob, "blob " + std::to_string(patch.blob_id) + " is not generating");
    }
    if (patch.region.empty() || !background_->rect().contains(patch.region)) {
      throw Error(ErrorCode::OutOfBounds, "patch region outside the canvas");
    }
    if (patch.pixels.width() != patch.region.w || patch.pixels.height() != patch.region.h ||
        patch.pixels.channels() != 4) {
      throw Error(ErrorCode::DimensionMismatch, "patch pixels do not match region");
    }
    auto next = std::make_shared<Raster>(*background_);
    paste(*next, patch.pixels, patch.region.x, patch.region.y);
    background_ = std::move(next);
    it->second.state = BlobState::composited;
    it->second.composited_at = now;
    applied_.insert({patch.blob_id, patch.revision_applied});
    bump();
    if (sink_) {
      log({{"op", "patch"},
           {"blob", patch.blob_id},
           {"region", {patch.region.x, patch.region.y, patch.region.w, patch.region.h}},
           {"revision_applied", patch.revision_applied},
           {"png", base64_encode(encode_png(patch.pixels))},
           {"now", now}});
    }
    return true;
  }

 private:
  std::uint64_t bump() { return ++revision_; }

  void log(nlohmann::json j) {
    if (sink_) sink_(j);
  }

  void transition(BlobId id, BlobState from, BlobState to, const char* op) {
    auto it = blobs_.find(id);
    if (it == blobs_.end() || it->second.state != from) {
      throw Error(ErrorCode::StaleBlob, "blob " + std::to_string(id) + " is not " + std::string(to_string(from)));
    }
    it->second.state = to;
    bump();
    log({{"op", op}, {"blob", id}});
  }

  bool has_open_contact(const Blob& b) const {
    for (const auto& [cid, s] : live_) {
      if (s.points.bbox().expanded(cfg_.merge_margin).intersects(b.bbox)) return true;
    }
    return false;
  }

  /// Joins the stroke to every collecting blob its grown bbox touches,
  /// repeating until the merged bbox touches no further collecting blob.
  std::pair<BlobId, std::vector<BlobId>> assign_to_blob(Stroke stroke, double now) {
    BBox box = stroke.points.bbox().expanded(cfg_.merge_margin);
    std::vector<BlobId> members;
    for (bool grew = true; grew;) {
      grew = false;
      for (const auto& [id, b] : blobs_) {
        if (b.state != BlobState::collecting || std::find(members.begin(), members.end(), id) != members.end()) {
          continue;
        }
        if (b.bbox.intersects(box)) {
          members.push_back(id);
          box.extend(b.bbox);
          grew = true;
        }
      }
    }
    if (members.empty()) {
      const BlobId id = next_blob_id_++;
      Blob b;
      b.blob_id = id;
      b.bbox = box;
      b.last_activity = now;
      b.strokes.push_back(std::move(stroke));
      blobs_.emplace(id, std::move(b));
      return {id, {}};
    }
    std::sort(members.begin(), members.end());
    const BlobId keep = members.front();
    Blob& target = blobs_.at(keep);
    std::vector<BlobId> absorbed(members.begin() + 1, members.end());
    for (BlobId id : absorbed) {
      auto& src = blobs_.at(id);
      for (auto& s : src.strokes) target.strokes.push_back(std::move(s));
      blobs_.erase(id);
    }
    target.strokes.push_back(std::move(stroke));
    target.bbox = box;
    target.last_activity = now;
    return {keep, absorbed};
  }

  SessionConfig cfg_;
  std::shared_ptr<const Raster> background_;
  std::map<ContactId, Stroke> live_;
  std::map<BlobId, Blob> blobs_;
  std::set<std::pair<BlobId, std::uint64_t>> applied_;
  std::uint64_t revision_ = 0;
  BlobId next_blob_id_ = 1;
  EventSink sink_;
};

/// Re-applies an event log (one JSON object per line) to a fresh session.
inline void replay_events(Session& session, std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto op = j.at("op").get<std::string>();
      if (op == "begin" || op == "point" || op == "end") {
        StrokeEvent e;
        e.kind = op == "begin" ? StrokeEventKind::begin : op == "point" ? StrokeEventKind::point : StrokeEventKind::end;
        e.contact = ContactId{j.at("contact").get<std::uint64_t>()};
        e.x = j.at("x").get<double>();
        e.y = j.at("y").get<double>();
        e.t = j.at("t").get<double>();
        e.user_id = j.value("user", std::string{});
        session.ingest(e, j.at("now").get<double>());
      } else if (op == "seal") {
        session.seal_idle_blobs(j.at("now").get<double>());
      } else if (op == "expire") {
        session.expire_stale(j.at("now").get<double>());
      } else if (op == "generating") {
        session.mark_generating(j.at("blob").get<BlobId>());
      } else if (op == "failed") {
        session.mark_failed(j.at("blob").get<BlobId>());
      } else if (op == "patch") {
        const auto r = j.at("region");
        ResultPatch p;
        p.blob_id = j.at("blob").get<BlobId>();
        p.region = {r.at(0).get<int>(), r.at(1).get<int>(), r.at(2).get<int>(), r.at(3).get<int>()};
        p.revision_applied = j.at("revision_applied").get<std::uint64_t>();
        p.pixels = to_rgba(decode_png(base64_decode(j.at("png").get<std::string>()), ErrorCode::UnreadableInput));
        session.apply_patch(p, j.at("now").get<double>());
      } else {
        throw Error(ErrorCode::UnreadableInput, "unknown op " + op);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::UnreadableInput, "event log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace inkweave
