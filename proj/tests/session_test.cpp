#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include "inkweave/session.hpp"
#include "oracles.hpp"

using namespace inkweave;

namespace {

SessionConfig small(int w = 512, int h = 512) {
  SessionConfig c;
  c.width = w;
  c.height = h;
  return c;
}

std::uint64_t draw(Session& s, std::uint64_t contact, const std::vector<Point>& pts, double now,
                   std::optional<BlobId>* blob = nullptr) {
  const ContactId cid{contact};
  s.ingest({StrokeEventKind::begin, cid, pts[0].x, pts[0].y, now, "u"}, now);
  for (std::size_t i = 1; i < pts.size(); ++i) s.ingest({StrokeEventKind::point, cid, pts[i].x, pts[i].y, now + i}, now);
  const auto r = s.ingest({StrokeEventKind::end, cid, pts.back().x, pts.back().y, now + pts.size()}, now);
  if (blob) *blob = r.blob;
  return r.revision;
}

std::set<std::set<std::size_t>> partition_of(const Session& s) {
  std::set<std::set<std::size_t>> out;
  for (const auto& [id, b] : s.blobs()) {
    std::set<std::size_t> members;
    for (const auto& st : b.strokes) members.insert(static_cast<std::size_t>(st.contact_id));
    out.insert(members);
  }
  return out;
}

void expect_collecting_disjoint(const Session& s) {
  std::vector<BBox> boxes;
  for (const auto& [id, b] : s.blobs())
    if (b.state == BlobState::collecting) boxes.push_back(b.bbox);
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (std::size_t j = i + 1; j < boxes.size(); ++j) ASSERT_FALSE(boxes[i].intersects(boxes[j]));
}

ResultPatch patch_for(const Session& s, BlobId id, std::uint64_t rev, std::array<std::uint8_t, 4> colour) {
  const auto r = to_pixel_rect(s.blob(id).bbox).intersect(s.background().rect());
  return {id, r, Raster::rgba(r.w, r.h, colour), rev};
}

}  // namespace

TEST(Ingest, BeginPointsEndMakesOneStroke) {
  Session s(small());
  std::optional<BlobId> blob;
  draw(s, 1, {{10, 10}, {20, 10}, {30, 12}, {40, 15}}, 0, &blob);
  ASSERT_TRUE(blob);
  const auto& b = s.blob(*blob);
  ASSERT_EQ(b.strokes.size(), 1u);
  EXPECT_EQ(b.strokes[0].points.size(), 4u);
  EXPECT_TRUE(b.strokes[0].ended_at);
  EXPECT_TRUE(s.live_strokes().empty());
}

TEST(Ingest, UnknownAndDuplicateContacts) {
  Session s(small());
  try {
    s.ingest({StrokeEventKind::point, ContactId{9}, 1, 1, 0}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownContact);
  }
  EXPECT_THROW(s.ingest({StrokeEventKind::end, ContactId{9}, 1, 1, 0}, 0), Error);
  s.ingest({StrokeEventKind::begin, ContactId{1}, 1, 1, 0}, 0);
  try {
    s.ingest({StrokeEventKind::begin, ContactId{1}, 1, 1, 0}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ContactAlreadyActive);
  }
  EXPECT_EQ(s.revision(), 1u);
}

TEST(Ingest, SimultaneousContactsAndClamping) {
  Session s(small(100, 100));
  s.ingest({StrokeEventKind::begin, ContactId{1}, -5, 50, 0}, 0);
  s.ingest({StrokeEventKind::begin, ContactId{2}, 500, 50, 0}, 0);
  s.ingest({StrokeEventKind::point, ContactId{1}, 10, 50, 1}, 1);
  ASSERT_EQ(s.live_strokes().size(), 2u);
  EXPECT_EQ(s.live_strokes().at(ContactId{1}).points.points()[0], (Point{0, 50}));
  EXPECT_EQ(s.live_strokes().at(ContactId{2}).points.points()[0], (Point{99, 50}));
  EXPECT_EQ(s.live_strokes().at(ContactId{1}).points.size(), 2u);
  EXPECT_THROW(s.ingest({StrokeEventKind::point, ContactId{1}, std::nan(""), 50, 1}, 1), Error);
}

TEST(AssignToBlob, DisjointStrokesMakeTwoBlobs) {
  Session s(small());
  draw(s, 1, {{10, 10}, {30, 10}}, 0);
  draw(s, 2, {{300, 300}, {320, 300}}, 0);
  EXPECT_EQ(s.blobs().size(), 2u);
}

TEST(AssignToBlob, BridgingStrokeMergesThreeWay) {
  Session s(small());
  std::optional<BlobId> a, b, c;
  draw(s, 1, {{10, 100}, {60, 100}}, 0, &a);
  draw(s, 2, {{200, 100}, {250, 100}}, 0, &b);
  ASSERT_EQ(s.blobs().size(), 2u);
  draw(s, 3, {{60, 100}, {200, 100}}, 0, &c);
  ASSERT_EQ(s.blobs().size(), 1u);
  EXPECT_EQ(*c, std::min(*a, *b));
  EXPECT_EQ(s.blob(*c).strokes.size(), 3u);
  EXPECT_EQ(partition_of(s), (std::set<std::set<std::size_t>>{{1, 2, 3}}));
}

TEST(AssignToBlob, NoMergeIntoGeneratingBlob) {
  Session s(small());
  std::optional<BlobId> a, b;
  draw(s, 1, {{10, 10}, {40, 10}}, 0, &a);
  s.seal_idle_blobs(1000);
  s.mark_generating(*a);
  draw(s, 2, {{12, 12}, {40, 12}}, 1000, &b);
  EXPECT_NE(*a, *b);
  EXPECT_EQ(s.blob(*b).state, BlobState::collecting);
}

TEST(AssignToBlob, MatchesOverlapOracleUnderPermutedArrival) {
  std::mt19937_64 rng(77);
  for (int seq = 0; seq < 40; ++seq) {
    const auto strokes = oracle::random_strokes(rng, 30, 600, 400, 20);
    std::vector<oracle::Rect> rects;
    for (const auto& st : strokes) {
      BBox b;
      for (const auto& p : st) b.extend(p);
      b = b.expanded(24);
      rects.push_back({b.min_x, b.min_y, b.max_x, b.max_y});
    }
    const auto expected = oracle::overlap_components(rects);
    std::vector<std::size_t> order(strokes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int perm = 0; perm < 3; ++perm) {
      Session s(small(600, 400));
      for (std::size_t i : order) {
        draw(s, i, strokes[i], 0);
        expect_collecting_disjoint(s);
      }
      ASSERT_EQ(partition_of(s), expected) << "sequence " << seq << " order " << perm;
      std::shuffle(order.begin(), order.end(), rng);
    }
  }
}

TEST(Session, RevisionStrictlyIncreases) {
  Session s(small());
  std::uint64_t last = 0;
  std::mt19937_64 rng(3);
  const auto strokes = oracle::random_strokes(rng, 20, 512, 512, 30);
  for (std::size_t i = 0; i < strokes.size(); ++i) {
    const auto r = draw(s, i, strokes[i], double(i) * 100);
    EXPECT_GT(r, last);
    last = r;
    const auto before = s.revision();
    if (!s.seal_idle_blobs(double(i) * 100 + 900).empty()) {
      EXPECT_GT(s.revision(), before);
    }
  }
}

TEST(SealIdle, DebounceThresholdAndOpenContactGuard) {
  Session s(small());
  std::optional<BlobId> a;
  draw(s, 1, {{10, 10}, {40, 10}}, 0, &a);
  EXPECT_TRUE(s.seal_idle_blobs(799).empty());
  EXPECT_EQ(s.seal_idle_blobs(800), std::vector<BlobId>{*a});  // >= threshold
  EXPECT_EQ(s.blob(*a).state, BlobState::queued);

  std::optional<BlobId> b;
  draw(s, 2, {{300, 300}, {320, 300}}, 0, &b);
  s.ingest({StrokeEventKind::begin, ContactId{3}, 310, 310, 0}, 0);  // still drawing near b
  EXPECT_TRUE(s.seal_idle_blobs(100000).empty());
  s.ingest({StrokeEventKind::end, ContactId{3}, 310, 310, 1}, 100000);
  EXPECT_TRUE(s.seal_idle_blobs(100000).empty());  // activity refreshed by the merge
  EXPECT_EQ(s.seal_idle_blobs(100800).size(), 1u);
}

TEST(ExpireStale, TtlAndSafety) {
  SessionConfig cfg = small();
  cfg.ttl_ms = 1000;
  Session s(cfg);
  std::optional<BlobId> a, b;
  draw(s, 1, {{10, 10}, {40, 10}}, 0, &a);
  draw(s, 2, {{300, 300}, {340, 300}}, 0, &b);
  s.seal_idle_blobs(800);
  s.mark_generating(*a);
  s.mark_generating(*b);
  s.apply_patch(patch_for(s, *a, 1, {1, 2, 3, 255}), 900);
  EXPECT_TRUE(s.expire_stale(1800).empty());
  EXPECT_EQ(s.expire_stale(1900), std::vector<BlobId>{*a});
  EXPECT_EQ(s.blobs().count(*a), 0u);
  // Generating blob survives any age.
  EXPECT_TRUE(s.expire_stale(1e9).empty());
  EXPECT_EQ(s.blob(*b).state, BlobState::generating);
  // Expired pixels stay.
  EXPECT_EQ(s.background().at(20, 10, 0), 1);
}

TEST(ExpireStale, CountPressureTakesOldestComposited) {
  SessionConfig cfg = small(800, 520);
  cfg.max_blobs = 500;
  cfg.merge_margin = 1;
  Session s(cfg);
  std::mt19937_64 rng(5);
  std::vector<double> finish(1000);
  for (int i = 0; i < 1000; ++i) finish[i] = double(i);
  std::shuffle(finish.begin(), finish.end(), rng);
  std::vector<BlobId> ids;
  for (int i = 0; i < 1000; ++i) {
    const double x = (i % 40) * 20 + 5, y = (i / 40) * 20 + 5;
    std::optional<BlobId> id;
    draw(s, i, {{x, y}, {x + 5, y}}, 0, &id);
    ids.push_back(*id);
  }
  // A collecting blob that count pressure must not touch.
  std::optional<BlobId> keep;
  s.seal_idle_blobs(1000);
  draw(s, 5000, {{790, 510}, {795, 510}}, 1000, &keep);
  for (int i = 0; i < 1000; ++i) {
    s.mark_generating(ids[i]);
    s.apply_patch(patch_for(s, ids[i], 0, {9, 9, 9, 255}), finish[i]);
  }
  ASSERT_EQ(s.blobs().size(), 1001u);
  const auto expired = s.expire_stale(1500);
  // Oracle: sort by composite time, take the prefix that brings the count to 500.
  std::vector<std::pair<double, BlobId>> order;
  for (int i = 0; i < 1000; ++i) order.emplace_back(finish[i], ids[i]);
  std::sort(order.begin(), order.end());
  std::set<BlobId> want;
  for (int i = 0; i < 501; ++i) want.insert(order[i].second);
  EXPECT_EQ(std::set<BlobId>(expired.begin(), expired.end()), want);
  EXPECT_EQ(s.blobs().size(), 500u);
  EXPECT_EQ(s.blob(*keep).state, BlobState::collecting);
}

TEST(ApplyPatch, CompositesOnceAndRejectsStale) {
  Session s(small());
  std::optional<BlobId> a;
  draw(s, 1, {{10, 10}, {40, 10}}, 0, &a);
  s.seal_idle_blobs(800);
  auto p = patch_for(s, *a, 7, {0, 0, 255, 255});
  EXPECT_THROW(s.apply_patch(p, 0), Error);  // still queued
  s.mark_generating(*a);
  const auto before = s.snapshot();
  EXPECT_TRUE(s.apply_patch(p, 900));
  EXPECT_EQ(s.revision(), before.revision + 1);
  EXPECT_EQ(s.blob(*a).state, BlobState::composited);
  EXPECT_EQ(s.background().at(p.region.x, p.region.y, 2), 255);
  // Old snapshot is untouched.
  EXPECT_EQ(before.background->at(p.region.x, p.region.y, 2), 255 - 0);
  EXPECT_EQ(before.background->at(p.region.x, p.region.y, 0), 255);

  const auto rev = s.revision();
  EXPECT_FALSE(s.apply_patch(p, 901));
  EXPECT_EQ(s.revision(), rev);
  p.revision_applied = 8;
  try {
    s.apply_patch(p, 902);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::StaleBlob);
  }
}

TEST(ApplyPatch, OutOfBounds) {
  Session s(small(64, 64));
  std::optional<BlobId> a;
  draw(s, 1, {{10, 10}, {40, 10}}, 0, &a);
  s.seal_idle_blobs(800);
  s.mark_generating(*a);
  ResultPatch p{*a, {32, 32, 64, 64}, Raster::rgba(64, 64, {0, 0, 0, 255}), 0};
  try {
    s.apply_patch(p, 900);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfBounds);
  }
}

TEST(EventLog, ReplayReproducesState) {
  std::ostringstream log;
  Session s(small());
  s.set_event_sink([&](const nlohmann::json& j) { log << j.dump() << '\n'; });
  std::optional<BlobId> a, b;
  draw(s, 1, {{10, 10}, {40, 10}, {40, 40}}, 0, &a);
  draw(s, 2, {{200, 200}, {260, 210}}, 100, &b);
  s.seal_idle_blobs(900);
  s.mark_generating(*a);
  s.apply_patch(patch_for(s, *a, 3, {10, 200, 30, 255}), 1000);
  s.ingest({StrokeEventKind::begin, ContactId{7}, 400, 400, 1}, 1100);

  Session r(small());
  std::istringstream in(log.str());
  replay_events(r, in);
  EXPECT_EQ(r.revision(), s.revision());
  EXPECT_EQ(r.background(), s.background());
  EXPECT_EQ(partition_of(r), partition_of(s));
  EXPECT_EQ(r.blob(*a).state, BlobState::composited);
  EXPECT_EQ(r.blob(*b).state, BlobState::queued);
  EXPECT_EQ(r.live_strokes().size(), 1u);

  std::istringstream bad("{\"op\":\"nope\"}\n");
  Session t(small());
  EXPECT_THROW(replay_events(t, bad), Error);
}
