#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "core/engine.hpp"
#include "core/util.hpp"

using namespace freshrec;

namespace {

constexpr int64_t kDay = kSecondsPerDay;

struct World {
  EngineConfig cfg;
  Engine engine;
  int64_t now0 = 1000 * kDay;  // 5 days into a Friday-aligned week

  World() : engine(make_config()) {
    Catalog& c = engine.catalog();
    // Six artists across two genres; twelve catalog albums with a week of
    // usage; six fresh releases inside the 7-day window.
    const char* genres[6] = {"g0", "g0", "g0", "g1", "g1", "g1"};
    for (int a = 0; a < 6; ++a) {
      for (int j = 0; j < 2; ++j) {
        AlbumMeta album;
        album.album_id = "b" + std::to_string(a * 2 + j);
        album.artist_ids = {"ar" + std::to_string(a)};
        album.label_id = "lb" + std::to_string(a % 3);
        album.genre_ids = {genres[a]};
        album.release_ts = now0 - 20 * kDay;
        c.add_album(album);
      }
    }
    for (int i = 0; i < 6; ++i) {
      AlbumMeta album;
      album.album_id = "n" + std::to_string(i);
      album.artist_ids = {"ar" + std::to_string(i)};
      album.label_id = "lb" + std::to_string(i % 3);
      album.genre_ids = {genres[i]};
      album.release_ts = now0 - kDay;
      c.add_album(album);
    }
    // Users 0..14 stream genre g0 albums (b0..b5), users 15..29 stream
    // genre g1 albums (b6..b11), with per-user offsets so vectors differ.
    for (int u = 0; u < 30; ++u) {
      const int base = u < 15 ? 0 : 6;
      for (int k = 0; k < 4; ++k) {
        const int idx = base + (u + k) % 6;
        for (int rep = 0; rep <= (u + k) % 3; ++rep) {
          UsageEvent ev;
          ev.type = EventType::Stream;
          ev.user_id = "u" + std::to_string(u);
          ev.subject = "b" + std::to_string(idx);
          ev.ts = now0 - 3 * kDay + u * 100 + k * 10 + rep;
          c.add_event(ev);
        }
      }
    }
    UsageEvent fav;
    fav.type = EventType::FavoriteArtistAdd;
    fav.user_id = "u0";
    fav.subject = "ar0";
    fav.ts = now0 - 10 * kDay;
    c.add_event(fav);

    engine.train_cf(now0);
    engine.train_coldstart();
    engine.scheduler_tick(now0);
  }

  static EngineConfig make_config() {
    EngineConfig cfg;
    cfg.dim = 4;
    cfg.h1 = 8;
    cfg.h2 = 8;
    cfg.min_interactions = 8;
    cfg.train.epochs = 30;
    cfg.train.h1 = 8;
    cfg.train.h2 = 8;
    return cfg;
  }
};

World& world() {
  static World w;
  return w;
}

void check_invariants(const Slate& slate, int max_len) {
  CHECK(static_cast<int>(slate.entries.size()) <= max_len);
  std::set<std::string> seen;
  bool in_tail = false;
  for (size_t i = 0; i < slate.entries.size(); ++i) {
    const SlateEntry& e = slate.entries[i];
    CHECK(e.position == static_cast<int>(i) + 1);
    CHECK(seen.insert(e.album_id).second);
    if (e.section == SlateSection::Personalized) in_tail = true;
    if (in_tail) CHECK(e.section == SlateSection::Personalized);
  }
}

}  // namespace

TEST_CASE("carousel: unmissable prefix before personalized tail, deduped") {
  World& w = world();
  Slate slate =
      w.engine.build_carousel("u0", w.now0, Policy::ColdStart);
  check_invariants(slate, 12);
  REQUIRE(!slate.entries.empty());
  CHECK(slate.entries[0].album_id == "n0");  // favorite artist's new album
  CHECK(slate.entries[0].section == SlateSection::Unmissable);
  for (size_t i = 1; i < slate.entries.size(); ++i)
    CHECK(slate.entries[i].album_id != "n0");
  CHECK_FALSE(slate.fallback_user);
}

TEST_CASE("slate invariants hold across randomized calls") {
  World& w = world();
  std::mt19937_64 rng(555);
  const Policy policies[3] = {Policy::Editorial, Policy::ColdStart,
                              Policy::TsColdStart};
  for (int i = 0; i < 120; ++i) {
    const std::string user = "u" + std::to_string(rng() % 32);  // some unknown
    const int64_t now = w.now0 + static_cast<int64_t>(rng() % kDay);
    const Policy policy = policies[rng() % 3];
    if (rng() % 2) {
      check_invariants(w.engine.build_carousel(user, now, policy, 0, &rng), 12);
    } else {
      check_invariants(w.engine.view_all(user, now, policy, &rng), 100);
    }
  }
}

TEST_CASE("cold user gets the mean fallback vector, flagged") {
  World& w = world();
  Slate slate = w.engine.build_carousel("stranger", w.now0, Policy::ColdStart);
  CHECK(slate.fallback_user);
  check_invariants(slate, 12);
}

TEST_CASE("editorial: same-genre users share the personalized tail") {
  World& w = world();
  Slate s2 = w.engine.build_carousel("u2", w.now0, Policy::Editorial);
  Slate s3 = w.engine.build_carousel("u3", w.now0, Policy::Editorial);
  REQUIRE(!s2.entries.empty());
  REQUIRE(s2.entries.size() == s3.entries.size());
  for (size_t i = 0; i < s2.entries.size(); ++i)
    CHECK(s2.entries[i].album_id == s3.entries[i].album_id);

  Slate s20 = w.engine.build_carousel("u20", w.now0, Policy::Editorial);
  REQUIRE(!s20.entries.empty());
  CHECK(s20.entries[0].album_id != s2.entries[0].album_id);  // other genre
}

TEST_CASE("editorial lists are stable within a week, change at the boundary") {
  World& w = world();
  Slate a = w.engine.build_carousel("u2", w.now0, Policy::Editorial);
  Slate b = w.engine.build_carousel("u2", w.now0 + 12 * 3600, Policy::Editorial);
  REQUIRE(a.entries.size() == b.entries.size());
  for (size_t i = 0; i < a.entries.size(); ++i)
    CHECK(a.entries[i].album_id == b.entries[i].album_id);
  CHECK(a.snapshot_version == b.snapshot_version);

  // Two days later a new editorial week has started; this week's list no
  // longer contains last week's releases.
  Slate next = w.engine.build_carousel("u2", w.now0 + 2 * kDay, Policy::Editorial);
  CHECK(next.snapshot_version != a.snapshot_version);
  CHECK(next.entries.empty());
}

TEST_CASE("coldstart tails differ between users with different vectors") {
  World& w = world();
  Slate s2 = w.engine.build_carousel("u2", w.now0, Policy::ColdStart);
  Slate s20 = w.engine.build_carousel("u20", w.now0, Policy::ColdStart);
  REQUIRE(!s2.entries.empty());
  REQUIRE(!s20.entries.empty());
  std::vector<std::string> t2, t20;
  for (const auto& e : s2.entries) t2.push_back(e.album_id);
  for (const auto& e : s20.entries) t20.push_back(e.album_id);
  CHECK(t2 != t20);
}

TEST_CASE("coldstart is deterministic against a fixed snapshot") {
  World& w = world();
  Slate a = w.engine.build_carousel("u5", w.now0, Policy::ColdStart);
  Slate b = w.engine.build_carousel("u5", w.now0, Policy::ColdStart);
  REQUIRE(a.entries.size() == b.entries.size());
  for (size_t i = 0; i < a.entries.size(); ++i)
    CHECK(a.entries[i].album_id == b.entries[i].album_id);
  CHECK(a.snapshot_version == b.snapshot_version);
}

TEST_CASE("view_all is supply-limited") {
  World& w = world();
  Slate va = w.engine.view_all("u5", w.now0, Policy::ColdStart);
  check_invariants(va, 100);
  CHECK(va.entries.size() <= 6);  // only six windowed albums exist
}

TEST_CASE("record_display logs events and routes bandit rewards") {
  World& w = world();
  std::mt19937_64 rng(8);

  SUBCASE("click in the unmissable prefix gives no bandit feedback") {
    Slate slate =
        w.engine.build_carousel("u0", w.now0, Policy::TsColdStart, 0, &rng);
    REQUIRE(slate.entries.size() >= 2);
    REQUIRE(slate.entries[0].section == SlateSection::Unmissable);
    w.engine.record_display(slate.slate_id, 1, w.now0 + 100);
    for (const auto& [id, arm] : w.engine.bandit().arms())
      CHECK(arm.pending.empty());
    const auto& evs = w.engine.catalog().events_for_user("u0");
    bool saw_click = false;
    for (const auto& ev : evs)
      if (ev.type == EventType::Click && ev.slate_id == slate.slate_id)
        saw_click = true;
    CHECK(saw_click);
  }

  SUBCASE("click on the first personalized entry rewards that arm only") {
    Slate slate =
        w.engine.build_carousel("u0", w.now0, Policy::TsColdStart, 0, &rng);
    REQUIRE(slate.entries.size() >= 3);
    int first_tail = -1;
    for (const auto& e : slate.entries)
      if (e.section == SlateSection::Personalized) {
        first_tail = e.position;
        break;
      }
    REQUIRE(first_tail > 0);
    w.engine.record_display(slate.slate_id, first_tail, w.now0 + 200);
    const std::string clicked = slate.entries[first_tail - 1].album_id;
    for (const auto& [id, arm] : w.engine.bandit().arms()) {
      if (id == clicked)
        CHECK(arm.pending == std::vector<int>{1});
      else
        CHECK(arm.pending.empty());
    }
  }

  SUBCASE("no click gives zeros to the first seen-depth tail arms") {
    Slate slate =
        w.engine.build_carousel("u5", w.now0, Policy::TsColdStart, 0, &rng);
    std::vector<std::string> tail;
    for (const auto& e : slate.entries)
      if (e.section == SlateSection::Personalized) tail.push_back(e.album_id);
    REQUIRE(tail.size() >= 4);
    w.engine.record_display(slate.slate_id, std::nullopt, w.now0 + 300);
    for (size_t i = 0; i < tail.size(); ++i) {
      const ArmState* arm = w.engine.bandit().find_arm(tail[i]);
      REQUIRE(arm != nullptr);
      if (i < 3)
        CHECK(arm->pending == std::vector<int>{0});
      else
        CHECK(arm->pending.empty());
    }
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(w.engine.record_display("nope", std::nullopt, w.now0),
                    EngineError);
    Slate slate = w.engine.build_carousel("u1", w.now0, Policy::ColdStart);
    CHECK_THROWS_AS(
        w.engine.record_display(slate.slate_id, 99, w.now0), EngineError);
  }

  // Clear pending state for later cases.
  w.engine.scheduler_tick(w.now0 + 4 * 3600);
  w.engine.scheduler_tick(w.now0 + 8 * 3600);
}

TEST_CASE("ts-coldstart explores across refreshes") {
  World& w = world();
  std::mt19937_64 rng(99);
  std::set<std::string> first_tail_albums;
  for (int i = 0; i < 50; ++i) {
    Slate s = w.engine.build_carousel("u5", w.now0, Policy::TsColdStart, 0, &rng);
    for (const auto& e : s.entries)
      if (e.section == SlateSection::Personalized) {
        first_tail_albums.insert(e.album_id);
        break;
      }
  }
  CHECK(first_tail_albums.size() >= 2);
}

TEST_CASE("scheduler_tick registers fresh releases and expires old arms") {
  World w2;  // private world: this test moves the clock forward
  AlbumMeta late;
  late.album_id = "late1";
  late.artist_ids = {"ar1"};
  late.label_id = "lb9";
  late.genre_ids = {"g0"};
  late.release_ts = w2.now0 + 3600;
  w2.engine.catalog().add_album(late);
  TickReport r = w2.engine.scheduler_tick(w2.now0 + 4 * 3600);
  CHECK(r.registered_arms == 1);
  CHECK(w2.engine.predictions().count("late1") == 1);
  auto snap = w2.engine.index_snapshot();
  CHECK(std::find(snap->ids.begin(), snap->ids.end(), "late1") !=
        snap->ids.end());

  // At the 7-day boundary of the original releases (release = now0 - 1d),
  // they leave the window, the index and the arm table together.
  TickReport r2 = w2.engine.scheduler_tick(w2.now0 + 6 * kDay);
  CHECK(std::find(r2.expired_arms.begin(), r2.expired_arms.end(), "n0") !=
        r2.expired_arms.end());
  CHECK(w2.engine.predictions().count("n0") == 0);
  CHECK(w2.engine.bandit().find_arm("n0") == nullptr);
  auto snap2 = w2.engine.index_snapshot();
  CHECK(std::find(snap2->ids.begin(), snap2->ids.end(), "n0") == snap2->ids.end());
  Slate slate = w2.engine.build_carousel("u0", w2.now0 + 6 * kDay,
                                         Policy::ColdStart);
  for (const auto& e : slate.entries) CHECK(e.album_id != "n0");
}

TEST_CASE("a failing tick leaves the previous snapshots serving") {
  World w2;
  const uint64_t index_before = w2.engine.index_snapshot()->version;
  const uint64_t pred_before = w2.engine.prediction_version();
  const size_t arms_before = w2.engine.bandit().arms().size();
  w2.engine.set_tick_failpoint([] { throw std::runtime_error("boom"); });
  CHECK_THROWS(w2.engine.scheduler_tick(w2.now0 + 4 * 3600));
  CHECK(w2.engine.index_snapshot()->version == index_before);
  CHECK(w2.engine.prediction_version() == pred_before);
  CHECK(w2.engine.bandit().arms().size() == arms_before);
  Slate slate = w2.engine.build_carousel("u1", w2.now0, Policy::ColdStart);
  CHECK(!slate.entries.empty());
  w2.engine.set_tick_failpoint(nullptr);
  CHECK_NOTHROW(w2.engine.scheduler_tick(w2.now0 + 8 * 3600));
  CHECK(w2.engine.index_snapshot()->version == index_before + 1);
}

TEST_CASE("tick with an empty window still bumps the prediction version") {
  EngineConfig cfg = World::make_config();
  Engine empty(cfg);
  const uint64_t before = empty.prediction_version();
  TickReport r = empty.scheduler_tick(50 * kDay);
  CHECK(r.window_albums == 0);
  CHECK(r.predictions == 0);
  CHECK(empty.prediction_version() == before + 1);
}

TEST_CASE("config parsing covers the engine surface") {
  KeyValueConfig kv = KeyValueConfig::from_string(
      "dim = 8\nhidden1 = 16\nhidden2=16\nindex_mode = ivf\n"
      "carousel_len = 10\nbandit_obs_var = 0.5\n# comment\n");
  EngineConfig cfg = EngineConfig::from_kv(kv);
  CHECK(cfg.dim == 8);
  CHECK(cfg.h1 == 16);
  CHECK(cfg.index_mode == IndexMode::CoarseIVF);
  CHECK(cfg.carousel_len == 10);
  CHECK(cfg.bandit.obs_var == 0.5);

  KeyValueConfig bad = KeyValueConfig::from_string("index_mode = fancy\n");
  CHECK_THROWS_AS(EngineConfig::from_kv(bad), ConfigError);
}
