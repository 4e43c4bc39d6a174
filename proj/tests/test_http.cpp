#include <doctest.h>

#include <sstream>
#include <thread>

#include "core/engine.hpp"
#include "core/http_server.hpp"

#include <httplib.h>
#include "core/textcodec.hpp"
#include "core/util.hpp"

using namespace freshrec;

namespace {

constexpr int64_t kDay = kSecondsPerDay;

struct Server {
  Engine engine;
  HttpServer http;
  int port = -1;
  std::thread worker;
  int64_t now0 = 1000 * kDay;

  Server() : engine(make_config()), http(engine) {
    Catalog& c = engine.catalog();
    for (int i = 0; i < 4; ++i) {
      AlbumMeta album;
      album.album_id = "al" + std::to_string(i);
      album.artist_ids = {"ar" + std::to_string(i % 2)};
      album.label_id = "lb0";
      album.genre_ids = {"g0"};
      album.release_ts = i < 2 ? now0 - 15 * kDay : now0 - kDay;
      c.add_album(album);
    }
    for (int u = 0; u < 12; ++u)
      for (int a = 0; a < 2; ++a) {
        UsageEvent ev;
        ev.type = EventType::Stream;
        ev.user_id = "u" + std::to_string(u);
        ev.subject = "al" + std::to_string(a);
        ev.ts = now0 - 2 * kDay + u * 10 + a;
        c.add_event(ev);
      }
    engine.train_cf(now0);
    engine.train_coldstart();
    engine.scheduler_tick(now0);
    port = http.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    worker = std::thread([this] { http.listen_after_bind(); });
  }

  ~Server() {
    http.stop();
    worker.join();
  }

  static EngineConfig make_config() {
    EngineConfig cfg;
    cfg.dim = 2;
    cfg.h1 = 4;
    cfg.h2 = 4;
    cfg.min_interactions = 5;
    cfg.train.epochs = 5;
    cfg.train.h1 = 4;
    cfg.train.h2 = 4;
    return cfg;
  }
};

}  // namespace

TEST_CASE("http surface") {
  Server srv;
  httplib::Client client("127.0.0.1", srv.port);
  client.set_connection_timeout(5);

  SUBCASE("health") {
    auto res = client.Get("/v1/health");
    REQUIRE(res);
    CHECK(res->status == 200);
    std::string first = res->body.substr(0, res->body.find('\n'));
    Record rec = decode_record(first);
    CHECK(rec.require("status") == "ok");
    CHECK(rec.require("index_version") == "1");
  }

  SUBCASE("carousel and view-all return slate documents") {
    auto res = client.Get("/v1/carousel?user=u1&policy=coldstart&now=" +
                          std::to_string(srv.now0));
    REQUIRE(res);
    REQUIRE(res->status == 200);
    std::istringstream body(res->body);
    std::string line;
    REQUIRE(std::getline(body, line));
    Record header = decode_record(line);
    CHECK(header.require("kind") == "slate");
    CHECK(header.require("user") == "u1");
    CHECK(header.require("policy") == "coldstart");
    int entries = std::stoi(std::string(header.require("entries")));
    CHECK(entries >= 1);
    int got = 0;
    while (std::getline(body, line)) {
      Record entry = decode_record(line);
      CHECK(entry.require("kind") == "entry");
      ++got;
    }
    CHECK(got == entries);

    auto va = client.Get("/v1/view-all?user=u1&policy=coldstart&now=" +
                         std::to_string(srv.now0));
    REQUIRE(va);
    CHECK(va->status == 200);
  }

  SUBCASE("feedback accepts a click and returns 204") {
    auto res = client.Get("/v1/carousel?user=u1&policy=ts-coldstart&now=" +
                          std::to_string(srv.now0));
    REQUIRE(res);
    REQUIRE(res->status == 200);
    Record header = decode_record(res->body.substr(0, res->body.find('\n')));
    const std::string slate_id(header.require("id"));
    auto fb = client.Post("/v1/feedback",
                          "slate=" + slate_id + " click_position=1 ts=" +
                              std::to_string(srv.now0 + 60) + "\n",
                          "text/plain");
    REQUIRE(fb);
    CHECK(fb->status == 204);

    auto bad = client.Post("/v1/feedback", "slate=missing\n", "text/plain");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(bad->body.find("error=") == 0);
  }

  SUBCASE("errors are plain-text records with 400") {
    auto res = client.Get("/v1/carousel?user=u1&policy=bogus");
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(res->body.find("error=") == 0);

    auto missing = client.Get("/v1/carousel?policy=coldstart");
    REQUIRE(missing);
    CHECK(missing->status == 400);
  }
}
