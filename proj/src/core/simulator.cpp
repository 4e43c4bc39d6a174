#include "core/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

#include "core/textcodec.hpp"

namespace freshrec::sim {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Eigen::VectorXd gaussian_vec(int d, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = gauss(rng) * scale;
  return v;
}

uint64_t user_day_seed(const SimWorld& world, uint64_t run_seed,
                       const std::string& user, int day, uint64_t salt) {
  uint64_t h = splitmix64(world.seed ^ splitmix64(run_seed));
  h = splitmix64(h ^ fnv1a64(user));
  h = splitmix64(h ^ (static_cast<uint64_t>(day) * 0x9e3779b97f4a7c15ULL));
  return splitmix64(h ^ salt);
}

struct WeekAccum {
  uint64_t displays = 0;
  uint64_t examined = 0;
  uint64_t clicks = 0;
  std::set<std::string> distinct_displayed;
  std::set<std::string> distinct_displayed_personalized;
  std::set<std::string> distinct_examined;
  std::set<std::string> distinct_clicked;
};

// One policy arm, replayed against its own engine instance. `click_b` is
// passed explicitly so the calibration bisection can reuse this path.
MetricsReport run_sim(const SimWorld& world, Policy policy, int horizon_days,
                      uint64_t run_seed, const std::vector<std::string>& users,
                      double click_a, double click_b, uint64_t salt) {
  const SimConfig& cfg = world.cfg;
  EngineConfig ecfg = cfg.engine;
  ecfg.catalog_path.clear();
  ecfg.events_path.clear();
  ecfg.store_path.clear();
  ecfg.model_path.clear();
  ecfg.arms_path.clear();
  Engine engine(ecfg);
  for (const auto& album : world.albums) engine.catalog().add_album(album);
  for (const auto& ev : world.bootstrap_events) engine.catalog().add_event(ev);
  if (policy != Policy::Editorial) {
    const TrainedArtifacts& art = world.trained();
    engine.set_store(art.store);
    engine.set_model(art.model, art.fcfg);
  }

  std::map<IsoWeek, WeekAccum> weeks;
  uint64_t displays = 0, examined = 0, clicks = 0;
  std::vector<uint64_t> examined_by_position;

  for (int day = 0; day < horizon_days; ++day) {
    const int64_t day_start = cfg.start_ts + day * kSecondsPerDay;
    for (int i = 0; i < 6; ++i) {
      engine.scheduler_tick(day_start + i * 4 * kSecondsPerHour);
      if (i != 2) continue;

      // Daily homepage request for every simulated user, after the 08:00
      // refresh.
      const int64_t serve_ts = day_start + 10 * kSecondsPerHour;
      const IsoWeek week = iso_week(serve_ts);
      WeekAccum& wk = weeks[week];
      for (const auto& user : users) {
        std::mt19937_64 rng(user_day_seed(world, run_seed, user, day, salt));
        Slate slate = engine.build_carousel(user, serve_ts, policy, 0, &rng);
        if (slate.entries.empty()) continue;

        // Cascade examination: position 1 is always seen; after each seen
        // position the user continues with probability gamma; the scan
        // stops at the first click.
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        std::optional<int> click;
        int seen = 0;
        for (const auto& entry : slate.entries) {
          if (seen > 0 && unit(rng) >= cfg.examine_continue) break;
          ++seen;
          ++examined;
          if (examined_by_position.size() < static_cast<size_t>(seen))
            examined_by_position.resize(seen, 0);
          ++examined_by_position[seen - 1];
          ++wk.examined;
          wk.distinct_examined.insert(entry.album_id);
          const double affinity = world.affinity(user, entry.album_id);
          if (unit(rng) < logistic(click_a * affinity + click_b)) {
            click = entry.position;
            break;
          }
        }
        displays += slate.entries.size();
        wk.displays += slate.entries.size();
        for (const auto& entry : slate.entries) {
          wk.distinct_displayed.insert(entry.album_id);
          if (entry.section == SlateSection::Personalized)
            wk.distinct_displayed_personalized.insert(entry.album_id);
        }
        engine.record_display(slate.slate_id, click, serve_ts);
        if (click) {
          ++clicks;
          ++wk.clicks;
          const std::string& album = slate.entries[*click - 1].album_id;
          wk.distinct_clicked.insert(album);
          UsageEvent stream;
          stream.type = EventType::Stream;
          stream.user_id = user;
          stream.subject = album;
          stream.ts = serve_ts + 60;
          engine.log_event(stream);
        }
      }
    }
  }

  MetricsReport report;
  report.policy = policy;
  report.seed = run_seed;
  report.users = users.size();
  report.horizon_days = horizon_days;
  report.displays = displays;
  report.examined = examined;
  report.clicks = clicks;
  report.examined_by_position = std::move(examined_by_position);
  report.display_to_click_rate =
      displays == 0 ? 0.0 : static_cast<double>(clicks) / displays;
  report.examined_to_click_rate =
      examined == 0 ? 0.0 : static_cast<double>(clicks) / examined;
  double dd = 0, dc = 0, de = 0;
  for (const auto& [week, acc] : weeks) {
    WeekMetrics wm;
    wm.week = week;
    wm.displays = acc.displays;
    wm.examined = acc.examined;
    wm.clicks = acc.clicks;
    wm.distinct_displayed = acc.distinct_displayed.size();
    wm.distinct_displayed_personalized =
        acc.distinct_displayed_personalized.size();
    wm.distinct_examined = acc.distinct_examined.size();
    wm.distinct_clicked = acc.distinct_clicked.size();
    report.weeks.push_back(wm);
    dd += wm.distinct_displayed;
    dc += wm.distinct_clicked;
    de += wm.distinct_examined;
  }
  if (!report.weeks.empty()) {
    report.weekly_distinct_displayed_mean = dd / report.weeks.size();
    report.weekly_distinct_clicked_mean = dc / report.weeks.size();
    report.weekly_distinct_examined_mean = de / report.weeks.size();
  }
  return report;
}

double editorial_ctr_for_bias(const SimWorld& world, double b) {
  const int n = std::min<int>(world.cfg.calibration_users,
                              static_cast<int>(world.user_ids.size()));
  std::vector<std::string> users(world.user_ids.begin(),
                                 world.user_ids.begin() + n);
  MetricsReport pilot =
      run_sim(world, Policy::Editorial, world.cfg.calibration_days,
              splitmix64(world.seed ^ 0xCA11B8ULL), users, world.click_a, b,
              0xCA11B8ULL);
  return pilot.display_to_click_rate;
}

void mean_stdev(const std::vector<double>& xs, double* mean, double* stdev) {
  *mean = 0.0;
  *stdev = 0.0;
  if (xs.empty()) return;
  for (double x : xs) *mean += x;
  *mean /= xs.size();
  if (xs.size() < 2) return;
  double ss = 0.0;
  for (double x : xs) ss += (x - *mean) * (x - *mean);
  *stdev = std::sqrt(ss / (xs.size() - 1));
}

}  // namespace

SimConfig SimConfig::from_kv(const KeyValueConfig& kv) {
  SimConfig c;
  c.n_users = static_cast<int>(kv.get_int("sim_users", c.n_users));
  c.n_artists = static_cast<int>(kv.get_int("sim_artists", c.n_artists));
  c.n_genres = static_cast<int>(kv.get_int("sim_genres", c.n_genres));
  c.n_labels = static_cast<int>(kv.get_int("sim_labels", c.n_labels));
  c.d_true = static_cast<int>(kv.get_int("sim_latent_dim", c.d_true));
  c.genre_mix = kv.get_double("sim_genre_mix", c.genre_mix);
  c.tau = kv.get_double("sim_tau", c.tau);
  c.albums_per_day =
      static_cast<int>(kv.get_int("sim_albums_per_day", c.albums_per_day));
  c.bootstrap_albums =
      static_cast<int>(kv.get_int("sim_bootstrap_albums", c.bootstrap_albums));
  c.bootstrap_streams_per_user = static_cast<int>(
      kv.get_int("sim_bootstrap_streams", c.bootstrap_streams_per_user));
  c.bootstrap_temp = kv.get_double("sim_bootstrap_temp", c.bootstrap_temp);
  c.favorite_fraction =
      kv.get_double("sim_favorite_fraction", c.favorite_fraction);
  c.favorites_per_user = static_cast<int>(
      kv.get_int("sim_favorites_per_user", c.favorites_per_user));
  c.horizon_days =
      static_cast<int>(kv.get_int("sim_horizon_days", c.horizon_days));
  c.examine_continue = kv.get_double("sim_gamma", c.examine_continue);
  c.click_scale = kv.get_double("sim_click_scale", c.click_scale);
  if (kv.has("sim_click_bias"))
    c.click_bias = kv.get_double("sim_click_bias", 0.0);
  c.target_editorial_ctr =
      kv.get_double("sim_target_editorial_ctr", c.target_editorial_ctr);
  c.calibration_users =
      static_cast<int>(kv.get_int("sim_calibration_users", c.calibration_users));
  c.calibration_days =
      static_cast<int>(kv.get_int("sim_calibration_days", c.calibration_days));
  c.start_ts = kv.get_int("sim_start_ts", c.start_ts);
  c.engine = EngineConfig::from_kv(kv, c.engine);
  return c;
}

double SimWorld::affinity(const std::string& user,
                          const std::string& album) const {
  return user_latents.at(user).dot(album_latents.at(album));
}

const TrainedArtifacts& SimWorld::trained() const {
  if (trained_) return *trained_;
  EngineConfig ecfg = cfg.engine;
  ecfg.catalog_path.clear();
  ecfg.events_path.clear();
  ecfg.store_path.clear();
  ecfg.model_path.clear();
  ecfg.arms_path.clear();
  Engine engine(ecfg);
  for (const auto& album : albums) engine.catalog().add_album(album);
  for (const auto& ev : bootstrap_events) engine.catalog().add_event(ev);
  // The whole bootstrap history is the training corpus; a 7-day window
  // would throw away most of it and leave the factorization noise-bound.
  engine.train_cf(cfg.start_ts, 35 * kSecondsPerDay);
  engine.train_coldstart();
  auto artifacts = std::make_shared<TrainedArtifacts>();
  artifacts->store = engine.store();
  artifacts->model = engine.model();
  artifacts->fcfg = engine.feature_config();
  trained_ = std::move(artifacts);
  return *trained_;
}

SimWorld generate_world(const SimConfig& cfg, uint64_t seed) {
  if (cfg.n_users < 1) throw SimError("degenerate world: no users");
  if (cfg.n_artists < 1) throw SimError("degenerate world: no artists");
  if (cfg.n_genres < 1) throw SimError("degenerate world: no genres");
  if (cfg.d_true < 1) throw SimError("latent dimension must be >= 1");
  if (cfg.examine_continue < 0.0 || cfg.examine_continue >= 1.0)
    throw SimError("gamma must be in [0, 1)");
  if (cfg.tau < 0.0) throw SimError("tau must be >= 0");
  if (cfg.genre_mix < 0.0 || cfg.genre_mix > 1.0)
    throw SimError("genre_mix must be in [0, 1]");

  SimWorld world;
  world.cfg = cfg;
  world.seed = seed;
  world.click_a = cfg.click_scale;
  std::mt19937_64 rng(splitmix64(seed ^ 0x5EEDC0DEULL));
  const double unit_scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_true));
  const double mix = std::sqrt(cfg.genre_mix);
  const double idio = std::sqrt(1.0 - cfg.genre_mix);

  std::vector<Eigen::VectorXd> genre_centroids;
  genre_centroids.reserve(cfg.n_genres);
  for (int g = 0; g < cfg.n_genres; ++g)
    genre_centroids.push_back(gaussian_vec(cfg.d_true, rng, unit_scale));

  std::uniform_int_distribution<int> genre_pick(0, cfg.n_genres - 1);
  std::vector<std::string> artist_ids;
  std::vector<int> artist_genre(cfg.n_artists);
  for (int a = 0; a < cfg.n_artists; ++a) {
    std::string id = "ar" + std::to_string(a);
    const int g = genre_pick(rng);
    artist_genre[a] = g;
    world.artist_latents[id] = mix * genre_centroids[g] +
                               idio * gaussian_vec(cfg.d_true, rng, unit_scale);
    artist_ids.push_back(std::move(id));
  }

  for (int u = 0; u < cfg.n_users; ++u) {
    std::string id = "u" + std::to_string(u);
    const int g = genre_pick(rng);
    world.user_latents[id] = mix * genre_centroids[g] +
                             idio * gaussian_vec(cfg.d_true, rng, unit_scale);
    world.user_ids.push_back(std::move(id));
  }

  std::uniform_int_distribution<int> artist_pick(0, cfg.n_artists - 1);
  auto make_album = [&](int idx, int64_t release_ts) {
    const int a = artist_pick(rng);
    AlbumMeta album;
    album.album_id = "al" + std::to_string(idx);
    album.artist_ids = {artist_ids[a]};
    album.label_id = "lb" + std::to_string(a % std::max(1, cfg.n_labels));
    album.genre_ids = {"g" + std::to_string(artist_genre[a])};
    album.release_ts = release_ts;
    album.title = "Album " + std::to_string(idx);
    world.album_latents[album.album_id] =
        world.artist_latents[album.artist_ids[0]] +
        cfg.tau * gaussian_vec(cfg.d_true, rng, unit_scale);
    world.albums.push_back(std::move(album));
  };

  // Bootstrap catalog: released well before the horizon so a week of usage
  // exists at start_ts.
  const int64_t boot_lo = cfg.start_ts - 35 * kSecondsPerDay;
  const int64_t boot_hi = cfg.start_ts - 7 * kSecondsPerDay;
  std::uniform_int_distribution<int64_t> boot_release(boot_lo, boot_hi - 1);
  int album_idx = 0;
  for (int i = 0; i < cfg.bootstrap_albums; ++i)
    make_album(album_idx++, boot_release(rng));
  // Horizon releases, albums_per_day per day, spread over daytime hours.
  for (int day = 0; day < cfg.horizon_days; ++day)
    for (int i = 0; i < cfg.albums_per_day; ++i)
      make_album(album_idx++,
                 cfg.start_ts + day * kSecondsPerDay +
                     (1 + (i * 7919) % 20) * kSecondsPerHour);
  std::sort(world.albums.begin(), world.albums.end(),
            [](const AlbumMeta& a, const AlbumMeta& b) {
              if (a.release_ts != b.release_ts)
                return a.release_ts < b.release_ts;
              return a.album_id < b.album_id;
            });

  // Bootstrap usage: per user, Gumbel top-k sampling over softmax affinity
  // picks the streamed bootstrap albums; streams land between each album's
  // release and start_ts so release-date usage exists for training features.
  std::vector<const AlbumMeta*> boot_albums;
  for (const auto& album : world.albums)
    if (album.release_ts < boot_hi) boot_albums.push_back(&album);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& user : world.user_ids) {
    const Eigen::VectorXd& ulat = world.user_latents[user];
    std::vector<std::pair<double, const AlbumMeta*>> keyed;
    keyed.reserve(boot_albums.size());
    for (const AlbumMeta* album : boot_albums) {
      const double logit =
          ulat.dot(world.album_latents[album->album_id]) / cfg.bootstrap_temp;
      const double gumbel = -std::log(-std::log(
          std::min(1.0 - 1e-12, std::max(1e-12, unit(rng)))));
      keyed.emplace_back(logit + gumbel, album);
    }
    const int take =
        std::min<int>(cfg.bootstrap_streams_per_user,
                      static_cast<int>(keyed.size()));
    std::partial_sort(keyed.begin(), keyed.begin() + take, keyed.end(),
                      [](const auto& a, const auto& b) {
                        return a.first > b.first;
                      });
    for (int j = 0; j < take; ++j) {
      const AlbumMeta* album = keyed[j].second;
      const double affinity = ulat.dot(world.album_latents[album->album_id]);
      const int64_t span = cfg.start_ts - album->release_ts;
      const int64_t ts =
          album->release_ts +
          static_cast<int64_t>(unit(rng) * static_cast<double>(span - 1));
      UsageEvent stream;
      stream.type = EventType::Stream;
      stream.user_id = user;
      stream.subject = album->album_id;
      stream.ts = ts;
      world.bootstrap_events.push_back(stream);
      if (unit(rng) < logistic(affinity)) {
        UsageEvent extra = stream;
        extra.ts = ts + 40;
        world.bootstrap_events.push_back(extra);
      }
      if (unit(rng) < 0.25 * logistic(affinity)) {
        UsageEvent like = stream;
        like.type = EventType::Like;
        like.ts = ts + 90;
        world.bootstrap_events.push_back(like);
      }
    }
    // A minority of users favorite their top-affinity artists.
    if (unit(rng) < cfg.favorite_fraction) {
      std::vector<std::pair<double, std::string>> by_aff;
      by_aff.reserve(artist_ids.size());
      for (const auto& artist : artist_ids)
        by_aff.emplace_back(ulat.dot(world.artist_latents[artist]), artist);
      const int take_f =
          std::min<int>(cfg.favorites_per_user, static_cast<int>(by_aff.size()));
      std::partial_sort(by_aff.begin(), by_aff.begin() + take_f, by_aff.end(),
                        [](const auto& a, const auto& b) {
                          return a.first > b.first;
                        });
      for (int j = 0; j < take_f; ++j) {
        UsageEvent fav;
        fav.type = EventType::FavoriteArtistAdd;
        fav.user_id = user;
        fav.subject = by_aff[j].second;
        fav.ts = cfg.start_ts - 7 * kSecondsPerDay;
        world.bootstrap_events.push_back(fav);
      }
    }
  }

  if (std::isnan(cfg.click_bias)) {
    // Seeded bisection on the click bias so the Editorial arm's CTR lands
    // around the target.
    double lo = -10.0, hi = 4.0;
    for (int iter = 0; iter < 16; ++iter) {
      const double mid = 0.5 * (lo + hi);
      if (editorial_ctr_for_bias(world, mid) < cfg.target_editorial_ctr)
        lo = mid;
      else
        hi = mid;
    }
    world.click_b = 0.5 * (lo + hi);
  } else {
    world.click_b = cfg.click_bias;
  }
  return world;
}

std::vector<std::string> MetricsReport::to_lines() const {
  std::vector<std::string> lines;
  Record meta;
  meta.add("kind", "meta");
  meta.add("policy", policy_name(policy));
  meta.add("seed", std::to_string(seed));
  meta.add("users", std::to_string(users));
  meta.add("horizon_days", std::to_string(horizon_days));
  meta.add("displays", std::to_string(displays));
  meta.add("examined", std::to_string(examined));
  meta.add("clicks", std::to_string(clicks));
  meta.add("display_to_click_rate", format_double(display_to_click_rate));
  meta.add("examined_to_click_rate", format_double(examined_to_click_rate));
  meta.add("weekly_distinct_displayed_mean",
           format_double(weekly_distinct_displayed_mean));
  meta.add("weekly_distinct_clicked_mean",
           format_double(weekly_distinct_clicked_mean));
  meta.add("weekly_distinct_examined_mean",
           format_double(weekly_distinct_examined_mean));
  lines.push_back(encode_record(meta));
  for (const auto& wm : weeks) {
    Record rec;
    rec.add("kind", "week");
    rec.add("iso", wm.week.label());
    rec.add("displays", std::to_string(wm.displays));
    rec.add("examined", std::to_string(wm.examined));
    rec.add("clicks", std::to_string(wm.clicks));
    rec.add("distinct_displayed", std::to_string(wm.distinct_displayed));
    rec.add("distinct_displayed_personalized",
            std::to_string(wm.distinct_displayed_personalized));
    rec.add("distinct_examined", std::to_string(wm.distinct_examined));
    rec.add("distinct_clicked", std::to_string(wm.distinct_clicked));
    lines.push_back(encode_record(rec));
  }
  return lines;
}

MetricsReport run_policy(const SimWorld& world, Policy policy,
                         int horizon_days, uint64_t seed) {
  if (horizon_days < 14)
    throw SimError("horizon must cover at least 14 days (2 editorial weeks)");
  return run_sim(world, policy, horizon_days, seed, world.user_ids,
                 world.click_a, world.click_b, 0);
}

MetricsReport run_policy_subset(const SimWorld& world, Policy policy,
                                int horizon_days, uint64_t seed,
                                const std::vector<std::string>& users) {
  if (horizon_days < 14)
    throw SimError("horizon must cover at least 14 days (2 editorial weeks)");
  if (users.empty()) throw SimError("empty user subset");
  return run_sim(world, policy, horizon_days, seed, users, world.click_a,
                 world.click_b, 0);
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_users(
    const SimWorld& world, uint64_t seed) {
  std::vector<std::string> a, b;
  const uint64_t salt = splitmix64(seed ^ 0xAB5EEDULL);
  for (const auto& user : world.user_ids) {
    if (splitmix64(fnv1a64(user) ^ salt) & 1)
      a.push_back(user);
    else
      b.push_back(user);
  }
  if (a.empty()) a.push_back(b.back()), b.pop_back();
  if (b.empty()) b.push_back(a.back()), a.pop_back();
  return {std::move(a), std::move(b)};
}

AbSeedResult ab_compare_with_splits(const SimWorld& world, Policy policy_a,
                                    Policy policy_b, int horizon_days,
                                    uint64_t seed,
                                    const std::vector<std::string>& split_a,
                                    const std::vector<std::string>& split_b) {
  std::set<std::string> in_a(split_a.begin(), split_a.end());
  for (const auto& user : split_b)
    if (in_a.count(user))
      throw SimError("overlapping A/B splits: user '" + user +
                     "' is in both arms");
  AbSeedResult result;
  result.seed = seed;
  result.arm_a = run_policy_subset(world, policy_a, horizon_days, seed, split_a);
  result.arm_b = run_policy_subset(world, policy_b, horizon_days, seed, split_b);
  const double ctr_a = result.arm_a.display_to_click_rate;
  result.ctr_lift = ctr_a == 0.0 ? 0.0
                                 : (result.arm_b.display_to_click_rate - ctr_a) /
                                       ctr_a;
  result.displayed_ratio =
      result.arm_a.weekly_distinct_displayed_mean == 0.0
          ? 0.0
          : result.arm_b.weekly_distinct_displayed_mean /
                result.arm_a.weekly_distinct_displayed_mean;
  result.clicked_ratio =
      result.arm_a.weekly_distinct_clicked_mean == 0.0
          ? 0.0
          : result.arm_b.weekly_distinct_clicked_mean /
                result.arm_a.weekly_distinct_clicked_mean;
  return result;
}

AbReport ab_compare(const SimWorld& world, Policy policy_a, Policy policy_b,
                    int horizon_days, const std::vector<uint64_t>& seeds) {
  if (seeds.size() < 3)
    throw SimError("ab_compare requires at least 3 seeds");
  AbReport report;
  report.policy_a = policy_a;
  report.policy_b = policy_b;
  std::vector<double> lifts, dratios, cratios;
  for (uint64_t seed : seeds) {
    auto [split_a, split_b] = split_users(world, seed);
    AbSeedResult r = ab_compare_with_splits(world, policy_a, policy_b,
                                            horizon_days, seed, split_a,
                                            split_b);
    lifts.push_back(r.ctr_lift);
    dratios.push_back(r.displayed_ratio);
    cratios.push_back(r.clicked_ratio);
    report.per_seed.push_back(std::move(r));
  }
  mean_stdev(lifts, &report.ctr_lift_mean, &report.ctr_lift_stdev);
  mean_stdev(dratios, &report.displayed_ratio_mean,
             &report.displayed_ratio_stdev);
  mean_stdev(cratios, &report.clicked_ratio_mean, &report.clicked_ratio_stdev);
  return report;
}

}  // namespace freshrec::sim
