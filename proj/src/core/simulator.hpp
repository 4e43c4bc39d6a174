#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "core/catalog.hpp"
#include "core/cf_trainer.hpp"
#include "core/coldstart.hpp"
#include "core/config.hpp"
#include "core/engine.hpp"
#include "core/util.hpp"

namespace freshrec::sim {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  int n_users = 2000;
  // Few enough artists that most have a back catalog in the bootstrap set;
  // the cold-start artist-prior feature is dead weight without one.
  int n_artists = 250;
  int n_genres = 5;
  int n_labels = 40;
  int d_true = 16;          // ground-truth latent dimension
  // Mostly individual taste with a genre tilt: an editorial genre list can
  // only capture the genre share, which is what personalization must beat.
  double genre_mix = 0.3;   // share of latent variance from the genre centroid
  double tau = 0.3;         // album jitter around the artist latent

  int albums_per_day = 70;          // ~500/week
  int bootstrap_albums = 1500;      // pre-horizon catalog with usage history
  int bootstrap_streams_per_user = 120;
  double bootstrap_temp = 0.3;      // softmax temperature for bootstrap streams
  double favorite_fraction = 0.10;  // users with favorited artists
  int favorites_per_user = 2;

  int horizon_days = 28;
  double examine_continue = 0.85;   // gamma: P(scan one more position)
  double click_scale = 4.0;         // a in logistic(a * affinity + b)
  double click_bias = std::numeric_limits<double>::quiet_NaN();  // b; NaN => calibrate
  double target_editorial_ctr = 0.05;  // calibration target, within [0.02, 0.08]
  int calibration_users = 200;
  int calibration_days = 7;

  int64_t start_ts = 1677801600;  // 2023-03-03 00:00 UTC, a Friday

  // Shared engine settings (dim, training, bandit, ...). The cold-start
  // targets here are sqrt-sigma-scaled embeddings with tiny per-component
  // variance, so simulated worlds train hotter and longer than the engine's
  // general-purpose defaults.
  EngineConfig engine = [] {
    EngineConfig e;
    e.train.lr = 1e-1;
    e.train.epochs = 600;
    // Simulated CF dot scores have a spread of roughly 0.08, so the sampled
    // per-arm offsets need scaling down against them or Thompson draws are
    // pure noise for the whole 7-day arm lifetime.
    e.bandit.affinity_weight = 20.0;
    e.bandit.prior_sigma2_0 = 0.25;
    return e;
  }();

  static SimConfig from_kv(const KeyValueConfig& kv);
};

// CF store + cold-start model trained once on the bootstrap history; they
// depend only on the world, so policy arms share them.
struct TrainedArtifacts {
  EmbeddingStore store;
  MlpModel model;
  FeatureConfig fcfg;
};

struct SimWorld {
  SimConfig cfg;
  uint64_t seed = 0;
  std::vector<std::string> user_ids;
  std::map<std::string, Eigen::VectorXd> user_latents;
  std::map<std::string, Eigen::VectorXd> artist_latents;
  std::map<std::string, Eigen::VectorXd> album_latents;
  std::vector<AlbumMeta> albums;  // bootstrap + horizon releases, ts-ordered
  std::vector<UsageEvent> bootstrap_events;
  double click_a = 4.0;
  double click_b = 0.0;  // calibrated so Editorial CTR lands in [0.02, 0.08]

  double affinity(const std::string& user, const std::string& album) const;
  const TrainedArtifacts& trained() const;  // lazily built, cached

 private:
  mutable std::shared_ptr<TrainedArtifacts> trained_;
};

SimWorld generate_world(const SimConfig& cfg, uint64_t seed);

struct WeekMetrics {
  IsoWeek week;
  uint64_t displays = 0;
  uint64_t examined = 0;
  uint64_t clicks = 0;
  uint64_t distinct_displayed = 0;
  uint64_t distinct_displayed_personalized = 0;
  uint64_t distinct_examined = 0;
  uint64_t distinct_clicked = 0;
};

struct MetricsReport {
  Policy policy = Policy::Editorial;
  uint64_t seed = 0;
  size_t users = 0;
  int horizon_days = 0;
  uint64_t displays = 0;
  uint64_t examined = 0;
  uint64_t clicks = 0;
  double display_to_click_rate = 0.0;  // clicks / rendered displays
  double examined_to_click_rate = 0.0; // examination-based variant
  double weekly_distinct_displayed_mean = 0.0;
  double weekly_distinct_clicked_mean = 0.0;
  double weekly_distinct_examined_mean = 0.0;
  std::vector<uint64_t> examined_by_position;  // index 0 = position 1
  std::vector<WeekMetrics> weeks;

  std::vector<std::string> to_lines() const;  // line-record metrics file body
};

// Full-population replay of one policy.
MetricsReport run_policy(const SimWorld& world, Policy policy,
                         int horizon_days, uint64_t seed);
// Replay restricted to a user subset (A/B arms).
MetricsReport run_policy_subset(const SimWorld& world, Policy policy,
                                int horizon_days, uint64_t seed,
                                const std::vector<std::string>& users);

struct AbSeedResult {
  uint64_t seed = 0;
  MetricsReport arm_a;
  MetricsReport arm_b;
  double ctr_lift = 0.0;          // (ctr_b - ctr_a) / ctr_a
  double displayed_ratio = 0.0;   // weekly distinct displayed, b / a
  double clicked_ratio = 0.0;     // weekly distinct clicked, b / a
};

struct AbReport {
  Policy policy_a = Policy::Editorial;
  Policy policy_b = Policy::ColdStart;
  std::vector<AbSeedResult> per_seed;
  double ctr_lift_mean = 0.0, ctr_lift_stdev = 0.0;
  double displayed_ratio_mean = 0.0, displayed_ratio_stdev = 0.0;
  double clicked_ratio_mean = 0.0, clicked_ratio_stdev = 0.0;
};

// Runs each policy on an independent half of the world's users per seed.
AbReport ab_compare(const SimWorld& world, Policy policy_a, Policy policy_b,
                    int horizon_days, const std::vector<uint64_t>& seeds);

// Same, with caller-provided user splits; throws SimError on overlap.
AbSeedResult ab_compare_with_splits(const SimWorld& world, Policy policy_a,
                                    Policy policy_b, int horizon_days,
                                    uint64_t seed,
                                    const std::vector<std::string>& split_a,
                                    const std::vector<std::string>& split_b);

// Hash-based disjoint halves of the world's users for one seed.
std::pair<std::vector<std::string>, std::vector<std::string>> split_users(
    const SimWorld& world, uint64_t seed);

}  // namespace freshrec::sim
