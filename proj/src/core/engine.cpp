#include "core/engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "core/util.hpp"

namespace freshrec {

const char* policy_name(Policy p) {
  switch (p) {
    case Policy::Editorial: return "editorial";
    case Policy::ColdStart: return "coldstart";
    case Policy::TsColdStart: return "ts-coldstart";
  }
  return "?";
}

std::optional<Policy> policy_from_name(std::string_view name) {
  if (name == "editorial") return Policy::Editorial;
  if (name == "coldstart") return Policy::ColdStart;
  if (name == "ts-coldstart") return Policy::TsColdStart;
  return std::nullopt;
}

std::string Slate::to_document() const {
  std::ostringstream out;
  Record header;
  header.add("kind", "slate");
  header.add("id", slate_id);
  header.add("user", user_id);
  header.add("policy", policy_name(policy));
  header.add("snapshot_version", std::to_string(snapshot_version));
  header.add("created_at", std::to_string(created_at));
  header.add("fallback_user", fallback_user ? "1" : "0");
  header.add("entries", std::to_string(entries.size()));
  out << encode_record(header) << '\n';
  for (const auto& e : entries) {
    Record rec;
    rec.add("kind", "entry");
    rec.add("position", std::to_string(e.position));
    rec.add("album", e.album_id);
    rec.add("section", e.section == SlateSection::Unmissable ? "unmissable"
                                                             : "personalized");
    out << encode_record(rec) << '\n';
  }
  return out.str();
}

EngineConfig EngineConfig::from_kv(const KeyValueConfig& kv) {
  return from_kv(kv, EngineConfig{});
}

EngineConfig EngineConfig::from_kv(const KeyValueConfig& kv, EngineConfig base) {
  EngineConfig c = std::move(base);
  c.dim = static_cast<int>(kv.get_int("dim", c.dim));
  c.h1 = static_cast<int>(kv.get_int("hidden1", c.h1));
  c.h2 = static_cast<int>(kv.get_int("hidden2", c.h2));
  c.label_buckets = static_cast<int>(kv.get_int("label_buckets", c.label_buckets));
  c.beta_like = kv.get_double("beta_like", c.beta_like);
  c.min_interactions =
      static_cast<uint32_t>(kv.get_int("min_interactions", c.min_interactions));
  c.svd_iters = static_cast<int>(kv.get_int("svd_iters", c.svd_iters));
  c.svd_oversample =
      static_cast<int>(kv.get_int("svd_oversample", c.svd_oversample));
  c.svd_seed = static_cast<uint64_t>(kv.get_int("svd_seed", c.svd_seed));
  c.train.lr = kv.get_double("train_lr", c.train.lr);
  c.train.epochs = static_cast<int>(kv.get_int("train_epochs", c.train.epochs));
  c.train.batch_size =
      static_cast<int>(kv.get_int("train_batch_size", c.train.batch_size));
  c.train.seed = static_cast<uint64_t>(kv.get_int("train_seed", c.train.seed));
  c.train.h1 = c.h1;
  c.train.h2 = c.h2;
  c.feature_cutoff_after_release =
      kv.get_int("feature_cutoff_hours", c.feature_cutoff_after_release /
                                             kSecondsPerHour) *
      kSecondsPerHour;
  const std::string mode = kv.get_string("index_mode", "exact");
  if (mode == "exact") {
    c.index_mode = IndexMode::Exact;
  } else if (mode == "ivf") {
    c.index_mode = IndexMode::CoarseIVF;
  } else {
    throw ConfigError("index_mode must be 'exact' or 'ivf'");
  }
  c.ivf_clusters = static_cast<int>(kv.get_int("ivf_clusters", c.ivf_clusters));
  c.ivf_nprobe = static_cast<int>(kv.get_int("ivf_nprobe", c.ivf_nprobe));
  c.bandit.prior_mu0 = kv.get_double("bandit_prior_mu", c.bandit.prior_mu0);
  c.bandit.prior_sigma2_0 =
      kv.get_double("bandit_prior_sigma2", c.bandit.prior_sigma2_0);
  c.bandit.obs_var = kv.get_double("bandit_obs_var", c.bandit.obs_var);
  c.bandit.affinity_weight =
      kv.get_double("bandit_affinity_weight", c.bandit.affinity_weight);
  c.bandit.seen_depth =
      static_cast<int>(kv.get_int("bandit_seen_depth", c.bandit.seen_depth));
  c.bandit.update_period =
      kv.get_int("update_period_hours", c.bandit.update_period / kSecondsPerHour) *
      kSecondsPerHour;
  c.editorial_list_len =
      static_cast<int>(kv.get_int("editorial_list_len", c.editorial_list_len));
  c.editorial_epoch = kv.get_int("editorial_epoch", c.editorial_epoch);
  c.carousel_len = static_cast<int>(kv.get_int("carousel_len", c.carousel_len));
  c.view_all_len = static_cast<int>(kv.get_int("view_all_len", c.view_all_len));
  c.engine_seed = static_cast<uint64_t>(kv.get_int("engine_seed", c.engine_seed));
  c.catalog_path = kv.get_string("catalog_path", "");
  c.events_path = kv.get_string("events_path", "");
  c.store_path = kv.get_string("store_path", "");
  c.model_path = kv.get_string("model_path", "");
  c.arms_path = kv.get_string("arms_path", "");
  if (c.bandit.prior_sigma2_0 <= 0 || c.bandit.obs_var <= 0)
    throw ConfigError("bandit variances must be > 0");
  if (c.bandit.seen_depth < 1) throw ConfigError("bandit_seen_depth must be >= 1");
  return c;
}

Engine::Engine(EngineConfig config)
    : config_(std::move(config)),
      bandit_(config_.bandit),
      engine_rng_(splitmix64(config_.engine_seed)) {}

void Engine::set_store(EmbeddingStore store) {
  std::lock_guard lock(mu_);
  if (store.version <= store_.version) store.version = store_.version + 1;
  store_ = std::move(store);
}

void Engine::set_model(MlpModel model, FeatureConfig fcfg) {
  std::lock_guard lock(mu_);
  model_ = std::move(model);
  fcfg_ = std::move(fcfg);
}

void Engine::set_bandit(BanditBook book) {
  std::lock_guard lock(mu_);
  bandit_ = std::move(book);
}

const MlpModel& Engine::model() const {
  if (!model_) throw EngineError("no cold-start model loaded");
  return *model_;
}

const FeatureConfig& Engine::feature_config() const { return fcfg_; }

void Engine::train_cf(int64_t window_end, int64_t window_len) {
  std::lock_guard lock(mu_);
  InteractionMatrix m =
      build_matrix(catalog_, window_end, window_len, config_.beta_like);
  EmbeddingStore next = truncated_svd(m, config_.dim, config_.svd_iters,
                                      config_.svd_seed, config_.svd_oversample);
  next.version = store_.version + 1;
  store_ = std::move(next);
}

TrainReport Engine::train_coldstart() {
  std::lock_guard lock(mu_);
  if (store_.item_vecs.empty())
    throw EngineError("train_coldstart requires a trained embedding store");
  FeatureConfig fcfg = FeatureConfig::from_catalog(
      catalog_, config_.dim, config_.label_buckets, config_.min_interactions);
  std::vector<TrainExample> dataset;
  for (const auto& [album_id, album] : catalog_.albums()) {
    auto target = ground_truth_for(album_id, store_, config_.min_interactions);
    if (!target) continue;
    const int64_t cutoff =
        album.release_ts + config_.feature_cutoff_after_release;
    dataset.emplace_back(build_features(album, store_, cutoff, catalog_, fcfg),
                         *target);
  }
  if (dataset.empty())
    throw EngineError("no albums with ground-truth embeddings to train on");
  TrainParams params = config_.train;
  params.h1 = config_.h1;
  params.h2 = config_.h2;
  auto [model, report] = train(dataset, params);
  model_ = std::move(model);
  fcfg_ = std::move(fcfg);
  return report;
}

int64_t Engine::editorial_week_start(int64_t now) const {
  int64_t offset = (now - config_.editorial_epoch) % (7 * kSecondsPerDay);
  if (offset < 0) offset += 7 * kSecondsPerDay;
  return now - offset;
}

const std::vector<std::string>& Engine::editorial_list(
    int64_t week_start, const std::string& genre) {
  EditorialWeek& week = editorial_weeks_[week_start];
  auto it = week.genre_lists.find(genre);
  if (it != week.genre_lists.end()) return it->second;

  // Rank the week's releases in this genre by the historical stream count
  // of their artists, computed strictly before the week start so the list
  // is identical no matter when during the week it is first requested.
  std::vector<std::pair<uint64_t, std::string>> ranked;
  for (const auto& [album_id, album] : catalog_.albums()) {
    if (album.release_ts < week_start ||
        album.release_ts >= week_start + 7 * kSecondsPerDay)
      continue;
    if (std::find(album.genre_ids.begin(), album.genre_ids.end(), genre) ==
        album.genre_ids.end())
      continue;
    uint64_t popularity = 0;
    for (const auto& artist : album.artist_ids)
      for (const auto& other : catalog_.albums_by_artist(artist))
        popularity += catalog_.count_usage(other, 0, week_start).first;
    ranked.emplace_back(popularity, album_id);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> list;
  for (const auto& [_, id] : ranked) {
    if (static_cast<int>(list.size()) >= config_.editorial_list_len) break;
    list.push_back(id);
  }
  return week.genre_lists.emplace(genre, std::move(list)).first->second;
}

std::vector<std::string> Engine::genre_preference(
    const std::string& user_id) const {
  std::map<std::string, uint64_t> counts;
  for (const auto& ev : catalog_.events_for_user(user_id)) {
    if (ev.type != EventType::Stream) continue;
    const AlbumMeta* album = catalog_.find_album(ev.subject);
    if (!album) continue;
    for (const auto& genre : album->genre_ids) ++counts[genre];
  }
  // Catalog-wide genre frequency breaks ties and covers genres the user has
  // never streamed (and cold users entirely).
  std::map<std::string, uint64_t> global;
  for (const auto& [_, album] : catalog_.albums())
    for (const auto& genre : album.genre_ids) ++global[genre];
  std::vector<std::string> genres;
  for (const auto& [genre, _] : global) genres.push_back(genre);
  std::sort(genres.begin(), genres.end(),
            [&](const std::string& a, const std::string& b) {
              const uint64_t ca = counts.count(a) ? counts.at(a) : 0;
              const uint64_t cb = counts.count(b) ? counts.at(b) : 0;
              if (ca != cb) return ca > cb;
              if (global.at(a) != global.at(b)) return global.at(a) > global.at(b);
              return a < b;
            });
  return genres;
}

std::string Engine::top_genre(const std::string& user_id) const {
  std::vector<std::string> genres = genre_preference(user_id);
  return genres.empty() ? std::string() : genres.front();
}

Eigen::VectorXd Engine::user_vector(const std::string& user_id,
                                    bool* fallback) const {
  auto it = store_.user_vecs.find(user_id);
  if (it != store_.user_vecs.end()) {
    *fallback = false;
    return it->second;
  }
  if (store_.user_vecs.empty())
    throw EngineError("embedding store has no user vectors");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(store_.dim);
  for (const auto& [_, vec] : store_.user_vecs) mean += vec;
  *fallback = true;
  return mean / static_cast<double>(store_.user_vecs.size());
}

Slate Engine::build_carousel(const std::string& user_id, int64_t now,
                             Policy policy, int k, std::mt19937_64* rng) {
  std::lock_guard lock(mu_);
  if (k <= 0) k = config_.carousel_len;
  std::mt19937_64& r = rng ? *rng : engine_rng_;
  return assemble(user_id, now, policy, k, r);
}

Slate Engine::view_all(const std::string& user_id, int64_t now, Policy policy,
                       std::mt19937_64* rng) {
  std::lock_guard lock(mu_);
  std::mt19937_64& r = rng ? *rng : engine_rng_;
  return assemble(user_id, now, policy, config_.view_all_len, r);
}

Slate Engine::assemble(const std::string& user_id, int64_t now, Policy policy,
                       int k, std::mt19937_64& rng) {
  Slate slate;
  slate.user_id = user_id;
  slate.policy = policy;
  slate.created_at = now;

  const std::vector<std::string> window = catalog_.new_release_window(now);
  std::vector<std::string> prefix = catalog_.unmissable_for(user_id, window);
  if (static_cast<int>(prefix.size()) > k) prefix.resize(k);

  std::set<std::string> used(prefix.begin(), prefix.end());
  for (const auto& album_id : prefix) {
    SlateEntry e;
    e.album_id = album_id;
    e.section = SlateSection::Unmissable;
    e.position = static_cast<int>(slate.entries.size()) + 1;
    slate.entries.push_back(std::move(e));
  }

  const int remaining = k - static_cast<int>(slate.entries.size());
  std::vector<std::string> tail;
  if (remaining > 0) {
    switch (policy) {
      case Policy::Editorial: {
        const int64_t week = editorial_week_start(now);
        std::set<std::string> in_window(window.begin(), window.end());
        // Favorite genre first, then the user's next genres, so the slate
        // fills to the same length the personalized policies serve.
        for (const auto& genre : genre_preference(user_id)) {
          if (static_cast<int>(tail.size()) >= remaining) break;
          for (const auto& album_id : editorial_list(week, genre)) {
            if (static_cast<int>(tail.size()) >= remaining) break;
            if (used.count(album_id) || !in_window.count(album_id)) continue;
            if (std::find(tail.begin(), tail.end(), album_id) != tail.end())
              continue;
            tail.push_back(album_id);
          }
        }
        slate.snapshot_version = static_cast<uint64_t>(week);
        break;
      }
      case Policy::ColdStart: {
        const Eigen::VectorXd uvec = user_vector(user_id, &slate.fallback_user);
        auto snapshot = index_.get();
        for (auto& [album_id, score] :
             query_index(*snapshot, uvec, remaining, used))
          tail.push_back(album_id);
        slate.snapshot_version = snapshot->version;
        break;
      }
      case Policy::TsColdStart: {
        const Eigen::VectorXd uvec = user_vector(user_id, &slate.fallback_user);
        SampleResult sampled =
            bandit_.sample_and_rank(uvec, predictions_, remaining, rng, used);
        for (auto& [album_id, score] : sampled.ranked)
          tail.push_back(album_id);
        slate.snapshot_version = predictions_version_;
        break;
      }
    }
  }
  for (const auto& album_id : tail) {
    SlateEntry e;
    e.album_id = album_id;
    e.section = SlateSection::Personalized;
    e.position = static_cast<int>(slate.entries.size()) + 1;
    slate.entries.push_back(std::move(e));
  }

  slate.slate_id = "s" + std::to_string(++slate_counter_);
  issued_slates_[slate.slate_id] = slate;
  return slate;
}

void Engine::record_display(const std::string& slate_id,
                            std::optional<int> click_position, int64_t ts) {
  std::lock_guard lock(mu_);
  auto it = issued_slates_.find(slate_id);
  if (it == issued_slates_.end())
    throw EngineError("unknown slate id: " + slate_id);
  const Slate& slate = it->second;
  if (click_position &&
      (*click_position < 1 ||
       *click_position > static_cast<int>(slate.entries.size())))
    throw EngineError("click position out of range");

  for (const auto& entry : slate.entries) {
    UsageEvent ev;
    ev.type = EventType::Display;
    ev.user_id = slate.user_id;
    ev.subject = entry.album_id;
    ev.ts = ts;
    ev.position = entry.position;
    ev.slate_id = slate_id;
    catalog_.add_event(ev);
  }
  if (click_position) {
    const SlateEntry& clicked = slate.entries[*click_position - 1];
    UsageEvent ev;
    ev.type = EventType::Click;
    ev.user_id = slate.user_id;
    ev.subject = clicked.album_id;
    ev.ts = ts;
    ev.position = *click_position;
    ev.slate_id = slate_id;
    catalog_.add_event(ev);
  }

  // The bandit owns only the personalized tail; positions are re-indexed
  // within it.
  if (slate.policy == Policy::TsColdStart) {
    std::vector<std::string> tail;
    std::optional<int> tail_click;
    for (const auto& entry : slate.entries) {
      if (entry.section != SlateSection::Personalized) continue;
      tail.push_back(entry.album_id);
      if (click_position && entry.position == *click_position)
        tail_click = static_cast<int>(tail.size());
    }
    if (!tail.empty() && !(click_position && !tail_click)) {
      // Click in the unmissable prefix: no bandit feedback at all.
      for (const auto& [album_id, reward] :
           attribute_rewards(tail, tail_click, config_.bandit.seen_depth))
        bandit_.add_reward(album_id, reward);
    }
  }
}

void Engine::log_event(const UsageEvent& ev) {
  std::lock_guard lock(mu_);
  catalog_.add_event(ev);
}

TickReport Engine::scheduler_tick(int64_t now) {
  std::lock_guard lock(mu_);
  TickReport report;
  report.now = now;

  const std::vector<std::string> window = catalog_.new_release_window(now);
  report.window_albums = window.size();

  // Stage 1: refresh predictions (forward pass over the live window).
  std::map<std::string, Eigen::VectorXd> next_predictions;
  if (model_) {
    for (const auto& album_id : window) {
      const AlbumMeta* album = catalog_.find_album(album_id);
      if (!album) continue;
      next_predictions[album_id] = model_->predict(
          build_features(*album, store_, now, catalog_, fcfg_));
    }
  }

  // Stage 2: rebuild the index over the new predictions.
  IndexMode mode = config_.index_mode;
  IvfParams ivf;
  if (mode == IndexMode::CoarseIVF && !next_predictions.empty()) {
    const int n = static_cast<int>(next_predictions.size());
    ivf.num_clusters = config_.ivf_clusters > 0
                           ? std::min(config_.ivf_clusters, n)
                           : static_cast<int>(std::ceil(std::sqrt(n)));
    ivf.nprobe = config_.ivf_nprobe > 0
                     ? config_.ivf_nprobe
                     : (ivf.num_clusters + 3) / 4;
  } else {
    mode = IndexMode::Exact;  // empty prediction set: serve an empty index
  }
  IndexSnapshot next_index =
      build_index(next_predictions, mode, ivf,
                  splitmix64(config_.engine_seed ^ static_cast<uint64_t>(now)),
                  index_.get()->version + 1);

  // Stage 3: bandit lifecycle + batched posterior update, on a copy.
  BanditBook next_bandit = bandit_;
  report.expired_arms = next_bandit.expire_arms(now);
  for (const auto& album_id : window) {
    const AlbumMeta* album = catalog_.find_album(album_id);
    if (!album) continue;
    if (!next_bandit.find_arm(album_id)) ++report.registered_arms;
    next_bandit.register_arm(album_id, album->release_ts, now);
  }
  report.updated_arms = next_bandit.batch_update();

  if (tick_failpoint_) tick_failpoint_();

  // Commit. Nothing above mutated served state.
  predictions_ = std::move(next_predictions);
  ++predictions_version_;
  report.predictions = predictions_.size();
  report.prediction_version = predictions_version_;
  report.index_version = next_index.version;
  index_.swap(std::move(next_index));
  bandit_ = std::move(next_bandit);
  now_ = now;
  if (!config_.arms_path.empty())
    bandit_.save_arm_table(config_.arms_path, predictions_version_);
  return report;
}

}  // namespace freshrec
