#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "core/bandit.hpp"
#include "core/catalog.hpp"
#include "core/cf_trainer.hpp"
#include "core/coldstart.hpp"
#include "core/config.hpp"
#include "core/vector_index.hpp"

namespace freshrec {

struct EngineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Policy { Editorial, ColdStart, TsColdStart };

const char* policy_name(Policy p);
std::optional<Policy> policy_from_name(std::string_view name);

enum class SlateSection { Unmissable, Personalized };

struct SlateEntry {
  std::string album_id;
  SlateSection section = SlateSection::Personalized;
  int position = 0;  // 1-based
};

struct Slate {
  std::string slate_id;
  std::string user_id;
  std::vector<SlateEntry> entries;
  Policy policy = Policy::Editorial;
  uint64_t snapshot_version = 0;
  int64_t created_at = 0;
  bool fallback_user = false;  // no CF vector; mean user vector was used

  std::string to_document() const;  // line-record text document
};

struct TickReport {
  int64_t now = 0;
  size_t window_albums = 0;
  size_t predictions = 0;
  uint64_t prediction_version = 0;
  uint64_t index_version = 0;
  std::vector<std::string> expired_arms;
  size_t registered_arms = 0;
  size_t updated_arms = 0;
};

struct EngineConfig {
  int dim = 32;
  int h1 = 64;
  int h2 = 64;
  int label_buckets = 64;
  double beta_like = 1.0;
  uint32_t min_interactions = 10;
  int svd_iters = 7;
  int svd_oversample = 8;
  uint64_t svd_seed = 1;
  TrainParams train;
  int64_t feature_cutoff_after_release = 24 * kSecondsPerHour;  // for training
  IndexMode index_mode = IndexMode::Exact;
  int ivf_clusters = 0;  // 0 = ceil(sqrt(N))
  int ivf_nprobe = 0;    // 0 = ceil(clusters / 4)
  BanditConfig bandit;
  int editorial_list_len = 20;
  // Week boundaries are aligned to this epoch offset; 86400 puts them on
  // Fridays (1970-01-02 was a Friday).
  int64_t editorial_epoch = kSecondsPerDay;
  int carousel_len = 12;
  int view_all_len = 100;
  uint64_t engine_seed = 42;
  std::string catalog_path;
  std::string events_path;
  std::string store_path;
  std::string model_path;
  std::string arms_path;

  static EngineConfig from_kv(const KeyValueConfig& kv);
  // Applies kv on top of caller-chosen defaults instead of EngineConfig{}.
  static EngineConfig from_kv(const KeyValueConfig& kv, EngineConfig base);
};

// Serving core: owns the catalog, embedding store, cold-start model,
// prediction/index snapshots and the bandit book. Requests are read-only
// against snapshots; scheduler_tick is the single writer. Public methods
// are serialized with one engine mutex (requests are cheap; contention is
// not a concern at desk scale).
class Engine {
 public:
  explicit Engine(EngineConfig config);

  const EngineConfig& config() const { return config_; }
  Catalog& catalog() { return catalog_; }
  const Catalog& catalog() const { return catalog_; }

  // Artifact loading / training ---------------------------------------------
  void set_store(EmbeddingStore store);
  void set_model(MlpModel model, FeatureConfig fcfg);
  void set_bandit(BanditBook book);
  const EmbeddingStore& store() const { return store_; }
  bool has_model() const { return model_.has_value(); }
  const MlpModel& model() const;
  const FeatureConfig& feature_config() const;

  // Builds the interaction matrix over [window_end - 7d, window_end) and
  // factorizes it. Stores the result in-engine (version bumped).
  void train_cf(int64_t window_end,
                int64_t window_len = 7 * kSecondsPerDay);
  // Trains the cold-start network on every album with a ground-truth
  // embedding in the current store. Returns the training report.
  TrainReport train_coldstart();

  // Serving ------------------------------------------------------------------
  Slate build_carousel(const std::string& user_id, int64_t now, Policy policy,
                       int k = 0, std::mt19937_64* rng = nullptr);
  Slate view_all(const std::string& user_id, int64_t now, Policy policy,
                 std::mt19937_64* rng = nullptr);
  void record_display(const std::string& slate_id,
                      std::optional<int> click_position, int64_t ts);
  // Append an arbitrary usage event (e.g. a post-click stream).
  void log_event(const UsageEvent& ev);

  // 4-hourly refresh: predictions -> index swap -> bandit lifecycle+update.
  // All-or-nothing: on failure previous snapshots stay live.
  TickReport scheduler_tick(int64_t now);

  int64_t now() const { return now_; }
  uint64_t prediction_version() const { return predictions_version_; }
  std::shared_ptr<const IndexSnapshot> index_snapshot() const {
    return index_.get();
  }
  const BanditBook& bandit() const { return bandit_; }
  const std::map<std::string, Eigen::VectorXd>& predictions() const {
    return predictions_;
  }

  // Test hook: invoked after snapshots are built but before commit; a throw
  // must leave previously served state untouched.
  void set_tick_failpoint(std::function<void()> fn) {
    tick_failpoint_ = std::move(fn);
  }

 private:
  EngineConfig config_;
  Catalog catalog_;
  EmbeddingStore store_;
  std::optional<MlpModel> model_;
  FeatureConfig fcfg_;

  std::map<std::string, Eigen::VectorXd> predictions_;
  uint64_t predictions_version_ = 0;
  IndexHandle index_;
  BanditBook bandit_;
  int64_t now_ = 0;

  std::map<std::string, Slate> issued_slates_;
  uint64_t slate_counter_ = 0;
  std::mt19937_64 engine_rng_;
  std::function<void()> tick_failpoint_;
  std::recursive_mutex mu_;

  // Editorial caches, keyed by week start.
  struct EditorialWeek {
    std::map<std::string, std::vector<std::string>> genre_lists;
  };
  std::map<int64_t, EditorialWeek> editorial_weeks_;

  int64_t editorial_week_start(int64_t now) const;
  const std::vector<std::string>& editorial_list(int64_t week_start,
                                                 const std::string& genre);
  std::vector<std::string> genre_preference(const std::string& user_id) const;
  std::string top_genre(const std::string& user_id) const;
  Eigen::VectorXd user_vector(const std::string& user_id,
                              bool* fallback) const;
  Slate assemble(const std::string& user_id, int64_t now, Policy policy, int k,
                 std::mt19937_64& rng);
};

}  // namespace freshrec
