#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace freshrec {

struct BanditError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Gaussian posterior over a per-album click-affinity offset, stacked on top
// of the frozen personalized dot-product score.
struct ArmState {
  std::string album_id;
  double mu = 0.0;
  double sigma2 = 1.0;
  uint64_t n_obs = 0;  // absorbed rewards only
  int64_t created_at = 0;
  int64_t expires_at = 0;  // release_ts + 7 days
  std::vector<int> pending;  // rewards in {0, 1} awaiting the next batch
};

struct BanditConfig {
  double prior_mu0 = 0.0;
  double prior_sigma2_0 = 1.0;
  double obs_var = 0.25;        // known observation variance sigma_r^2
  double affinity_weight = 1.0; // alpha on the dot-product term
  int seen_depth = 3;           // positions observed when nothing is clicked
  int64_t update_period = 4 * 3600;
};

struct SampleResult {
  std::vector<std::pair<std::string, double>> ranked;  // (album, sampled score)
  int skipped_without_prediction = 0;
};

// Thompson-Sampling book over the evolving new-release arm set.
// Value-copyable: the scheduler updates a copy and commits it wholesale.
class BanditBook {
 public:
  BanditBook() = default;
  explicit BanditBook(BanditConfig config) : config_(config) {}

  const BanditConfig& config() const { return config_; }
  const std::map<std::string, ArmState>& arms() const { return arms_; }
  const ArmState* find_arm(const std::string& album_id) const;

  // Idempotent; throws BanditError("expired arm") if the album is outside
  // its 7-day window at `now`.
  const ArmState& register_arm(const std::string& album_id, int64_t release_ts,
                               int64_t now);

  // Removes every arm with expires_at <= now; returns removed ids (sorted).
  std::vector<std::string> expire_arms(int64_t now);

  // score(u, a) = alpha * dot(user_vec, predicted[a]) + theta_a with
  // theta_a ~ N(mu_a, sigma2_a) drawn fresh per call. Top-k by sampled
  // score, ties by album id. Arms without a prediction are skipped.
  SampleResult sample_and_rank(
      const Eigen::VectorXd& user_vec,
      const std::map<std::string, Eigen::VectorXd>& predicted, int k,
      std::mt19937_64& rng, const std::set<std::string>& exclude = {}) const;

  // Appends a pending reward; silently ignored for unknown arms (they may
  // have expired between display and feedback).
  void add_reward(const std::string& album_id, int reward);

  // Conjugate Gaussian update with known observation variance; clears
  // pending buffers. Returns the number of arms that absorbed rewards.
  size_t batch_update();

  void save_arm_table(const std::string& path, uint64_t version) const;
  static BanditBook load_arm_table(const std::string& path,
                                   BanditConfig config);

 private:
  BanditConfig config_;
  std::map<std::string, ArmState> arms_;
};

// Cascade position attribution over one displayed slate: with a click at
// position p, positions 1..p-1 get reward 0 and p gets 1; positions past p
// are unobserved. Without a click, the first `seen_depth` positions get 0.
std::map<std::string, int> attribute_rewards(
    const std::vector<std::string>& slate_positions,
    std::optional<int> click_pos, int seen_depth);

}  // namespace freshrec
