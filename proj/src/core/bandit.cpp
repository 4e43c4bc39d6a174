#include "core/bandit.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace {
std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

#include "core/textcodec.hpp"
#include "core/util.hpp"

namespace freshrec {

const ArmState* BanditBook::find_arm(const std::string& album_id) const {
  auto it = arms_.find(album_id);
  return it == arms_.end() ? nullptr : &it->second;
}

const ArmState& BanditBook::register_arm(const std::string& album_id,
                                         int64_t release_ts, int64_t now) {
  auto it = arms_.find(album_id);
  if (it != arms_.end()) return it->second;  // idempotent
  if (now < release_ts || now - release_ts >= kNewReleaseWindowSeconds)
    throw BanditError("expired arm: album '" + album_id +
                      "' is outside its release window");
  ArmState arm;
  arm.album_id = album_id;
  arm.mu = config_.prior_mu0;
  arm.sigma2 = config_.prior_sigma2_0;
  arm.created_at = now;
  arm.expires_at = release_ts + kNewReleaseWindowSeconds;
  return arms_.emplace(album_id, std::move(arm)).first->second;
}

std::vector<std::string> BanditBook::expire_arms(int64_t now) {
  std::vector<std::string> removed;
  for (auto it = arms_.begin(); it != arms_.end();) {
    if (it->second.expires_at <= now) {
      removed.push_back(it->first);
      it = arms_.erase(it);  // pending rewards discarded with the arm
    } else {
      ++it;
    }
  }
  return removed;  // map order => sorted by id
}

SampleResult BanditBook::sample_and_rank(
    const Eigen::VectorXd& user_vec,
    const std::map<std::string, Eigen::VectorXd>& predicted, int k,
    std::mt19937_64& rng, const std::set<std::string>& exclude) const {
  if (k < 1) throw BanditError("k must be >= 1");
  SampleResult result;
  std::normal_distribution<double> gauss(0.0, 1.0);
  // Iterate in id order so the rng stream is consumed deterministically.
  for (const auto& [album_id, arm] : arms_) {
    if (exclude.count(album_id)) continue;
    auto pred = predicted.find(album_id);
    if (pred == predicted.end()) {
      ++result.skipped_without_prediction;
      continue;
    }
    const double theta = arm.mu + std::sqrt(arm.sigma2) * gauss(rng);
    const double score =
        config_.affinity_weight * user_vec.dot(pred->second) + theta;
    result.ranked.emplace_back(album_id, score);
  }
  std::sort(result.ranked.begin(), result.ranked.end(),
            [](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second > b.second;
              return a.first < b.first;
            });
  if (static_cast<int>(result.ranked.size()) > k) result.ranked.resize(k);
  return result;
}

void BanditBook::add_reward(const std::string& album_id, int reward) {
  if (reward != 0 && reward != 1)
    throw BanditError("reward must be 0 or 1");
  auto it = arms_.find(album_id);
  if (it == arms_.end()) return;
  it->second.pending.push_back(reward);
}

size_t BanditBook::batch_update() {
  size_t updated = 0;
  for (auto& [_, arm] : arms_) {
    if (arm.pending.empty()) continue;
    const double n = static_cast<double>(arm.pending.size());
    double reward_sum = 0.0;
    for (int r : arm.pending) reward_sum += r;
    const double precision = 1.0 / arm.sigma2 + n / config_.obs_var;
    arm.mu = (arm.mu / arm.sigma2 + reward_sum / config_.obs_var) / precision;
    arm.sigma2 = 1.0 / precision;
    arm.n_obs += arm.pending.size();
    arm.pending.clear();
    ++updated;
  }
  return updated;
}

std::map<std::string, int> attribute_rewards(
    const std::vector<std::string>& slate_positions,
    std::optional<int> click_pos, int seen_depth) {
  if (seen_depth < 1) throw BanditError("seen_depth must be >= 1");
  std::map<std::string, int> rewards;
  const int len = static_cast<int>(slate_positions.size());
  if (click_pos) {
    if (*click_pos < 1 || *click_pos > len)
      throw BanditError("click position out of range");
    for (int p = 1; p < *click_pos; ++p) rewards[slate_positions[p - 1]] = 0;
    rewards[slate_positions[*click_pos - 1]] = 1;
  } else {
    for (int p = 1; p <= std::min(seen_depth, len); ++p)
      rewards[slate_positions[p - 1]] = 0;
  }
  return rewards;
}

void BanditBook::save_arm_table(const std::string& path,
                                uint64_t version) const {
  std::ofstream out(path);
  if (!out) throw BanditError("cannot write arm table: " + path);
  Record header;
  header.add("kind", "arm_table");
  header.add("version", std::to_string(version));
  header.add("arms", std::to_string(arms_.size()));
  out << encode_record(header) << '\n';
  for (const auto& [_, arm] : arms_) {
    Record rec;
    rec.add("kind", "arm");
    rec.add("album", arm.album_id);
    rec.add("mu", format_double(arm.mu));
    rec.add("sigma2", format_double(arm.sigma2));
    rec.add("n_obs", std::to_string(arm.n_obs));
    rec.add("created_at", std::to_string(arm.created_at));
    rec.add("expires_at", std::to_string(arm.expires_at));
    if (!arm.pending.empty()) {
      std::string digits;
      for (int r : arm.pending) digits.push_back(r ? '1' : '0');
      rec.add("pending", digits);
    }
    out << encode_record(rec) << '\n';
  }
  if (!out) throw BanditError("short write on arm table: " + path);
}

BanditBook BanditBook::load_arm_table(const std::string& path,
                                      BanditConfig config) {
  std::ifstream in(path);
  if (!in) throw BanditError("cannot open arm table: " + path);
  BanditBook book(config);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    Record rec = decode_record(line);
    if (rec.require("kind") != "arm") continue;
    ArmState arm;
    arm.album_id = std::string(rec.require("album"));
    arm.mu = std::stod(std::string(rec.require("mu")));
    arm.sigma2 = std::stod(std::string(rec.require("sigma2")));
    arm.n_obs = std::stoull(std::string(rec.require("n_obs")));
    arm.created_at = std::stoll(std::string(rec.require("created_at")));
    arm.expires_at = std::stoll(std::string(rec.require("expires_at")));
    if (auto digits = rec.get("pending")) {
      for (char ch : *digits) {
        if (ch != '0' && ch != '1')
          throw BanditError("arm table: bad pending digit");
        arm.pending.push_back(ch - '0');
      }
    }
    if (arm.sigma2 <= 0) throw BanditError("arm table: sigma2 must be > 0");
    book.arms_.emplace(arm.album_id, std::move(arm));
  }
  return book;
}

}  // namespace freshrec
