#include "core/vector_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace freshrec {

namespace {

// Lloyd's k-means with deterministic seeded init. Returns centroids and the
// assignment of each row.
std::pair<Eigen::MatrixXd, std::vector<int>> kmeans(
    const Eigen::MatrixXd& points, int k, uint64_t seed, int max_iters = 50,
    double shift_tol = 1e-6) {
  const int n = static_cast<int>(points.rows());
  const int d = static_cast<int>(points.cols());
  std::vector<int> init(n);
  std::iota(init.begin(), init.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(init.begin(), init.end(), rng);

  Eigen::MatrixXd centroids(k, d);
  for (int c = 0; c < k; ++c) centroids.row(c) = points.row(init[c]);

  std::vector<int> assignment(n, 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (int c = 0; c < k; ++c) {
        const double dist = (points.row(i) - centroids.row(c)).squaredNorm();
        if (dist < best) {
          best = dist;
          best_c = c;
        }
      }
      assignment[i] = best_c;
    }
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, d);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      next.row(assignment[i]) += points.row(i);
      ++counts[assignment[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        next.row(c) /= counts[c];
      } else {
        // Re-seed an empty cluster with the point farthest from its centroid.
        double worst = -1.0;
        int worst_i = 0;
        for (int i = 0; i < n; ++i) {
          const double dist =
              (points.row(i) - centroids.row(assignment[i])).squaredNorm();
          if (dist > worst) {
            worst = dist;
            worst_i = i;
          }
        }
        next.row(c) = points.row(worst_i);
        assignment[worst_i] = c;
      }
    }
    const double shift = (next - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(next);
    if (shift < shift_tol) break;
  }
  // Final assignment against the converged centroids.
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_c = 0;
    for (int c = 0; c < k; ++c) {
      const double dist = (points.row(i) - centroids.row(c)).squaredNorm();
      if (dist < best) {
        best = dist;
        best_c = c;
      }
    }
    assignment[i] = best_c;
  }
  return {std::move(centroids), std::move(assignment)};
}

void collect_topk(std::vector<std::pair<std::string, double>>& scored, int k) {
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second > b.second;
              return a.first < b.first;
            });
  if (static_cast<int>(scored.size()) > k) scored.resize(k);
}

}  // namespace

IndexSnapshot build_index(const std::map<std::string, Eigen::VectorXd>& items,
                          IndexMode mode, IvfParams ivf, uint64_t seed,
                          uint64_t version) {
  IndexSnapshot snap;
  snap.version = version;
  snap.mode = mode;
  if (items.empty()) {
    if (mode == IndexMode::CoarseIVF)
      throw IndexError("CoarseIVF index requires a nonempty item set");
    return snap;
  }
  const int d = static_cast<int>(items.begin()->second.size());
  snap.ids.reserve(items.size());
  snap.vectors.resize(static_cast<Eigen::Index>(items.size()), d);
  Eigen::Index row = 0;
  for (const auto& [id, vec] : items) {
    if (vec.size() != d)
      throw IndexError("inconsistent vector dimensions in index build");
    snap.ids.push_back(id);
    snap.vectors.row(row++) = vec.transpose();
  }
  if (mode == IndexMode::CoarseIVF) {
    if (ivf.num_clusters < 1 ||
        ivf.num_clusters > static_cast<int>(items.size()))
      throw IndexError("num_clusters must be in [1, N]");
    if (ivf.nprobe < 1) throw IndexError("nprobe must be >= 1");
    ivf.nprobe = std::min(ivf.nprobe, ivf.num_clusters);
    snap.ivf = ivf;
    auto [centroids, assignment] =
        kmeans(snap.vectors, ivf.num_clusters, seed);
    snap.centroids = std::move(centroids);
    snap.cells.assign(ivf.num_clusters, {});
    for (size_t i = 0; i < assignment.size(); ++i)
      snap.cells[assignment[i]].push_back(static_cast<int>(i));
  }
  return snap;
}

std::vector<std::pair<std::string, double>> query_index(
    const IndexSnapshot& snapshot, const Eigen::VectorXd& user_vec, int k,
    const std::set<std::string>& exclude) {
  if (k < 1) throw IndexError("k must be >= 1");
  if (snapshot.size() == 0) return {};
  if (user_vec.size() != snapshot.vectors.cols())
    throw IndexError("query vector dimension mismatch");

  std::vector<std::pair<std::string, double>> scored;
  auto scan_row = [&](int i) {
    const std::string& id = snapshot.ids[i];
    if (exclude.count(id)) return;
    scored.emplace_back(id, snapshot.vectors.row(i).dot(user_vec));
  };

  if (snapshot.mode == IndexMode::Exact) {
    scored.reserve(snapshot.size());
    for (int i = 0; i < static_cast<int>(snapshot.size()); ++i) scan_row(i);
  } else {
    // Rank cells by centroid score, probe the best nprobe.
    std::vector<std::pair<double, int>> cell_scores;
    cell_scores.reserve(snapshot.cells.size());
    for (int c = 0; c < static_cast<int>(snapshot.cells.size()); ++c)
      cell_scores.emplace_back(snapshot.centroids.row(c).dot(user_vec), c);
    std::sort(cell_scores.begin(), cell_scores.end(),
              [](const auto& a, const auto& b) {
                if (a.first != b.first) return a.first > b.first;
                return a.second < b.second;
              });
    const int nprobe =
        std::min<int>(snapshot.ivf.nprobe, static_cast<int>(cell_scores.size()));
    for (int p = 0; p < nprobe; ++p)
      for (int i : snapshot.cells[cell_scores[p].second]) scan_row(i);
  }
  collect_topk(scored, k);
  return scored;
}

void IndexHandle::swap(IndexSnapshot next) {
  std::lock_guard<std::mutex> lock(mu_);
  if (next.version <= current_->version)
    throw IndexError("stale snapshot: version " + std::to_string(next.version) +
                     " <= " + std::to_string(current_->version));
  current_ = std::make_shared<const IndexSnapshot>(std::move(next));
}

}  // namespace freshrec
