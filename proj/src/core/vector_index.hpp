#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace freshrec {

struct IndexError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class IndexMode { Exact, CoarseIVF };

struct IvfParams {
  int num_clusters = 0;
  int nprobe = 1;
};

// Immutable dot-product top-k structure. Exact mode scans everything;
// CoarseIVF buckets vectors into k-means cells and scans only the nprobe
// cells whose centroids score highest against the query.
struct IndexSnapshot {
  uint64_t version = 0;
  std::vector<std::string> ids;  // sorted; row i of `vectors` belongs to ids[i]
  Eigen::MatrixXd vectors;       // N x d
  IndexMode mode = IndexMode::Exact;
  IvfParams ivf;
  Eigen::MatrixXd centroids;                // num_clusters x d
  std::vector<std::vector<int>> cells;      // row indices per cluster

  size_t size() const { return ids.size(); }
};

IndexSnapshot build_index(const std::map<std::string, Eigen::VectorXd>& items,
                          IndexMode mode, IvfParams ivf, uint64_t seed,
                          uint64_t version);

// Descending dot-product scores, ties broken by album id ascending. Returns
// at most k results; excluded ids never appear.
std::vector<std::pair<std::string, double>> query_index(
    const IndexSnapshot& snapshot, const Eigen::VectorXd& user_vec, int k,
    const std::set<std::string>& exclude = {});

// Single-writer snapshot holder. Readers get a shared_ptr to a fully built
// snapshot; swap rejects non-increasing versions.
class IndexHandle {
 public:
  IndexHandle() : current_(std::make_shared<const IndexSnapshot>()) {}

  std::shared_ptr<const IndexSnapshot> get() const {
    std::lock_guard<std::mutex> lock(mu_);
    return current_;
  }
  void swap(IndexSnapshot next);  // throws IndexError("stale snapshot")

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const IndexSnapshot> current_;
};

}  // namespace freshrec
