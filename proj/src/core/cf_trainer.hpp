#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/catalog.hpp"
#include "core/util.hpp"

namespace freshrec {

struct CfError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Confidence-weighted implicit-feedback matrix over one usage window.
// weight(u, i) = log(1 + streams) + beta * likes.
struct InteractionMatrix {
  std::vector<std::string> users;  // row index -> user id (sorted)
  std::vector<std::string> items;  // col index -> album id (sorted)
  struct Entry {
    int row;
    int col;
    double weight;
  };
  std::vector<Entry> entries;               // unique (row, col), row-major order
  std::vector<uint32_t> item_user_counts;   // distinct interacting users per col

  size_t rows() const { return users.size(); }
  size_t cols() const { return items.size(); }
};

InteractionMatrix build_matrix(const Catalog& catalog, int64_t window_end,
                               int64_t window_len = 7 * kSecondsPerDay,
                               double beta_like = 1.0);

// Shared latent space for users and albums. dot(user_vec, item_vec)
// approximates the interaction weight (the singular values are split as
// sqrt(sigma) onto each side).
struct EmbeddingStore {
  int dim = 0;
  uint64_t version = 0;
  std::map<std::string, Eigen::VectorXd> user_vecs;
  std::map<std::string, Eigen::VectorXd> item_vecs;
  std::map<std::string, uint32_t> item_support;  // distinct users in the window
  std::vector<double> singular_values;           // descending

  void save(const std::string& path) const;
  static EmbeddingStore load(const std::string& path);
};

// Rank-d factorization by randomized subspace (power) iteration.
// Deterministic given seed. Throws CfError if d > min(rows, cols) or the
// matrix is all-zero.
EmbeddingStore truncated_svd(const InteractionMatrix& m, int d, int n_iter = 7,
                             uint64_t seed = 1, int oversample = 8);

// The album's ground-truth embedding, present only when the album had at
// least min_interactions distinct interacting users in the window.
std::optional<Eigen::VectorXd> ground_truth_for(const std::string& album_id,
                                                const EmbeddingStore& store,
                                                uint32_t min_interactions = 10);

}  // namespace freshrec
