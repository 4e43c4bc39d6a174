#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "core/catalog.hpp"
#include "core/cf_trainer.hpp"

namespace freshrec {

struct ColdStartError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Layout of the cold-start input vector:
//   [artist_prior (embed_dim) | genre multi-hot (G) | label hash one-hot (L)
//    | log1p(streams) | log1p(likes) | days_since_release]
struct FeatureConfig {
  int embed_dim = 32;
  std::vector<std::string> genre_vocab;  // sorted, deduplicated
  int label_buckets = 64;
  uint32_t min_interactions = 10;  // gate for artist-prior ground truths

  int feature_len() const {
    return embed_dim + static_cast<int>(genre_vocab.size()) + label_buckets + 3;
  }
  static FeatureConfig from_catalog(const Catalog& catalog, int embed_dim,
                                    int label_buckets,
                                    uint32_t min_interactions);
};

Eigen::VectorXd build_features(const AlbumMeta& album,
                               const EmbeddingStore& store,
                               int64_t usage_cutoff, const Catalog& catalog,
                               const FeatureConfig& fcfg);

// Three weight layers: two ReLU hidden layers and a linear output.
struct MlpModel {
  Eigen::MatrixXd w1, w2, w3;  // (h1 x F), (h2 x h1), (out x h2)
  Eigen::VectorXd b1, b2, b3;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int output_dim() const { return static_cast<int>(w3.rows()); }

  static MlpModel init(int in, int h1, int h2, int out, uint64_t seed);
  Eigen::VectorXd predict(const Eigen::VectorXd& features) const;
};

struct MlpGradients {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
  void set_zero(const MlpModel& m);
  void accumulate(MlpGradients&& other);
  void scale(double s);
};

// Per-example squared-error loss, averaged over output components:
//   L = ||f(x) - t||^2 / d
double example_loss(const MlpModel& m, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& target);
MlpGradients backprop(const MlpModel& m, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& target);

// Max relative error between analytic gradients and central finite
// differences over every parameter.
double gradient_check(const MlpModel& m, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& target, double eps = 1e-6);

struct TrainParams {
  double lr = 1e-2;
  int epochs = 200;
  int batch_size = 32;
  uint64_t seed = 0;
  int h1 = 64;
  int h2 = 64;
};

struct TrainReport {
  std::vector<double> epoch_losses;  // full-dataset MSE after each epoch
  double final_loss = 0.0;
  TrainParams hyperparams;
};

using TrainExample = std::pair<Eigen::VectorXd, Eigen::VectorXd>;

// Mini-batch gradient descent on MSE. Deterministic given params.seed.
std::pair<MlpModel, TrainReport> train(const std::vector<TrainExample>& dataset,
                                       const TrainParams& params);

// Versioned binary model file; carries the feature configuration so a
// loaded model is self-contained for serving.
void save_model(const std::string& path, const MlpModel& model,
                const FeatureConfig& fcfg);
std::pair<MlpModel, FeatureConfig> load_model(const std::string& path);

}  // namespace freshrec
