#include "core/coldstart.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "core/util.hpp"

namespace freshrec {

namespace {

constexpr uint32_t kModelMagic = 0x4c4d5246;  // "FRML"

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_matrix_f32(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      float f = static_cast<float>(m(r, c));
      out.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
}
Eigen::MatrixXd read_matrix_f32(std::istream& in, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      float f = 0;
      in.read(reinterpret_cast<char*>(&f), sizeof(f));
      m(r, c) = f;
    }
  return m;
}

Eigen::VectorXd relu(const Eigen::VectorXd& v) { return v.cwiseMax(0.0); }

struct ForwardState {
  Eigen::VectorXd z1, a1, z2, a2, out;
};

ForwardState forward(const MlpModel& m, const Eigen::VectorXd& x) {
  ForwardState s;
  s.z1 = m.w1 * x + m.b1;
  s.a1 = relu(s.z1);
  s.z2 = m.w2 * s.a1 + m.b2;
  s.a2 = relu(s.z2);
  s.out = m.w3 * s.a2 + m.b3;
  return s;
}

// Flattened parameter view for the finite-difference check.
std::vector<double*> parameter_view(MlpModel& m) {
  std::vector<double*> params;
  auto push_matrix = [&params](Eigen::MatrixXd& mat) {
    for (Eigen::Index i = 0; i < mat.size(); ++i) params.push_back(mat.data() + i);
  };
  auto push_vector = [&params](Eigen::VectorXd& vec) {
    for (Eigen::Index i = 0; i < vec.size(); ++i) params.push_back(vec.data() + i);
  };
  push_matrix(m.w1);
  push_vector(m.b1);
  push_matrix(m.w2);
  push_vector(m.b2);
  push_matrix(m.w3);
  push_vector(m.b3);
  return params;
}

std::vector<double> flatten_gradients(const MlpGradients& g) {
  std::vector<double> out;
  auto push_matrix = [&out](const Eigen::MatrixXd& mat) {
    out.insert(out.end(), mat.data(), mat.data() + mat.size());
  };
  auto push_vector = [&out](const Eigen::VectorXd& vec) {
    out.insert(out.end(), vec.data(), vec.data() + vec.size());
  };
  push_matrix(g.w1);
  push_vector(g.b1);
  push_matrix(g.w2);
  push_vector(g.b2);
  push_matrix(g.w3);
  push_vector(g.b3);
  return out;
}

}  // namespace

FeatureConfig FeatureConfig::from_catalog(const Catalog& catalog,
                                          int embed_dim, int label_buckets,
                                          uint32_t min_interactions) {
  FeatureConfig fcfg;
  fcfg.embed_dim = embed_dim;
  fcfg.label_buckets = label_buckets;
  fcfg.min_interactions = min_interactions;
  std::set<std::string> genres;
  for (const auto& [_, album] : catalog.albums())
    genres.insert(album.genre_ids.begin(), album.genre_ids.end());
  fcfg.genre_vocab.assign(genres.begin(), genres.end());
  return fcfg;
}

Eigen::VectorXd build_features(const AlbumMeta& album,
                               const EmbeddingStore& store,
                               int64_t usage_cutoff, const Catalog& catalog,
                               const FeatureConfig& fcfg) {
  if (usage_cutoff < album.release_ts)
    throw ColdStartError("usage_cutoff precedes album release");
  const int g = static_cast<int>(fcfg.genre_vocab.size());
  Eigen::VectorXd features = Eigen::VectorXd::Zero(fcfg.feature_len());

  // Mean ground-truth embedding over the album's artists' earlier albums.
  Eigen::VectorXd prior = Eigen::VectorXd::Zero(fcfg.embed_dim);
  int prior_count = 0;
  std::set<std::string> seen;
  for (const auto& artist : album.artist_ids) {
    for (const auto& other_id : catalog.albums_by_artist(artist)) {
      if (other_id == album.album_id) continue;
      const AlbumMeta* other = catalog.find_album(other_id);
      if (!other || other->release_ts >= album.release_ts) continue;
      if (!seen.insert(other_id).second) continue;
      if (auto gt = ground_truth_for(other_id, store, fcfg.min_interactions)) {
        prior += *gt;
        ++prior_count;
      }
    }
  }
  if (prior_count > 0) features.head(fcfg.embed_dim) = prior / prior_count;

  for (const auto& genre : album.genre_ids) {
    auto it = std::lower_bound(fcfg.genre_vocab.begin(), fcfg.genre_vocab.end(),
                               genre);
    if (it != fcfg.genre_vocab.end() && *it == genre)
      features[fcfg.embed_dim + (it - fcfg.genre_vocab.begin())] = 1.0;
  }

  const int label_slot =
      static_cast<int>(fnv1a64(album.label_id) % fcfg.label_buckets);
  features[fcfg.embed_dim + g + label_slot] = 1.0;

  auto [streams, likes] =
      catalog.count_usage(album.album_id, album.release_ts, usage_cutoff);
  const int base = fcfg.embed_dim + g + fcfg.label_buckets;
  features[base + 0] = std::log1p(static_cast<double>(streams));
  features[base + 1] = std::log1p(static_cast<double>(likes));
  features[base + 2] =
      static_cast<double>(usage_cutoff - album.release_ts) / kSecondsPerDay;
  return features;
}

MlpModel MlpModel::init(int in, int h1, int h2, int out, uint64_t seed) {
  if (in < 1 || h1 < 1 || h2 < 1 || out < 1)
    throw ColdStartError("layer sizes must be positive");
  MlpModel m;
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](int fan_out, int fan_in) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) w(r, c) = dist(rng);
    return w;
  };
  m.w1 = glorot(h1, in);
  m.b1 = Eigen::VectorXd::Zero(h1);
  m.w2 = glorot(h2, h1);
  m.b2 = Eigen::VectorXd::Zero(h2);
  m.w3 = glorot(out, h2);
  m.b3 = Eigen::VectorXd::Zero(out);
  return m;
}

Eigen::VectorXd MlpModel::predict(const Eigen::VectorXd& features) const {
  if (features.size() != w1.cols())
    throw ColdStartError("feature length mismatch: got " +
                         std::to_string(features.size()) + ", expected " +
                         std::to_string(w1.cols()));
  return forward(*this, features).out;
}

void MlpGradients::set_zero(const MlpModel& m) {
  w1 = Eigen::MatrixXd::Zero(m.w1.rows(), m.w1.cols());
  w2 = Eigen::MatrixXd::Zero(m.w2.rows(), m.w2.cols());
  w3 = Eigen::MatrixXd::Zero(m.w3.rows(), m.w3.cols());
  b1 = Eigen::VectorXd::Zero(m.b1.size());
  b2 = Eigen::VectorXd::Zero(m.b2.size());
  b3 = Eigen::VectorXd::Zero(m.b3.size());
}

void MlpGradients::accumulate(MlpGradients&& other) {
  w1 += other.w1;
  w2 += other.w2;
  w3 += other.w3;
  b1 += other.b1;
  b2 += other.b2;
  b3 += other.b3;
}

void MlpGradients::scale(double s) {
  w1 *= s;
  w2 *= s;
  w3 *= s;
  b1 *= s;
  b2 *= s;
  b3 *= s;
}

double example_loss(const MlpModel& m, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& target) {
  if (target.size() != m.output_dim())
    throw ColdStartError("target dimension mismatch");
  return (forward(m, x).out - target).squaredNorm() / m.output_dim();
}

MlpGradients backprop(const MlpModel& m, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& target) {
  if (target.size() != m.output_dim())
    throw ColdStartError("target dimension mismatch");
  const ForwardState s = forward(m, x);
  MlpGradients g;
  // dL/dout for L = ||out - t||^2 / d
  Eigen::VectorXd delta3 = 2.0 / m.output_dim() * (s.out - target);
  Eigen::VectorXd delta2 =
      (m.w3.transpose() * delta3).cwiseProduct(
          (s.z2.array() > 0.0).select(
              Eigen::VectorXd::Ones(s.z2.size()),
              Eigen::VectorXd::Zero(s.z2.size())));
  Eigen::VectorXd delta1 =
      (m.w2.transpose() * delta2).cwiseProduct(
          (s.z1.array() > 0.0).select(
              Eigen::VectorXd::Ones(s.z1.size()),
              Eigen::VectorXd::Zero(s.z1.size())));
  g.w3 = delta3 * s.a2.transpose();
  g.b3 = delta3;
  g.w2 = delta2 * s.a1.transpose();
  g.b2 = delta2;
  g.w1 = delta1 * x.transpose();
  g.b1 = delta1;
  return g;
}

double gradient_check(const MlpModel& m, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& target, double eps) {
  if (eps <= 0.0 || eps > 1e-2)
    throw ColdStartError("eps must be in (0, 1e-2]");
  const std::vector<double> analytic = flatten_gradients(backprop(m, x, target));
  MlpModel probe = m;
  std::vector<double*> params = parameter_view(probe);
  // Components far below the gradient's overall scale are dominated by
  // finite-difference rounding noise, so the denominator is floored at a
  // fraction of the largest component instead of a fixed epsilon.
  double scale = 0.0;
  for (double g : analytic) scale = std::max(scale, std::abs(g));
  const double floor = std::max(1e-3 * scale, 1e-8);
  double max_rel = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    const double original = *params[i];
    *params[i] = original + eps;
    const double up = example_loss(probe, x, target);
    *params[i] = original - eps;
    const double down = example_loss(probe, x, target);
    *params[i] = original;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom =
        std::max(std::abs(analytic[i]) + std::abs(numeric), floor);
    max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

std::pair<MlpModel, TrainReport> train(const std::vector<TrainExample>& dataset,
                                       const TrainParams& params) {
  if (dataset.empty()) throw ColdStartError("empty training dataset");
  const int in = static_cast<int>(dataset.front().first.size());
  const int out = static_cast<int>(dataset.front().second.size());
  for (const auto& [x, t] : dataset) {
    if (x.size() != in || t.size() != out)
      throw ColdStartError("inconsistent example dimensions in dataset");
  }
  if (params.batch_size < 1) throw ColdStartError("batch_size must be >= 1");
  if (params.epochs < 0) throw ColdStartError("epochs must be >= 0");

  MlpModel model = MlpModel::init(in, params.h1, params.h2, out, params.seed);
  std::mt19937_64 shuffle_rng(splitmix64(params.seed ^ 0x5a17e5ULL));
  TrainReport report;
  report.hyperparams = params;

  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  auto dataset_loss = [&]() {
    double sum = 0.0;
    for (const auto& [x, t] : dataset) sum += example_loss(model, x, t);
    return sum / dataset.size();
  };

  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(params.batch_size)) {
      const size_t stop =
          std::min(order.size(), start + static_cast<size_t>(params.batch_size));
      MlpGradients grad;
      grad.set_zero(model);
      for (size_t i = start; i < stop; ++i) {
        const auto& [x, t] = dataset[order[i]];
        grad.accumulate(backprop(model, x, t));
      }
      grad.scale(params.lr / static_cast<double>(stop - start));
      model.w1 -= grad.w1;
      model.b1 -= grad.b1;
      model.w2 -= grad.w2;
      model.b2 -= grad.b2;
      model.w3 -= grad.w3;
      model.b3 -= grad.b3;
    }
    const double loss = dataset_loss();
    if (!std::isfinite(loss))
      throw ColdStartError("training diverged (non-finite loss) at epoch " +
                           std::to_string(epoch));
    report.epoch_losses.push_back(loss);
  }
  report.final_loss =
      report.epoch_losses.empty() ? dataset_loss() : report.epoch_losses.back();
  return {std::move(model), std::move(report)};
}

void save_model(const std::string& path, const MlpModel& model,
                const FeatureConfig& fcfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ColdStartError("cannot write model file: " + path);
  write_u32(out, kModelMagic);
  write_u32(out, 1);  // format version
  write_u32(out, static_cast<uint32_t>(model.w1.cols()));
  write_u32(out, static_cast<uint32_t>(model.w1.rows()));
  write_u32(out, static_cast<uint32_t>(model.w2.rows()));
  write_u32(out, static_cast<uint32_t>(model.w3.rows()));
  write_u32(out, static_cast<uint32_t>(fcfg.embed_dim));
  write_u32(out, static_cast<uint32_t>(fcfg.label_buckets));
  write_u32(out, fcfg.min_interactions);
  write_u32(out, static_cast<uint32_t>(fcfg.genre_vocab.size()));
  for (const auto& genre : fcfg.genre_vocab) {
    write_u32(out, static_cast<uint32_t>(genre.size()));
    out.write(genre.data(), static_cast<std::streamsize>(genre.size()));
  }
  write_matrix_f32(out, model.w1);
  write_matrix_f32(out, model.b1);
  write_matrix_f32(out, model.w2);
  write_matrix_f32(out, model.b2);
  write_matrix_f32(out, model.w3);
  write_matrix_f32(out, model.b3);
  if (!out) throw ColdStartError("short write on model file: " + path);
}

std::pair<MlpModel, FeatureConfig> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ColdStartError("cannot open model file: " + path);
  if (read_u32(in) != kModelMagic)
    throw ColdStartError("not a model file: " + path);
  if (read_u32(in) != 1) throw ColdStartError("unsupported model format");
  const int f = static_cast<int>(read_u32(in));
  const int h1 = static_cast<int>(read_u32(in));
  const int h2 = static_cast<int>(read_u32(in));
  const int d = static_cast<int>(read_u32(in));
  FeatureConfig fcfg;
  fcfg.embed_dim = static_cast<int>(read_u32(in));
  fcfg.label_buckets = static_cast<int>(read_u32(in));
  fcfg.min_interactions = read_u32(in);
  const uint32_t n_genres = read_u32(in);
  for (uint32_t i = 0; i < n_genres; ++i) {
    uint32_t len = read_u32(in);
    std::string genre(len, '\0');
    in.read(genre.data(), len);
    fcfg.genre_vocab.push_back(std::move(genre));
  }
  MlpModel model;
  model.w1 = read_matrix_f32(in, h1, f);
  model.b1 = read_matrix_f32(in, h1, 1).col(0);
  model.w2 = read_matrix_f32(in, h2, h1);
  model.b2 = read_matrix_f32(in, h2, 1).col(0);
  model.w3 = read_matrix_f32(in, d, h2);
  model.b3 = read_matrix_f32(in, d, 1).col(0);
  if (!in) throw ColdStartError("truncated model file: " + path);
  if (fcfg.feature_len() != f)
    throw ColdStartError("model/feature layout mismatch in " + path);
  return {std::move(model), std::move(fcfg)};
}

}  // namespace freshrec
