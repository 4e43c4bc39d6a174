#include "core/cf_trainer.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace freshrec {

namespace {

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_id(std::ostream& out, const std::string& id) {
  if (id.size() > 0xffff) throw CfError("id too long for store format");
  uint16_t len = static_cast<uint16_t>(id.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(id.data(), len);
}
void write_vec_f32(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    float f = static_cast<float>(v[i]);
    out.write(reinterpret_cast<const char*>(&f), sizeof(f));
  }
}

uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
uint64_t read_u64(std::istream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
double read_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::string read_id(std::istream& in) {
  uint16_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string id(len, '\0');
  in.read(id.data(), len);
  return id;
}
Eigen::VectorXd read_vec_f32(std::istream& in, int dim) {
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) {
    float f = 0;
    in.read(reinterpret_cast<char*>(&f), sizeof(f));
    v[i] = f;
  }
  return v;
}

constexpr uint32_t kStoreMagic = 0x53455246;  // "FRES"

// Thin orthonormal basis of the columns of Y.
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& y) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
  Eigen::MatrixXd q = qr.householderQ() *
                      Eigen::MatrixXd::Identity(y.rows(), y.cols());
  return q;
}

}  // namespace

InteractionMatrix build_matrix(const Catalog& catalog, int64_t window_end,
                               int64_t window_len, double beta_like) {
  const int64_t window_start = window_end - window_len;
  // (user, album) -> (streams, likes)
  std::map<std::pair<std::string, std::string>, std::pair<uint64_t, uint64_t>>
      agg;
  for (const auto& ev : catalog.stream_like_events()) {
    if (ev.ts < window_start || ev.ts >= window_end) continue;
    auto& cell = agg[{ev.user_id, ev.subject}];
    if (ev.type == EventType::Stream)
      ++cell.first;
    else
      ++cell.second;
  }
  InteractionMatrix m;
  std::map<std::string, int> user_index, item_index;
  for (const auto& [key, _] : agg) {
    user_index.emplace(key.first, 0);
    item_index.emplace(key.second, 0);
  }
  m.users.reserve(user_index.size());
  for (auto& [id, idx] : user_index) {
    idx = static_cast<int>(m.users.size());
    m.users.push_back(id);
  }
  m.items.reserve(item_index.size());
  for (auto& [id, idx] : item_index) {
    idx = static_cast<int>(m.items.size());
    m.items.push_back(id);
  }
  m.item_user_counts.assign(m.items.size(), 0);
  m.entries.reserve(agg.size());
  for (const auto& [key, counts] : agg) {
    const double weight =
        std::log1p(static_cast<double>(counts.first)) +
        beta_like * static_cast<double>(counts.second);
    const int row = user_index[key.first];
    const int col = item_index[key.second];
    m.entries.push_back({row, col, weight});
    ++m.item_user_counts[col];
  }
  return m;
}

EmbeddingStore truncated_svd(const InteractionMatrix& m, int d, int n_iter,
                             uint64_t seed, int oversample) {
  const int rows = static_cast<int>(m.rows());
  const int cols = static_cast<int>(m.cols());
  if (d < 1) throw CfError("embedding dimension must be >= 1");
  if (n_iter < 1) throw CfError("n_iter must be >= 1");
  if (d > std::min(rows, cols))
    throw CfError("embedding dimension exceeds matrix rank bound");

  Eigen::SparseMatrix<double> a(rows, cols);
  {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(m.entries.size());
    double max_abs = 0.0;
    for (const auto& e : m.entries) {
      trips.emplace_back(e.row, e.col, e.weight);
      max_abs = std::max(max_abs, std::abs(e.weight));
    }
    if (max_abs == 0.0) throw CfError("degenerate matrix");
    a.setFromTriplets(trips.begin(), trips.end());
  }

  const int ell = std::min(d + oversample, std::min(rows, cols));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd omega(cols, ell);
  for (int j = 0; j < ell; ++j)
    for (int i = 0; i < cols; ++i) omega(i, j) = gauss(rng);

  // Subspace iteration with re-orthonormalization each half-step.
  Eigen::MatrixXd q = orthonormalize(a * omega);
  for (int it = 0; it < n_iter; ++it) {
    Eigen::MatrixXd z = orthonormalize(a.transpose() * q);
    q = orthonormalize(a * z);
  }

  Eigen::MatrixXd b = q.transpose() * a;  // ell x cols
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      b, Eigen::ComputeThinU | Eigen::ComputeThinV);

  Eigen::MatrixXd u = (q * svd.matrixU()).leftCols(d);  // rows x d
  Eigen::MatrixXd v = svd.matrixV().leftCols(d);        // cols x d
  Eigen::VectorXd sigma = svd.singularValues().head(d);

  // Sign convention: largest-magnitude entry of each left singular vector
  // is positive.
  for (int k = 0; k < d; ++k) {
    Eigen::Index imax = 0;
    u.col(k).cwiseAbs().maxCoeff(&imax);
    if (u(imax, k) < 0) {
      u.col(k) = -u.col(k);
      v.col(k) = -v.col(k);
    }
  }

  EmbeddingStore store;
  store.dim = d;
  store.version = 1;
  store.singular_values.assign(sigma.data(), sigma.data() + d);
  Eigen::VectorXd scale = sigma.cwiseMax(0.0).cwiseSqrt();
  for (int i = 0; i < rows; ++i)
    store.user_vecs[m.users[i]] = u.row(i).transpose().cwiseProduct(scale);
  for (int j = 0; j < cols; ++j) {
    store.item_vecs[m.items[j]] = v.row(j).transpose().cwiseProduct(scale);
    store.item_support[m.items[j]] = m.item_user_counts[j];
  }
  return store;
}

std::optional<Eigen::VectorXd> ground_truth_for(const std::string& album_id,
                                                const EmbeddingStore& store,
                                                uint32_t min_interactions) {
  auto it = store.item_vecs.find(album_id);
  if (it == store.item_vecs.end()) return std::nullopt;
  auto sup = store.item_support.find(album_id);
  if (sup == store.item_support.end() || sup->second < min_interactions)
    return std::nullopt;
  return it->second;
}

void EmbeddingStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CfError("cannot write embedding store: " + path);
  write_u32(out, kStoreMagic);
  write_u32(out, 1);  // format version
  write_u32(out, static_cast<uint32_t>(dim));
  write_u64(out, version);
  write_u32(out, static_cast<uint32_t>(singular_values.size()));
  for (double s : singular_values) write_f64(out, s);
  write_u32(out, static_cast<uint32_t>(user_vecs.size()));
  for (const auto& [id, vec] : user_vecs) {
    write_id(out, id);
    write_vec_f32(out, vec);
  }
  write_u32(out, static_cast<uint32_t>(item_vecs.size()));
  for (const auto& [id, vec] : item_vecs) {
    write_id(out, id);
    auto sup = item_support.find(id);
    write_u32(out, sup == item_support.end() ? 0 : sup->second);
    write_vec_f32(out, vec);
  }
  if (!out) throw CfError("short write on embedding store: " + path);
}

EmbeddingStore EmbeddingStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CfError("cannot open embedding store: " + path);
  if (read_u32(in) != kStoreMagic)
    throw CfError("not an embedding store file: " + path);
  uint32_t fmt = read_u32(in);
  if (fmt != 1) throw CfError("unsupported store format version");
  EmbeddingStore store;
  store.dim = static_cast<int>(read_u32(in));
  store.version = read_u64(in);
  uint32_t n_sing = read_u32(in);
  store.singular_values.resize(n_sing);
  for (uint32_t i = 0; i < n_sing; ++i) store.singular_values[i] = read_f64(in);
  uint32_t n_users = read_u32(in);
  for (uint32_t i = 0; i < n_users; ++i) {
    std::string id = read_id(in);
    store.user_vecs[id] = read_vec_f32(in, store.dim);
  }
  uint32_t n_items = read_u32(in);
  for (uint32_t i = 0; i < n_items; ++i) {
    std::string id = read_id(in);
    uint32_t sup = read_u32(in);
    store.item_vecs[id] = read_vec_f32(in, store.dim);
    store.item_support[id] = sup;
  }
  if (!in) throw CfError("truncated embedding store: " + path);
  return store;
}

}  // namespace freshrec
