#include "coldgen/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include <nlohmann/json.hpp>

namespace coldgen {

double squared_distance(const double* a, const double* b, Eigen::Index dim) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < dim; ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

namespace {

std::pair<int, double> nearest(const Matrix& centroids, const double* x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
    double d = squared_distance(centroids.row(j).data(), x, centroids.cols());
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  return {best, best_d};
}

Matrix kmeanspp_seed(const Matrix& points, int k, Rng& rng) {
  const auto n = points.rows();
  Matrix centroids(k, points.cols());
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<char> chosen(static_cast<std::size_t>(n), 0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::Index pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
  for (int c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) total += chosen[i] ? 0.0 : d2[i];
      if (total > 0.0) {
        double r = unif(rng) * total;
        pick = -1;
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (chosen[i] || d2[i] <= 0.0) continue;
          acc += d2[i];
          pick = i;
          if (acc >= r) break;
        }
      } else {
        // Only duplicates of chosen points remain; take any unchosen point.
        std::vector<Eigen::Index> rest;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (!chosen[i]) rest.push_back(i);
        }
        pick = rest[std::uniform_int_distribution<std::size_t>(0, rest.size() - 1)(rng)];
      }
    }
    chosen[pick] = 1;
    centroids.row(c) = points.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i).data(), points.row(pick).data(), points.cols()));
    }
  }
  return centroids;
}

double assign_all(const Matrix& points, const Matrix& centroids, std::vector<int>& assign,
                  std::vector<double>& dist) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    auto [j, d] = nearest(centroids, points.row(i).data());
    assign[i] = j;
    dist[i] = d;
    total += d;
  }
  return total;
}

}  // namespace

KMeansResult lloyd_kmeans(const Matrix& points, int k, std::uint64_t seed, KMeansOptions options,
                          const Matrix* init) {
  const auto n = points.rows();
  if (k < 1) throw ValidationError("k-means needs K >= 1");
  if (n < k) {
    throw ValidationError("k-means needs at least K points (K=" + std::to_string(k) +
                          ", points=" + std::to_string(n) + ")");
  }
  Rng rng(seed);
  KMeansResult res;
  if (init != nullptr) {
    if (init->rows() != k || init->cols() != points.cols()) throw ValidationError("k-means init has wrong shape");
    res.centroids = *init;
  } else {
    res.centroids = kmeanspp_seed(points, k, rng);
  }
  res.assignments.assign(static_cast<std::size_t>(n), 0);
  std::vector<double> dist(static_cast<std::size_t>(n), 0.0);
  double objective = assign_all(points, res.centroids, res.assignments, dist);
  res.objective_trace.push_back(objective);

  std::vector<std::size_t> counts(static_cast<std::size_t>(k));
  for (int it = 0; it < options.max_iter && objective > 0.0; ++it) {
    std::fill(counts.begin(), counts.end(), 0);
    for (auto a : res.assignments) ++counts[a];
    for (int j = 0; j < k; ++j) {
      if (counts[j] != 0) continue;
      Eigen::Index worst = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (counts[res.assignments[i]] < 2) continue;
        if (worst < 0 || dist[i] > dist[worst]) worst = i;
      }
      if (worst < 0) break;
      --counts[res.assignments[worst]];
      res.assignments[worst] = j;
      counts[j] = 1;
      dist[worst] = 0.0;
      res.centroids.row(j) = points.row(worst);
    }
    Matrix sums = Matrix::Zero(k, points.cols());
    for (Eigen::Index i = 0; i < n; ++i) sums.row(res.assignments[i]) += points.row(i);
    for (int j = 0; j < k; ++j) {
      if (counts[j] > 0) res.centroids.row(j) = sums.row(j) / static_cast<double>(counts[j]);
    }
    double next = assign_all(points, res.centroids, res.assignments, dist);
    res.iterations = it + 1;
    res.objective_trace.push_back(next);
    bool converged = objective - next <= options.tol * objective;
    objective = next;
    if (converged) break;
  }
  res.objective = objective;
  return res;
}

std::string to_string(CodebookKind kind) {
  switch (kind) {
    case CodebookKind::kRq: return "rq";
    case CodebookKind::kBkm: return "bkm";
    case CodebookKind::kOpq: return "opq";
  }
  return "rq";
}

CodebookKind codebook_kind_from_string(const std::string& s) {
  if (s == "rq") return CodebookKind::kRq;
  if (s == "bkm") return CodebookKind::kBkm;
  if (s == "opq") return CodebookKind::kOpq;
  throw ValidationError("unknown codebook kind " + s);
}

Codebook train_rq(const Matrix& embeddings, int levels, int k, std::uint64_t seed, KMeansOptions options) {
  if (levels < 1) throw ValidationError("rq needs at least one level");
  if (k < 2) throw ValidationError("rq needs K >= 2");
  Codebook cb;
  cb.kind = CodebookKind::kRq;
  cb.dim = static_cast<int>(embeddings.cols());
  cb.levels = levels;
  cb.codes_per_level = k;
  cb.rotation = Matrix::Identity(cb.dim, cb.dim);
  Matrix residual = embeddings;
  const double n = static_cast<double>(embeddings.rows());
  for (int level = 0; level < levels; ++level) {
    auto km = lloyd_kmeans(residual, k, derive_seed(seed, "rq/level/" + std::to_string(level)), options);
    for (Eigen::Index i = 0; i < residual.rows(); ++i) residual.row(i) -= km.centroids.row(km.assignments[i]);
    cb.centroids.push_back(std::move(km.centroids));
    cb.iterations += km.iterations;
    cb.distortion_trace.push_back(residual.squaredNorm() / n);
  }
  cb.final_objective = residual.squaredNorm();
  return cb;
}

namespace {

struct BkmBuilder {
  const Matrix& data;
  int depth;
  int k;
  std::uint64_t seed;
  int balance_iters;
  Codebook& cb;

  // Exactly n mod K clusters receive ceil(n/K) points, the rest floor(n/K);
  // pairs are taken greedily in order of increasing distance.
  std::vector<int> balanced_assign(const std::vector<Eigen::Index>& idx, const Matrix& centroids) const {
    const std::size_t n = idx.size();
    const std::size_t q = n / static_cast<std::size_t>(k);
    const std::size_t r = n % static_cast<std::size_t>(k);
    std::vector<std::tuple<double, std::size_t, int>> pairs;
    pairs.reserve(n * static_cast<std::size_t>(k));
    for (std::size_t p = 0; p < n; ++p) {
      for (int j = 0; j < k; ++j) {
        pairs.emplace_back(squared_distance(data.row(idx[p]).data(), centroids.row(j).data(), data.cols()), p, j);
      }
    }
    std::sort(pairs.begin(), pairs.end());
    std::vector<int> assign(n, -1);
    std::vector<std::size_t> size(static_cast<std::size_t>(k), 0);
    std::size_t full = 0;  // clusters holding q + 1 points
    std::size_t done = 0;
    for (const auto& [d, p, j] : pairs) {
      if (assign[p] >= 0) continue;
      std::size_t cap = full < r ? q + 1 : q;
      if (size[j] >= cap) continue;
      assign[p] = j;
      if (++size[j] == q + 1) ++full;
      if (++done == n) break;
    }
    return assign;
  }

  int build(const std::vector<Eigen::Index>& idx, int level, const std::string& path) {
    if (level >= depth || idx.size() < static_cast<std::size_t>(k)) return -1;
    Matrix pts(static_cast<Eigen::Index>(idx.size()), data.cols());
    for (std::size_t p = 0; p < idx.size(); ++p) pts.row(static_cast<Eigen::Index>(p)) = data.row(idx[p]);
    Rng rng(derive_seed(seed, "bkm/" + path));
    Matrix centroids = kmeanspp_seed(pts, k, rng);
    std::vector<int> assign;
    for (int it = 0; it < balance_iters; ++it) {
      auto next = balanced_assign(idx, centroids);
      bool same = next == assign;
      assign = std::move(next);
      Matrix sums = Matrix::Zero(k, data.cols());
      std::vector<std::size_t> cnt(static_cast<std::size_t>(k), 0);
      for (std::size_t p = 0; p < idx.size(); ++p) {
        sums.row(assign[p]) += pts.row(static_cast<Eigen::Index>(p));
        ++cnt[assign[p]];
      }
      for (int j = 0; j < k; ++j) {
        if (cnt[j] > 0) centroids.row(j) = sums.row(j) / static_cast<double>(cnt[j]);
      }
      if (same) break;
    }
    cb.iterations += 1;
    int node_id = static_cast<int>(cb.nodes.size());
    cb.nodes.push_back({centroids, std::vector<int>(static_cast<std::size_t>(k), -1),
                        std::vector<std::size_t>(static_cast<std::size_t>(k), 0)});
    std::vector<std::vector<Eigen::Index>> groups(static_cast<std::size_t>(k));
    for (std::size_t p = 0; p < idx.size(); ++p) groups[assign[p]].push_back(idx[p]);
    for (int j = 0; j < k; ++j) {
      cb.nodes[node_id].sizes[j] = groups[j].size();
      int child = build(groups[j], level + 1, path + "/" + std::to_string(j));
      cb.nodes[node_id].children[j] = child;
    }
    return node_id;
  }
};

}  // namespace

Codebook train_bkm(const Matrix& embeddings, int depth, int k, std::uint64_t seed, int balance_iters) {
  if (depth < 1) throw ValidationError("bkm needs depth >= 1");
  if (k < 2) throw ValidationError("bkm needs K >= 2");
  if (embeddings.rows() < k) throw ValidationError("bkm needs at least K points at the root");
  Codebook cb;
  cb.kind = CodebookKind::kBkm;
  cb.dim = static_cast<int>(embeddings.cols());
  cb.levels = depth;
  cb.codes_per_level = k;
  cb.rotation = Matrix::Identity(cb.dim, cb.dim);
  std::vector<Eigen::Index> all(static_cast<std::size_t>(embeddings.rows()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  BkmBuilder builder{embeddings, depth, k, seed, balance_iters, cb};
  builder.build(all, 0, "root");
  double err = 0.0;
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    Vector x = embeddings.row(i).transpose();
    err += (x - reconstruct(cb, quantize(cb, x))).squaredNorm();
  }
  cb.final_objective = err;
  return cb;
}

double orthogonality_error(const Matrix& rotation) {
  Matrix g = rotation.transpose() * rotation;
  g -= Matrix::Identity(g.rows(), g.cols());
  return g.cwiseAbs().maxCoeff();
}

namespace {

double opq_encode_distortion(const Matrix& rotated, const std::vector<Matrix>& centroids, int sub_dim,
                             std::vector<std::vector<int>>* codes) {
  double total = 0.0;
  for (std::size_t m = 0; m < centroids.size(); ++m) {
    Matrix block = rotated.middleCols(static_cast<Eigen::Index>(m) * sub_dim, sub_dim);
    if (codes) (*codes)[m].resize(static_cast<std::size_t>(block.rows()));
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
      auto [j, d] = nearest(centroids[m], block.row(i).data());
      total += d;
      if (codes) (*codes)[m][i] = j;
    }
  }
  return total;
}

}  // namespace

namespace {

// PCA rotation, principal directions in descending variance order.
Matrix pca_rotation(const Matrix& x) {
  const Eigen::Index d = x.cols();
  const Matrix centered = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(centered.transpose() * centered);
  Matrix r(d, d);
  for (Eigen::Index e = 0; e < d; ++e) r.row(e) = eig.eigenvectors().col(d - 1 - e).transpose();
  return r;
}

}  // namespace

Codebook train_opq(const Matrix& x, int subspaces, int k, std::uint64_t seed, int outer_iters,
                   KMeansOptions options) {
  if (subspaces < 1 || x.cols() % subspaces != 0) {
    throw ValidationError("opq needs the dimension to be divisible by the subspace count");
  }
  if (k < 2) throw ValidationError("opq needs K >= 2");
  if (outer_iters < 1) throw ValidationError("opq needs at least one outer iteration");
  const int d = static_cast<int>(x.cols());
  const int sub = d / subspaces;
  Codebook cb;
  cb.kind = CodebookKind::kOpq;
  cb.dim = d;
  cb.levels = subspaces;
  cb.codes_per_level = k;
  cb.rotation = pca_rotation(x);
  cb.centroids.resize(static_cast<std::size_t>(subspaces));

  for (int outer = 0; outer < outer_iters; ++outer) {
    Matrix rotated = x * cb.rotation.transpose();
    Matrix recon(x.rows(), d);
    for (int m = 0; m < subspaces; ++m) {
      Matrix block = rotated.middleCols(m * sub, sub);
      const Matrix* init = outer == 0 ? nullptr : &cb.centroids[m];
      auto km = lloyd_kmeans(block, k, seed + static_cast<std::uint64_t>(m), options, init);
      cb.iterations += km.iterations;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        recon.row(i).segment(m * sub, sub) = km.centroids.row(km.assignments[i]);
      }
      cb.centroids[m] = std::move(km.centroids);
    }
    // Orthogonal Procrustes: R = argmin ||X R^T - Y_hat||, R = V U^T for
    // X^T Y_hat = U S V^T.
    Eigen::MatrixXd cross = x.transpose() * recon;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    cb.rotation = svd.matrixV() * svd.matrixU().transpose();
    cb.orthogonality_trace.push_back(orthogonality_error(cb.rotation));
    Matrix rerotated = x * cb.rotation.transpose();
    double dist = opq_encode_distortion(rerotated, cb.centroids, sub, nullptr);
    cb.distortion_trace.push_back(dist);
  }
  cb.final_objective = cb.distortion_trace.back();
  return cb;
}

std::vector<int> quantize(const Codebook& cb, const Vector& e) {
  if (e.size() != cb.dim) {
    throw ValidationError("embedding dimension " + std::to_string(e.size()) + " does not match codebook dimension " +
                          std::to_string(cb.dim));
  }
  std::vector<int> codes;
  switch (cb.kind) {
    case CodebookKind::kRq: {
      Vector r = e;
      for (const auto& level : cb.centroids) {
        auto [j, _] = nearest(level, r.data());
        codes.push_back(j);
        r -= level.row(j).transpose();
      }
      break;
    }
    case CodebookKind::kOpq: {
      Vector y = cb.rotation * e;
      const int sub = cb.dim / cb.levels;
      for (int m = 0; m < cb.levels; ++m) {
        Vector seg = y.segment(m * sub, sub);
        codes.push_back(nearest(cb.centroids[m], seg.data()).first);
      }
      break;
    }
    case CodebookKind::kBkm: {
      int node = cb.nodes.empty() ? -1 : 0;
      while (node >= 0) {
        auto [j, _] = nearest(cb.nodes[node].centroids, e.data());
        codes.push_back(j);
        node = cb.nodes[node].children[j];
      }
      codes.resize(static_cast<std::size_t>(cb.levels), kPadCode);
      break;
    }
  }
  return codes;
}

Vector reconstruct(const Codebook& cb, const std::vector<int>& codes) {
  Vector out = Vector::Zero(cb.dim);
  switch (cb.kind) {
    case CodebookKind::kRq:
      for (std::size_t l = 0; l < codes.size() && l < cb.centroids.size(); ++l) {
        out += cb.centroids[l].row(codes[l]).transpose();
      }
      break;
    case CodebookKind::kOpq: {
      const int sub = cb.dim / cb.levels;
      Vector y(cb.dim);
      for (int m = 0; m < cb.levels; ++m) y.segment(m * sub, sub) = cb.centroids[m].row(codes[m]).transpose();
      out = cb.rotation.transpose() * y;
      break;
    }
    case CodebookKind::kBkm: {
      int node = cb.nodes.empty() ? -1 : 0;
      for (int c : codes) {
        if (node < 0 || c == kPadCode) break;
        out = cb.nodes[node].centroids.row(c).transpose();
        node = cb.nodes[node].children[c];
      }
      break;
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> bkm_node_sizes(const Codebook& cb) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& n : cb.nodes) out.push_back(n.sizes);
  return out;
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from(const nlohmann::json& j) {
  auto rows = j.at("rows").get<Eigen::Index>();
  auto cols = j.at("cols").get<Eigen::Index>();
  auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ParseError("codebook", 0, "matrix size mismatch");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

}  // namespace

nlohmann::json codebook_to_json(const Codebook& cb) {
  nlohmann::json cents = nlohmann::json::array();
  for (const auto& c : cb.centroids) cents.push_back(matrix_json(c));
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : cb.nodes) {
    nodes.push_back({{"centroids", matrix_json(n.centroids)}, {"children", n.children}, {"sizes", n.sizes}});
  }
  return {{"format_version", 1},
          {"kind", to_string(cb.kind)},
          {"dim", cb.dim},
          {"levels", cb.levels},
          {"codes_per_level", cb.codes_per_level},
          {"centroids", cents},
          {"rotation", matrix_json(cb.rotation)},
          {"nodes", nodes},
          {"final_objective", cb.final_objective},
          {"iterations", cb.iterations},
          {"distortion_trace", cb.distortion_trace},
          {"orthogonality_trace", cb.orthogonality_trace}};
}

Codebook codebook_from_json(const nlohmann::json& j) {
  try {
    Codebook cb;
    cb.kind = codebook_kind_from_string(j.at("kind").get<std::string>());
    cb.dim = j.at("dim").get<int>();
    cb.levels = j.at("levels").get<int>();
    cb.codes_per_level = j.at("codes_per_level").get<int>();
    for (const auto& c : j.at("centroids")) cb.centroids.push_back(matrix_from(c));
    cb.rotation = matrix_from(j.at("rotation"));
    for (const auto& n : j.at("nodes")) {
      cb.nodes.push_back({matrix_from(n.at("centroids")), n.at("children").get<std::vector<int>>(),
                          n.at("sizes").get<std::vector<std::size_t>>()});
    }
    cb.final_objective = j.value("final_objective", 0.0);
    cb.iterations = j.value("iterations", 0);
    cb.distortion_trace = j.value("distortion_trace", std::vector<double>{});
    cb.orthogonality_trace = j.value("orthogonality_trace", std::vector<double>{});
    return cb;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("codebook", 0, e.what());
  }
}

std::string codebook_digest(const Codebook& cb) { return sha256_hex(codebook_to_json(cb).dump()); }

}  // namespace coldgen
