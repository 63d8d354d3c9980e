#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "coldgen/common.hpp"

namespace coldgen {

/// Row-major point matrix: one point per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct KMeansOptions {
  int max_iter = 50;
  double tol = 1e-6;
};

struct KMeansResult {
  Matrix centroids;              // K x d
  std::vector<int> assignments;  // nearest centroid per point
  double objective = 0.0;        // sum of squared distances
  /// Objective after seeding, then after every Lloyd iteration.
  std::vector<double> objective_trace;
  int iterations = 0;
};

/// k-means++ seeding (or `init` when given) followed by Lloyd iterations
/// until the relative improvement drops below `tol` or `max_iter` is hit.
/// Empty clusters are re-seeded from the worst-served point.
KMeansResult lloyd_kmeans(const Matrix& points, int k, std::uint64_t seed, KMeansOptions options = {},
                          const Matrix* init = nullptr);

/// Squared Euclidean distance.
double squared_distance(const double* a, const double* b, Eigen::Index dim);

enum class CodebookKind { kRq, kBkm, kOpq };

std::string to_string(CodebookKind kind);
CodebookKind codebook_kind_from_string(const std::string& s);

struct BkmNode {
  Matrix centroids;                // K x d
  std::vector<int> children;       // child node index per branch, -1 for leaves
  std::vector<std::size_t> sizes;  // training points routed to each branch
};

/// A trained quantizer. `levels` is the level count (rq), the tree depth
/// (bkm) or the subspace count (opq); every level/subspace/internal node
/// carries exactly `codes_per_level` centroids.
struct Codebook {
  CodebookKind kind = CodebookKind::kRq;
  int dim = 0;
  int levels = 0;
  int codes_per_level = 0;
  std::vector<Matrix> centroids;  // rq: L x (K x d); opq: M x (K x d/M)
  Matrix rotation;                // d x d; identity unless opq
  std::vector<BkmNode> nodes;     // bkm only; nodes[0] is the root
  double final_objective = 0.0;
  int iterations = 0;
  /// rq: mean squared residual after each level. opq: total distortion
  /// after each outer iteration.
  std::vector<double> distortion_trace;
  /// opq: max |R^T R - I| after each outer iteration.
  std::vector<double> orthogonality_trace;
};

inline constexpr int kPadCode = -1;

Codebook train_rq(const Matrix& embeddings, int levels, int k, std::uint64_t seed,
                  KMeansOptions options = {});

/// Hierarchical balanced k-means; nodes with fewer than `k` points become
/// leaves and their codes are padded with kPadCode.
Codebook train_bkm(const Matrix& embeddings, int depth, int k, std::uint64_t seed, int balance_iters = 20);

/// Alternates per-subspace k-means in the rotated frame with an orthogonal
/// Procrustes update of the rotation.
Codebook train_opq(const Matrix& embeddings, int subspaces, int k, std::uint64_t seed, int outer_iters,
                   KMeansOptions options = {});

/// Raw per-level (or per-subspace) centroid indices. Throws ValidationError
/// on dimension mismatch.
std::vector<int> quantize(const Codebook& codebook, const Vector& embedding);

/// Sum (rq), concatenation then inverse rotation (opq), or leaf-path
/// centroid (bkm) of the chosen centroids.
Vector reconstruct(const Codebook& codebook, const std::vector<int>& codes);

/// Max |R^T R - I|.
double orthogonality_error(const Matrix& rotation);

/// Per-internal-node branch sizes; used to check the balance invariant.
std::vector<std::vector<std::size_t>> bkm_node_sizes(const Codebook& codebook);

nlohmann::json codebook_to_json(const Codebook& codebook);
Codebook codebook_from_json(const nlohmann::json& j);
std::string codebook_digest(const Codebook& codebook);

}  // namespace coldgen
