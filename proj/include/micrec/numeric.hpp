#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace micrec {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Number of worker threads for row-parallel kernels. Reads MICREC_THREADS,
/// falling back to the hardware concurrency.
int thread_count();

/// Runs body(begin, end) over [0, n) split into contiguous chunks, one per
/// worker. Each row must be written by exactly one chunk; results are then
/// independent of the thread count.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

/// Symmetric-normalized adjacency of a user-item bipartite graph over the
/// stacked node space [users..., items...]. Stored as CSR; each undirected
/// edge (u, i) appears at (u, U+i) and (U+i, u) with value 1/sqrt(deg(u)deg(i)).
class NormalizedAdjacency {
 public:
  NormalizedAdjacency() = default;

  /// edges are (user, item) pairs; duplicate pairs are not allowed.
  static NormalizedAdjacency from_edges(std::int32_t num_users, std::int32_t num_items,
                                        std::span<const std::pair<std::int32_t, std::int32_t>> edges);

  std::int64_t size() const { return static_cast<std::int64_t>(row_ptr_.empty() ? 0 : row_ptr_.size() - 1); }
  std::int64_t nnz() const { return static_cast<std::int64_t>(values_.size()); }
  std::int32_t num_users() const { return num_users_; }
  std::int32_t num_items() const { return num_items_; }

  const std::vector<std::int64_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::int32_t>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }

  /// Dense copy; only meant for oracles on small graphs.
  Matrix to_dense() const;

 private:
  std::int32_t num_users_ = 0;
  std::int32_t num_items_ = 0;
  std::vector<std::int64_t> row_ptr_;
  std::vector<std::int32_t> col_idx_;
  std::vector<double> values_;
};

/// Sparse-dense product adj * h. Throws std::invalid_argument on a row-count mismatch.
Matrix spmm(const NormalizedAdjacency& adj, const Matrix& h);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares analytic gradient entries with central finite differences.
///
/// At least min(64, n) coordinates are checked, chosen uniformly without
/// replacement by `seed`; all coordinates when sample >= n. The relative error
/// of a coordinate is |a - g| / max(|a|, |g|, 1e-8). Throws Error when the
/// loss is non-finite at any evaluated point.
GradCheckResult grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> params, std::span<const double> analytic,
                           double eps = 1e-6, std::size_t sample = 64, std::uint64_t seed = 0);

}  // namespace micrec
