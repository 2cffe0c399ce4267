#include "micrec/numeric.hpp"

#include "micrec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

namespace micrec {

int thread_count() {
  static const int cached = [] {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw <= 0) hw = 1;
    if (const char* env = std::getenv("MICREC_THREADS")) {
      try {
        int v = std::stoi(env);
        if (v >= 1) return std::min(v, hw);
      } catch (const std::exception&) {
      }
    }
    return hw;
  }();
  return cached;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
  if (n <= 0) return;
  const std::int64_t workers = std::min<std::int64_t>(thread_count(), n);
  // Small ranges are not worth a thread launch.
  if (workers <= 1 || n < 256) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers - 1));
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (std::int64_t w = 1; w < workers; ++w) {
    const std::int64_t begin = w * chunk;
    const std::int64_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(body, begin, end);
  }
  body(0, std::min(n, chunk));
  for (auto& t : pool) t.join();
}

NormalizedAdjacency NormalizedAdjacency::from_edges(
    std::int32_t num_users, std::int32_t num_items,
    std::span<const std::pair<std::int32_t, std::int32_t>> edges) {
  NormalizedAdjacency adj;
  adj.num_users_ = num_users;
  adj.num_items_ = num_items;
  const std::int64_t n = static_cast<std::int64_t>(num_users) + num_items;
  std::vector<std::int64_t> degree(static_cast<std::size_t>(n), 0);
  for (const auto& [u, i] : edges) {
    if (u < 0 || u >= num_users || i < 0 || i >= num_items)
      throw std::invalid_argument("adjacency edge out of range");
    ++degree[static_cast<std::size_t>(u)];
    ++degree[static_cast<std::size_t>(num_users + i)];
  }
  adj.row_ptr_.assign(static_cast<std::size_t>(n + 1), 0);
  for (std::int64_t r = 0; r < n; ++r) adj.row_ptr_[r + 1] = adj.row_ptr_[r] + degree[r];
  adj.col_idx_.resize(static_cast<std::size_t>(adj.row_ptr_.back()));
  adj.values_.resize(adj.col_idx_.size());
  std::vector<std::int64_t> cursor(adj.row_ptr_.begin(), adj.row_ptr_.end() - 1);
  for (const auto& [u, i] : edges) {
    const std::int64_t iu = u;
    const std::int64_t ii = static_cast<std::int64_t>(num_users) + i;
    const double v = 1.0 / std::sqrt(static_cast<double>(degree[iu]) * static_cast<double>(degree[ii]));
    adj.col_idx_[cursor[iu]] = static_cast<std::int32_t>(ii);
    adj.values_[cursor[iu]++] = v;
    adj.col_idx_[cursor[ii]] = static_cast<std::int32_t>(iu);
    adj.values_[cursor[ii]++] = v;
  }
  // Column order within a row follows edge order; sort it so the product's
  // accumulation order depends only on the edge set.
  for (std::int64_t r = 0; r < n; ++r) {
    const auto b = adj.row_ptr_[r], e = adj.row_ptr_[r + 1];
    std::vector<std::pair<std::int32_t, double>> row;
    row.reserve(static_cast<std::size_t>(e - b));
    for (auto k = b; k < e; ++k) row.emplace_back(adj.col_idx_[k], adj.values_[k]);
    std::sort(row.begin(), row.end());
    for (auto k = b; k < e; ++k) {
      adj.col_idx_[k] = row[k - b].first;
      adj.values_[k] = row[k - b].second;
    }
  }
  return adj;
}

Matrix NormalizedAdjacency::to_dense() const {
  const auto n = size();
  Matrix dense = Matrix::Zero(n, n);
  for (std::int64_t r = 0; r < n; ++r)
    for (auto k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) dense(r, col_idx_[k]) += values_[k];
  return dense;
}

Matrix spmm(const NormalizedAdjacency& adj, const Matrix& h) {
  const std::int64_t n = static_cast<std::int64_t>(adj.num_users()) + adj.num_items();
  if (h.rows() != n)
    throw std::invalid_argument("spmm: expected " + std::to_string(n) + " rows, got " +
                                std::to_string(h.rows()));
  Matrix out = Matrix::Zero(h.rows(), h.cols());
  if (adj.size() == 0) return out;
  const auto& rp = adj.row_ptr();
  const auto& ci = adj.col_idx();
  const auto& vals = adj.values();
  parallel_for(n, [&](std::int64_t begin, std::int64_t end) {
    for (std::int64_t r = begin; r < end; ++r)
      for (auto k = rp[r]; k < rp[r + 1]; ++k) out.row(r).noalias() += vals[k] * h.row(ci[k]);
  });
  return out;
}

GradCheckResult grad_check(const std::function<double(std::span<const double>)>& loss,
                           std::span<const double> params, std::span<const double> analytic,
                           double eps, std::size_t sample, std::uint64_t seed) {
  if (params.size() != analytic.size())
    throw std::invalid_argument("grad_check: parameter and gradient sizes differ");
  const std::size_t n = params.size();
  std::vector<std::size_t> coords(n);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  const std::size_t want = std::min(n, std::max<std::size_t>(sample, 64));
  if (want < n) {
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(want);
    std::sort(coords.begin(), coords.end());
  }

  std::vector<double> probe(params.begin(), params.end());
  const double base = loss(probe);
  if (!std::isfinite(base)) throw Error("grad_check: non-finite loss at the base point");

  GradCheckResult result;
  for (std::size_t idx : coords) {
    const double saved = probe[idx];
    probe[idx] = saved + eps;
    const double up = loss(probe);
    probe[idx] = saved - eps;
    const double down = loss(probe);
    probe[idx] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw Error("grad_check: non-finite loss at coordinate " + std::to_string(idx));
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[idx];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = idx;
    }
    ++result.checked;
  }
  return result;
}

}  // namespace micrec
