#include "micrec/errors.hpp"
#include "micrec/numeric.hpp"

#include "doctest.h"

#include <cmath>
#include <random>
#include <set>

using namespace micrec;

namespace {

using EdgeList = std::vector<std::pair<std::int32_t, std::int32_t>>;

EdgeList random_edges(int nu, int ni, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  EdgeList e;
  for (int u = 0; u < nu; ++u)
    for (int i = 0; i < ni; ++i)
      if (coin(rng)) e.emplace_back(u, i);
  return e;
}

// D^-1/2 A D^-1/2 built densely from the edge list.
Matrix dense_oracle(int nu, int ni, const EdgeList& edges) {
  const int n = nu + ni;
  Matrix a = Matrix::Zero(n, n);
  for (const auto& [u, i] : edges) a(u, nu + i) = a(nu + i, u) = 1.0;
  const Vector deg = a.rowwise().sum();
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      if (a(r, c) != 0.0) a(r, c) /= std::sqrt(deg(r) * deg(c));
  return a;
}

}  // namespace

TEST_CASE("spmm: empty adjacency gives zeros") {
  const auto adj = NormalizedAdjacency::from_edges(2, 3, EdgeList{});
  const Matrix h = Matrix::Random(5, 4);
  CHECK(spmm(adj, h).isZero(0));
}

TEST_CASE("spmm: single edge copies the item row") {
  const auto adj = NormalizedAdjacency::from_edges(1, 1, EdgeList{{0, 0}});
  Matrix h(2, 3);
  h << 1, 2, 3, 4, 5, 6;
  const Matrix out = spmm(adj, h);
  CHECK((out.row(0).array() == h.row(1).array()).all());
  CHECK((out.row(1).array() == h.row(0).array()).all());
}

TEST_CASE("spmm matches the dense product on random graphs") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    const int nu = 3 + trial % 3, ni = 8 - nu;
    const auto edges = random_edges(nu, ni, 0.5, rng);
    const auto adj = NormalizedAdjacency::from_edges(nu, ni, edges);
    const Matrix oracle = dense_oracle(nu, ni, edges);
    CHECK((adj.to_dense() - oracle).cwiseAbs().maxCoeff() <= 1e-15);
    const Matrix h = Matrix::Random(8, 5);
    CHECK((spmm(adj, h) - oracle * h).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((adj.to_dense() - adj.to_dense().transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("spmm is linear") {
  std::mt19937_64 rng(2);
  const auto adj = NormalizedAdjacency::from_edges(6, 7, random_edges(6, 7, 0.4, rng));
  const Matrix x = Matrix::Random(13, 4), y = Matrix::Random(13, 4);
  const double a = 1.7, b = -0.3;
  CHECK((spmm(adj, a * x + b * y) - (a * spmm(adj, x) + b * spmm(adj, y))).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("spmm rejects a row-count mismatch") {
  const auto adj = NormalizedAdjacency::from_edges(2, 2, EdgeList{{0, 1}});
  CHECK_THROWS_AS(spmm(adj, Matrix::Zero(3, 2)), std::invalid_argument);
}

TEST_CASE("grad_check on a quadratic") {
  const std::vector<double> theta{3, 4}, grad{3, 4};
  auto f = [](std::span<const double> x) { return 0.5 * (x[0] * x[0] + x[1] * x[1]); };
  const auto r = grad_check(f, theta, grad, 1e-6);
  CHECK(r.max_rel_error < 1e-8);
  CHECK(r.checked == 2);
}

TEST_CASE("grad_check flags a wrong gradient and samples coordinates") {
  std::vector<double> theta(200, 0.5), grad(200, 0.5);
  grad[17] = 0.0;
  auto f = [](std::span<const double> x) {
    double s = 0;
    for (double v : x) s += 0.5 * v * v;
    return s;
  };
  const auto all = grad_check(f, theta, grad, 1e-6, 1000);
  CHECK(all.checked == 200);
  CHECK(all.worst_index == 17);
  CHECK(all.max_rel_error == doctest::Approx(1.0));
  const auto some = grad_check(f, theta, grad, 1e-6, 64, 3);
  CHECK(some.checked == 64);
}

TEST_CASE("grad_check rejects non-finite losses") {
  const std::vector<double> theta{0.0}, grad{0.0};
  auto f = [](std::span<const double> x) { return std::log(x[0]); };
  CHECK_THROWS_AS(grad_check(f, theta, grad), Error);
}

TEST_CASE("parallel_for covers the range once") {
  std::vector<int> hits(1000, 0);
  parallel_for(1000, [&](std::int64_t b, std::int64_t e) {
    for (auto k = b; k < e; ++k) ++hits[static_cast<std::size_t>(k)];
  });
  for (int h : hits) CHECK(h == 1);
}
