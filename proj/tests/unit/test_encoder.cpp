#include "micrec/encoder.hpp"
#include "micrec/errors.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace micrec;

namespace {

RowVector row(std::initializer_list<double> v) {
  RowVector r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) r(k++) = x;
  return r;
}

DomainParams zero_params(EntityIndex tu, EntityIndex ti, int d) {
  DomainParams p;
  p.template_user = Matrix::Zero(tu, d);
  p.template_item = Matrix::Zero(ti, d);
  p.bias_user = Matrix::Zero(1, d);
  p.bias_item = Matrix::Zero(1, d);
  p.se_projection = Matrix::Identity(d, d);
  p.proj = {Matrix::Identity(d, d), Matrix::Zero(1, d), Matrix::Identity(d, d), Matrix::Zero(1, d)};
  return p;
}

NeighborIndex index_of(std::vector<std::vector<EntityIndex>> lists, int k) {
  NeighborIndex idx;
  idx.k = k;
  idx.scores.resize(lists.size());
  for (std::size_t v = 0; v < lists.size(); ++v) idx.scores[v].assign(lists[v].size(), 0.0);
  idx.neighbors = std::move(lists);
  return idx;
}

std::vector<Edge> random_edges(EntityIndex nu, EntityIndex ni, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> e;
  for (EntityIndex u = 0; u < nu; ++u)
    for (EntityIndex i = 0; i < ni; ++i)
      if (coin(rng)) e.emplace_back(u, i);
  return e;
}

GraphState toy_state(std::mt19937_64& rng, EntityIndex nu = 5, EntityIndex ni = 6) {
  auto edges = random_edges(nu, ni, 0.5, rng);
  DomainGraph g(DomainTag::A, nu, nu - 1, ni, ni - 1, edges);
  std::vector<EntityIndex> tu, ti;
  for (EntityIndex u = 0; u < nu - 1; u += 1) tu.push_back(u);
  for (EntityIndex i = 0; i < ni - 1; i += 2) ti.push_back(i);
  g.set_templates(tu, ti);
  EntityFeatures f{Matrix::Random(ni, 3), Matrix::Random(ni, 2)};
  return GraphState::build(g, &f, SimilarityConfig{}, 2);
}

}  // namespace

TEST_CASE("template_encode examples") {
  SUBCASE("no template neighbors gives zero") {
    DomainGraph g(DomainTag::A, 2, 2, 2, 2, std::vector<Edge>{{0, 1}, {1, 0}});
    g.set_templates({1}, {0});
    auto p = zero_params(1, 1, 2);
    p.template_item.row(0) = row({3, 4});
    p.bias_user = row({1, 1});
    const Matrix x = template_encode(g, p, 1.0);
    CHECK(x.row(0).isZero(0));  // user 0 only touches non-template item 1
    CHECK(x.row(1) == row({2, 2.5}));
  }
  SUBCASE("two template neighbors with alpha 1") {
    DomainGraph g(DomainTag::A, 1, 1, 2, 2, std::vector<Edge>{{0, 0}, {0, 1}});
    g.set_templates({0}, {0, 1});
    auto p = zero_params(1, 2, 2);
    p.template_item << 1, 0, 0, 1;
    p.bias_user = row({1, 1});
    const Matrix x = template_encode(g, p, 1.0);
    CHECK(std::fabs(x(0, 0) - 1.0) <= 1e-15);
    CHECK(std::fabs(x(0, 1) - 1.0) <= 1e-15);
  }
  SUBCASE("alpha 0 leaves the sum unscaled") {
    DomainGraph g(DomainTag::A, 1, 1, 1, 1, std::vector<Edge>{{0, 0}});
    g.set_templates({0}, {0});
    auto p = zero_params(1, 1, 2);
    p.template_item.row(0) = row({2, 2});
    const Matrix x = template_encode(g, p, 0.0);
    CHECK(x.row(0) == row({2, 2}));
  }
}

TEST_CASE("template_encode matches the direct formula on random graphs") {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const EntityIndex nu = 3 + trial % 4, ni = 4 + trial % 3;
    DomainGraph g(DomainTag::A, nu, nu, ni, ni, random_edges(nu, ni, 0.5, rng));
    std::vector<EntityIndex> tu, ti;
    for (EntityIndex u = 0; u < nu; ++u)
      if (rng() % 2) tu.push_back(u);
    for (EntityIndex i = 0; i < ni; ++i)
      if (rng() % 2) ti.push_back(i);
    g.set_templates(tu, ti);
    auto p = init_domain_params(static_cast<EntityIndex>(tu.size()), static_cast<EntityIndex>(ti.size()), 3, 1.0, rng);
    p.bias_user.setRandom();
    p.bias_item.setRandom();
    const double alpha = 0.5 + 0.005 * trial;
    const Matrix x = template_encode(g, p, alpha);
    for (EntityIndex u = 0; u < nu; ++u) {
      RowVector s = RowVector::Zero(3);
      int n = 0;
      for (std::size_t t = 0; t < ti.size(); ++t)
        if (g.has_edge(u, ti[t])) {
          s += p.template_item.row(static_cast<Eigen::Index>(t)) + p.bias_user;
          ++n;
        }
      if (n) s *= std::pow(n + 1.0, -alpha);
      worst = std::max(worst, (x.row(u) - s).cwiseAbs().maxCoeff());
    }
    for (EntityIndex i = 0; i < ni; ++i) {
      RowVector s = RowVector::Zero(3);
      int n = 0;
      for (std::size_t t = 0; t < tu.size(); ++t)
        if (g.has_edge(tu[t], i)) {
          s += p.template_user.row(static_cast<Eigen::Index>(t)) + p.bias_item;
          ++n;
        }
      if (n) s *= std::pow(n + 1.0, -alpha);
      worst = std::max(worst, (x.row(nu + i) - s).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("aggregate_modal examples") {
  SUBCASE("K=1 adds the neighbor") {
    Matrix x(3, 2);
    x << 1, 0, 0, 2, 5, 5;
    const Matrix out = aggregate_modal(x, index_of({{1}, {0}}, 1), index_of({{}}, 1), 1);
    CHECK(out.row(0) == row({1, 2}));
    CHECK(out.row(2) == row({5, 5}));
  }
  SUBCASE("zero neighbors leave x unchanged") {
    Matrix x(3, 2);
    x << 1, 3, 0, 0, 0, 0;
    const Matrix out = aggregate_modal(x, index_of({{1, 2}, {0, 2}, {0, 1}}, 2), index_of({}, 2), 2);
    CHECK(out.row(0) == x.row(0));
  }
  SUBCASE("divisor is K even with a shorter list") {
    Matrix x(2, 2);
    x << 0, 0, 2, 0;
    const Matrix out = aggregate_modal(x, index_of({{1}, {0}}, 2), index_of({}, 2), 2);
    CHECK(out.row(0) == row({1, 0}));
  }
  SUBCASE("population mismatch") {
    CHECK_THROWS_AS(aggregate_modal(Matrix::Zero(3, 2), index_of({{1}, {0}}, 1), index_of({}, 1), 1), DataError);
  }
}

TEST_CASE("propagate") {
  std::mt19937_64 rng(6);
  SUBCASE("L=0 is the identity") {
    const auto adj = NormalizedAdjacency::from_edges(3, 3, random_edges(3, 3, 0.6, rng));
    const Matrix x = Matrix::Random(6, 2);
    CHECK(propagate(x, adj, 0) == x);
  }
  SUBCASE("dense power-sum oracle up to 20 nodes") {
    double worst = 0.0;
    for (int trial = 0; trial < 40; ++trial) {
      const EntityIndex nu = 2 + trial % 9, ni = 20 - nu - trial % 5;
      const auto adj = NormalizedAdjacency::from_edges(nu, ni, random_edges(nu, ni, 0.35, rng));
      const Matrix a = adj.to_dense();
      const Matrix x = Matrix::Random(nu + ni, 3);
      const int layers = trial % 4;
      Matrix acc = x, power = Matrix::Identity(nu + ni, nu + ni);
      for (int l = 1; l <= layers; ++l) {
        power = power * a;
        acc += power * x;
      }
      acc /= layers + 1.0;
      worst = std::max(worst, (propagate(x, adj, layers) - acc).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-10);
  }
  SUBCASE("disconnected node keeps x/(L+1)") {
    const auto adj = NormalizedAdjacency::from_edges(2, 2, std::vector<std::pair<std::int32_t, std::int32_t>>{{0, 0}});
    Matrix x(4, 1);
    x << 1, 6, 2, 3;
    const Matrix r = propagate(x, adj, 2);
    CHECK(r(1, 0) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(r(3, 0) == doctest::Approx(1.0).epsilon(1e-15));
  }
}

TEST_CASE("encoding modes") {
  std::mt19937_64 rng(8);
  const auto state = toy_state(rng);
  auto p = init_domain_params(static_cast<EntityIndex>(state.graph.template_users().size()),
                              static_cast<EntityIndex>(state.graph.template_items().size()), 4, 0.5, rng);
  EncoderConfig cfg;
  cfg.dim = 4;
  cfg.k = 2;
  SUBCASE("dropout 0: train equals infer") {
    cfg.dropout = 0.0;
    CHECK(encode_domain(state, p, cfg, EncodeMode::Train, 3).r == encode_domain(state, p, cfg, EncodeMode::Infer).r);
  }
  SUBCASE("infer is deterministic and ignores the seed") {
    CHECK(encode_domain(state, p, cfg, EncodeMode::Infer, 1).r == encode_domain(state, p, cfg, EncodeMode::Infer, 2).r);
  }
  SUBCASE("train dropout depends only on the seed") {
    CHECK(encode_domain(state, p, cfg, EncodeMode::Train, 5).r == encode_domain(state, p, cfg, EncodeMode::Train, 5).r);
    CHECK(encode_domain(state, p, cfg, EncodeMode::Train, 5).r != encode_domain(state, p, cfg, EncodeMode::Train, 6).r);
  }
  SUBCASE("dimension mismatch") {
    cfg.dim = 3;
    CHECK_THROWS_AS(encode_domain(state, p, cfg, EncodeMode::Infer), DataError);
  }
  SUBCASE("wrong template population") {
    auto q = init_domain_params(1, 1, 4, 0.5, rng);
    CHECK_THROWS_AS(encode_domain(state, q, cfg, EncodeMode::Infer), DataError);
  }
}

TEST_CASE("inverted dropout preserves the expectation") {
  std::mt19937_64 rng(9);
  const auto state = toy_state(rng, 4, 3);
  auto p = init_domain_params(static_cast<EntityIndex>(state.graph.template_users().size()),
                              static_cast<EntityIndex>(state.graph.template_items().size()), 2, 1.0, rng);
  EncoderConfig cfg;
  cfg.dim = 2;
  cfg.k = 2;
  cfg.dropout = 0.5;
  const Matrix expect = encode_domain(state, p, cfg, EncodeMode::Infer).r;
  const int draws = 10000;
  Matrix sum = Matrix::Zero(expect.rows(), expect.cols()), sq = sum;
  for (int s = 0; s < draws; ++s) {
    const Matrix r = encode_domain(state, p, cfg, EncodeMode::Train, 1000 + static_cast<std::uint64_t>(s)).r;
    sum += r;
    sq += r.cwiseProduct(r);
  }
  const Matrix mean = sum / draws;
  for (Eigen::Index k = 0; k < mean.size(); ++k) {
    const double var = sq.data()[k] / draws - mean.data()[k] * mean.data()[k];
    const double se = std::sqrt(std::max(var, 0.0) / draws);
    CHECK(std::fabs(mean.data()[k] - expect.data()[k]) <= 3 * se + 1e-12);
  }
}

TEST_CASE("inductive encoding on a grown graph") {
  // Seen users 0-2, unseen user 3; seen items 0-2, unseen item 3.
  const std::vector<Edge> train{{0, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 0}, {2, 2}};
  DomainGraph g(DomainTag::A, 4, 3, 4, 3, train);
  g.set_templates({0, 1, 2}, {0, 1, 2});
  std::mt19937_64 rng(10);
  auto p = init_domain_params(3, 3, 3, 1.0, rng);
  p.bias_user.setRandom();
  EncoderConfig cfg;
  cfg.dim = 3;
  cfg.use_mm = false;
  cfg.alpha = 0.8;

  const auto before = GraphState::build(g, nullptr, SimilarityConfig{}, cfg.k);
  auto grown_edges = train;
  grown_edges.emplace_back(3, 1);
  grown_edges.emplace_back(1, 3);  // unseen item; not a template
  std::sort(grown_edges.begin(), grown_edges.end());
  const auto after = GraphState::build(g.with_edges(grown_edges), nullptr, SimilarityConfig{}, cfg.k);

  const auto r0 = encode_domain(before, p, cfg, EncodeMode::Infer);
  const auto r1 = encode_domain(after, p, cfg, EncodeMode::Infer);
  CHECK(r0.r.row(3).isZero(0));
  CHECK_FALSE(r1.r.row(3).isZero(0));
  // The unseen user's x is the template formula over its single template item.
  const RowVector expect = std::pow(2.0, -cfg.alpha) * (p.template_item.row(1) + p.bias_user);
  CHECK((r1.x.row(3) - expect).cwiseAbs().maxCoeff() <= 1e-15);
  // x of users 0 and 2 does not see the new edges; user 1 gained a non-template item.
  for (EntityIndex u : {0, 1, 2}) CHECK(r1.x.row(u) == r0.x.row(u));
  CHECK(r1.r.row(0) != r0.r.row(0));  // reached only through propagation
}
