#include "micrec/errors.hpp"
#include "micrec/eval.hpp"

#include "synthetic.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace micrec;

namespace {

RankingContext context(EntityIndex nu, EntityIndex ni) {
  return {nu, ni, std::vector<std::vector<EntityIndex>>(static_cast<std::size_t>(nu)),
          std::vector<std::vector<EntityIndex>>(static_cast<std::size_t>(nu))};
}

struct Brute {
  double precision, recall, ndcg;
};

Brute brute_metrics(const std::vector<EntityIndex>& ranking, const std::set<EntityIndex>& relevant, int n) {
  double hits = 0, dcg = 0, idcg = 0;
  for (int rank = 1; rank <= n && rank <= static_cast<int>(ranking.size()); ++rank)
    if (relevant.count(ranking[rank - 1])) {
      hits += 1;
      dcg += 1.0 / std::log2(rank + 1.0);
    }
  for (int rank = 1; rank <= std::min<int>(n, static_cast<int>(relevant.size())); ++rank)
    idcg += 1.0 / std::log2(rank + 1.0);
  return {hits / n, hits / static_cast<double>(relevant.size()), dcg / idcg};
}

}  // namespace

TEST_CASE("rank_items") {
  SUBCASE("zero scores fall back to ascending id") {
    Matrix r = Matrix::Zero(1 + 4, 2);
    r.row(0) << 1, 0;
    r.col(1).tail(4).setRandom();  // orthogonal to the user
    const auto ctx = context(1, 4);
    CHECK(rank_items(r, 0, ctx) == std::vector<EntityIndex>{0, 1, 2, 3});
  }
  SUBCASE("descending score") {
    Matrix r(1 + 3, 1);
    r << 1, 2, 5, 1;
    CHECK(rank_items(r, 0, context(1, 3)) == std::vector<EntityIndex>{1, 0, 2});
  }
  SUBCASE("excluded items never appear") {
    Matrix r(1 + 3, 1);
    r << 1, 2, 5, 1;
    auto ctx = context(1, 3);
    ctx.excluded[0] = {1};
    CHECK(rank_items(r, 0, ctx) == std::vector<EntityIndex>{0, 2});
    CHECK(top_items(r, 0, ctx, 1) == std::vector<EntityIndex>{0});
  }
}

TEST_CASE("metrics_at examples") {
  const std::vector<EntityIndex> ranking{4, 7, 1, 0, 2};
  SUBCASE("perfect ranking") {
    const std::vector<EntityIndex> rel{1, 4, 7};
    const auto m = metrics_at(ranking, rel, 3);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.ndcg == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("one relevant item at rank 2") {
    const std::vector<EntityIndex> rel{7};
    const auto m = metrics_at(ranking, rel, 20);
    CHECK(m.precision == 1.0 / 20);
    CHECK(m.recall == 1.0);
    CHECK(m.ndcg == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-15));
    CHECK(m.ndcg == doctest::Approx(0.63093).epsilon(1e-5));
  }
  SUBCASE("no hits") {
    const std::vector<EntityIndex> rel{9};
    const auto m = metrics_at(ranking, rel, 5);
    CHECK(m.precision == 0.0);
    CHECK(m.recall == 0.0);
    CHECK(m.ndcg == 0.0);
  }
}

TEST_CASE("metrics_at matches a brute-force oracle exactly") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const int items = 5 + static_cast<int>(rng() % 40);
    std::vector<EntityIndex> ranking(static_cast<std::size_t>(items));
    std::iota(ranking.begin(), ranking.end(), 0);
    std::shuffle(ranking.begin(), ranking.end(), rng);
    ranking.resize(static_cast<std::size_t>(1 + rng() % static_cast<unsigned>(items)));
    std::set<EntityIndex> rel;
    const int nrel = 1 + static_cast<int>(rng() % static_cast<unsigned>(std::min(8, items)));
    while (static_cast<int>(rel.size()) < nrel) rel.insert(static_cast<EntityIndex>(rng() % items));
    const std::vector<EntityIndex> relv(rel.begin(), rel.end());
    const int n = 1 + static_cast<int>(rng() % 30);
    const auto m = metrics_at(ranking, relv, n);
    const auto b = brute_metrics(ranking, rel, n);
    CHECK(m.precision == b.precision);
    CHECK(m.recall == b.recall);
    CHECK(m.ndcg == b.ndcg);
  }
}

TEST_CASE("recall is non-decreasing in N") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EntityIndex> ranking(30);
    std::iota(ranking.begin(), ranking.end(), 0);
    std::shuffle(ranking.begin(), ranking.end(), rng);
    const std::vector<EntityIndex> rel{3, 11, 17, 29};
    double prev = 0.0;
    for (int n = 1; n <= 30; ++n) {
      const auto m = metrics_at(ranking, rel, n);
      CHECK(m.recall >= prev);
      CHECK(m.precision <= 1.0);
      prev = m.recall;
    }
    CHECK(prev == 1.0);
  }
}

TEST_CASE("contexts follow the protocol") {
  SplitBundle s;
  s.train = {{0, 0}, {1, 1}};
  s.val = {{0, 1}};
  s.new_edges = {{1, 2}};
  s.test = {{0, 2}, {1, 0}};
  const auto test = make_test_context(2, 3, s);
  CHECK(test.excluded[0] == std::vector<EntityIndex>{0, 1});
  CHECK(test.excluded[1] == std::vector<EntityIndex>{1, 2});
  CHECK(test.relevant[0] == std::vector<EntityIndex>{2});
  const auto val = make_validation_context(2, 3, s);
  CHECK(val.excluded[0] == std::vector<EntityIndex>{0});
  CHECK(val.relevant[0] == std::vector<EntityIndex>{1});
  CHECK(val.relevant[1].empty());
}

TEST_CASE("low-degree slice") {
  // item degrees: 0 -> 2, 1 -> 0, 2 -> 1, 3 -> 1
  const DomainGraph g(DomainTag::B, 2, 2, 4, 4, std::vector<Edge>{{0, 0}, {0, 2}, {1, 0}, {1, 3}});
  const auto half = low_degree_items(g, 0.5);
  CHECK(half == std::vector<char>{0, 1, 1, 0});
  const auto quarter = low_degree_items(g, 0.25);
  CHECK(quarter == std::vector<char>{0, 1, 0, 0});
  CHECK_THROWS_AS(Slice::parse("low:0"), ConfigError);
  CHECK(Slice::parse("low:0.25").q == 0.25);
  CHECK(Slice::parse("low:0.25").label() == "low:0.25");
}

TEST_CASE("evaluate: macro average, full slice and errors") {
  std::mt19937_64 rng(14);
  const EntityIndex nu = 30, ni = 25;
  std::vector<Edge> train, test;
  for (EntityIndex u = 0; u < nu; ++u)
    for (EntityIndex i = 0; i < ni; ++i) {
      const auto c = rng() % 10;
      if (c == 0) train.emplace_back(u, i);
      if (c == 1) test.emplace_back(u, i);
    }
  SplitBundle s;
  s.train = train;
  s.test = test;
  const DomainGraph g(DomainTag::A, nu, nu, ni, ni, train);
  const auto ctx = make_test_context(nu, ni, s);
  const Matrix r = Matrix::Random(nu + ni, 4);
  const int ns[] = {5, 10, 20};

  const auto all = evaluate(r, ctx, g, ns, Slice::all());
  const auto full = evaluate(r, ctx, g, ns, Slice::low_degree(1.0));
  REQUIRE(all.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(all[k].recall == full[k].recall);
    CHECK(all[k].ndcg == full[k].ndcg);
  }
  CHECK(all[0].recall <= all[1].recall);
  CHECK(all[1].recall <= all[2].recall);

  const auto users = evaluate_users(r, ctx, 10, nullptr);
  double mean = 0.0;
  for (const auto& um : users) {
    const auto ranking = top_items(r, um.user, ctx, 10);
    const std::set<EntityIndex> rel(ctx.relevant[um.user].begin(), ctx.relevant[um.user].end());
    CHECK(um.m.recall == brute_metrics(ranking, rel, 10).recall);
    mean += um.m.recall;
  }
  CHECK(all[1].recall == doctest::Approx(100.0 * mean / static_cast<double>(users.size())).epsilon(1e-14));
  CHECK(all[1].users == users.size());

  RankingContext empty = ctx;
  for (auto& rel : empty.relevant) rel.clear();
  CHECK_THROWS_AS(evaluate(r, empty, g, ns, Slice::all()), DataError);

  EvalReport report{all};
  std::ostringstream out;
  report.write_lines(out);
  CHECK(out.str().rfind("A 5 all ", 0) == 0);
}

TEST_CASE("random scores on uniform data give Recall@20 near 20/|I|") {
  const EntityIndex nu = 300, ni = 1000;
  std::vector<double> per_seed;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto edges = micrec::testing::uniform_edges(nu, ni, 0.01, seed);
    const DomainGraph g(DomainTag::A, nu, nu, ni, ni, edges);
    SplitConfig sc;
    sc.seed = seed;
    const auto split = make_inductive_split(g, sc);
    const auto ctx = make_test_context(nu, ni, split.bundle);
    std::mt19937_64 rng(1000 + seed);
    std::normal_distribution<double> n01;
    Matrix r(nu + ni, 8);
    for (Eigen::Index k = 0; k < r.size(); ++k) r.data()[k] = n01(rng);
    const int n20[] = {20};
    per_seed.push_back(evaluate(r, ctx, split.graph, n20, Slice::all())[0].recall / 100.0);
  }
  const double mean = std::accumulate(per_seed.begin(), per_seed.end(), 0.0) / 20.0;
  double var = 0.0;
  for (double v : per_seed) var += (v - mean) * (v - mean);
  const double se = std::sqrt(var / 19.0 / 20.0);
  CHECK(std::fabs(mean - 20.0 / ni) <= 3 * se);
}
