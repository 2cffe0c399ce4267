#include "micrec/selftest.hpp"

#include "micrec/encoder.hpp"
#include "micrec/eval.hpp"
#include "micrec/features.hpp"
#include "micrec/objective.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

namespace micrec {

namespace {

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<Edge> random_edges(EntityIndex nu, EntityIndex ni, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> e;
  for (EntityIndex u = 0; u < nu; ++u)
    for (EntityIndex i = 0; i < ni; ++i)
      if (coin(rng)) e.emplace_back(u, i);
  return e;
}

struct Toy {
  GraphState state[2];
  ModelParams params;
  TripletBatch bpr[2], se[2];
  OverlapBatch overlap;
};

Toy make_toy(std::mt19937_64& rng) {
  Toy t;
  const int d = 4;
  std::normal_distribution<double> n01;
  for (int k = 0; k < 2; ++k) {
    const EntityIndex nu = 5, ni = 6;
    auto edges = random_edges(nu, ni, 0.45, rng);
    for (EntityIndex u = 0; u < nu; ++u) edges.emplace_back(u, u % ni);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    DomainGraph g(k ? DomainTag::B : DomainTag::A, nu, nu, ni, ni, edges);
    g.set_templates({0, 1, 2, 3}, {0, 1, 2, 3, 4});
    EntityFeatures f{Matrix(ni, 3), Matrix(ni, 2)};
    for (Eigen::Index r = 0; r < f.text.size(); ++r) f.text.data()[r] = n01(rng);
    for (Eigen::Index r = 0; r < f.visual.size(); ++r) f.visual.data()[r] = n01(rng);
    t.state[k] = GraphState::build(g, &f, SimilarityConfig{}, 2);
    auto& p = k ? t.params.b : t.params.a;
    p = init_domain_params(4, 5, d, 0.5, rng);
    p.bias_user.setRandom();
    p.bias_item.setRandom();
    p.se_projection += 0.3 * Matrix::Random(d, d);
    p.proj.b1.setRandom();
    p.proj.b2.setRandom();
    const auto& gg = t.state[k].graph;
    for (EntityIndex u = 0; u < nu; ++u)
      for (EntityIndex i : gg.items_of(u))
        for (EntityIndex j = 0; j < ni; ++j)
          if (!gg.has_edge(u, j)) {
            t.bpr[k].push_back({u, i, j});
            if (gg.template_user_slot(u) >= 0 && gg.template_item_slot(i) >= 0 && gg.template_item_slot(j) >= 0)
              t.se[k].push_back({u, i, j});
            break;
          }
  }
  t.overlap.members = {{0, 1}, {1, 0}, {2, 3}};
  return t;
}

double joint_value(const Toy& t, const ModelParams& p, const LossWeights& w, const EncoderConfig& cfg) {
  const Encoding ea(t.state[0], p.a, cfg, EncodeMode::Infer, 0);
  const Encoding eb(t.state[1], p.b, cfg, EncodeMode::Infer, 0);
  JointInputs in;
  in.enc_a = &ea;
  in.enc_b = &eb;
  in.bpr_a = t.bpr[0];
  in.bpr_b = t.bpr[1];
  in.se_a = t.se[0];
  in.se_b = t.se[1];
  in.overlap = &t.overlap;
  return joint_loss(in, p, w).value;
}

SelftestResult gradient_check(unsigned seed) {
  double worst = 0.0;
  for (unsigned s = 0; s < 3; ++s) {
    std::mt19937_64 rng(seed * 1000 + s);
    const Toy t = make_toy(rng);
    EncoderConfig cfg;
    cfg.dim = 4;
    cfg.k = 2;
    cfg.layers = 2;
    cfg.alpha = 0.7;
    cfg.dropout = 0.0;
    LossWeights w;
    w.lambda = 1e-3;
    w.beta = 0.5;
    w.gamma = 0.7;
    const Encoding ea(t.state[0], t.params.a, cfg, EncodeMode::Infer, 0);
    const Encoding eb(t.state[1], t.params.b, cfg, EncodeMode::Infer, 0);
    JointInputs in;
    in.enc_a = &ea;
    in.enc_b = &eb;
    in.bpr_a = t.bpr[0];
    in.bpr_b = t.bpr[1];
    in.se_a = t.se[0];
    in.se_b = t.se[1];
    in.overlap = &t.overlap;
    const auto analytic = joint_loss(in, t.params, w).grad.flatten();
    const auto x0 = t.params.flatten();
    auto f = [&](std::span<const double> x) {
      ModelParams p = t.params;
      p.assign_flat(x);
      return joint_value(t, p, w, cfg);
    };
    worst = std::max(worst, grad_check(f, x0, analytic, 1e-6, 128, s).max_rel_error);
  }
  return {"joint loss gradient vs finite differences", worst <= 1e-4, fmt("max rel error %.3g", worst)};
}

SelftestResult propagation_check(unsigned seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const EntityIndex nu = 4 + trial % 4, ni = 5 + trial % 3;
    const auto edges = random_edges(nu, ni, 0.4, rng);
    const auto adj = NormalizedAdjacency::from_edges(nu, ni, edges);
    const Matrix dense = adj.to_dense();
    Matrix x = Matrix::Random(nu + ni, 3);
    const int layers = 1 + trial % 3;
    Matrix acc = x, h = x;
    for (int l = 0; l < layers; ++l) {
      h = dense * h;
      acc += h;
    }
    acc /= static_cast<double>(layers + 1);
    worst = std::max(worst, (propagate(x, adj, layers) - acc).cwiseAbs().maxCoeff());
  }
  return {"propagation vs dense power sum", worst <= 1e-10, fmt("max abs error %.3g", worst)};
}

SelftestResult template_check(unsigned seed) {
  std::mt19937_64 rng(seed + 1);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const EntityIndex nu = 5, ni = 6;
    const auto edges = random_edges(nu, ni, 0.5, rng);
    DomainGraph g(DomainTag::A, nu, nu, ni, ni, edges);
    g.set_templates({0, 2, 3}, {1, 2, 4});
    auto p = init_domain_params(3, 3, 2, 1.0, rng);
    p.bias_user.setRandom();
    p.bias_item.setRandom();
    const double alpha = 0.5 + 0.05 * trial;
    const Matrix x = template_encode(g, p, alpha);
    for (EntityIndex u = 0; u < nu; ++u) {
      RowVector s = RowVector::Zero(2);
      int n = 0;
      for (EntityIndex i : g.items_of(u))
        if (g.template_item_slot(i) >= 0) {
          s += p.template_item.row(g.template_item_slot(i)) + p.bias_user.row(0);
          ++n;
        }
      if (n) s *= std::pow(n + 1.0, -alpha);
      worst = std::max(worst, (x.row(u) - s).cwiseAbs().maxCoeff());
    }
  }
  return {"template encoding vs direct formula", worst <= 1e-12, fmt("max abs error %.3g", worst)};
}

SelftestResult index_check(unsigned seed) {
  std::mt19937_64 rng(seed + 2);
  std::uniform_int_distribution<int> level(0, 2);
  int mismatches = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 12, k = 3;
    EntityFeatures f{Matrix(n, 2), Matrix(n, 2)};
    // Coarse values so that exact ties occur.
    for (Eigen::Index r = 0; r < f.text.size(); ++r) f.text.data()[r] = level(rng);
    for (Eigen::Index r = 0; r < f.visual.size(); ++r) f.visual.data()[r] = level(rng);
    const SimilarityConfig cfg;
    const auto idx = build_neighbor_index(f, cfg, k);
    for (int a = 0; a < n; ++a) {
      std::vector<std::pair<double, int>> all;
      for (int b = 0; b < n; ++b)
        if (b != a)
          all.emplace_back(-fused_similarity(f.text.row(a), f.visual.row(a), f.text.row(b), f.visual.row(b),
                                             cfg.weight),
                           b);
      std::sort(all.begin(), all.end());
      for (int j = 0; j < k; ++j)
        if (idx.neighbors[a][j] != all[j].second) ++mismatches;
    }
  }
  return {"neighbor index vs brute force", mismatches == 0, std::to_string(mismatches) + " mismatches"};
}

SelftestResult metric_check(unsigned seed) {
  std::mt19937_64 rng(seed + 3);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int items = 30;
    std::vector<EntityIndex> ranking(items);
    std::iota(ranking.begin(), ranking.end(), 0);
    std::shuffle(ranking.begin(), ranking.end(), rng);
    std::set<EntityIndex> rel;
    const int nrel = 1 + trial % 7;
    while (static_cast<int>(rel.size()) < nrel) rel.insert(static_cast<EntityIndex>(rng() % items));
    const std::vector<EntityIndex> relv(rel.begin(), rel.end());
    const int n = 1 + trial % 25;
    const auto m = metrics_at(ranking, relv, n);
    double hits = 0, dcg = 0, idcg = 0;
    for (int p = 0; p < n; ++p)
      if (rel.count(ranking[p])) {
        hits += 1;
        dcg += 1.0 / std::log2(p + 2.0);
      }
    for (int p = 0; p < std::min(n, nrel); ++p) idcg += 1.0 / std::log2(p + 2.0);
    worst = std::max({worst, std::fabs(m.precision - hits / n), std::fabs(m.recall - hits / nrel),
                      std::fabs(m.ndcg - dcg / idcg)});
  }
  return {"ranking metrics vs brute force", worst == 0.0, fmt("max abs error %.3g", worst)};
}

}  // namespace

std::vector<SelftestResult> run_selftest(unsigned seed) {
  std::vector<SelftestResult> out;
  out.push_back(gradient_check(seed));
  out.push_back(propagation_check(seed));
  out.push_back(template_check(seed));
  out.push_back(index_check(seed));
  out.push_back(metric_check(seed));
  return out;
}

}  // namespace micrec
