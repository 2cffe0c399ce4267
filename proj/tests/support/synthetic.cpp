#include "synthetic.hpp"

#include "micrec/features.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

namespace micrec::testing {

namespace {

SyntheticDomain make_domain(const SyntheticConfig& cfg, EntityIndex nu, EntityIndex ni, double mean_degree,
                            const std::vector<int>& forced_blocks, std::mt19937_64& rng) {
  SyntheticDomain d;
  d.num_users = nu;
  d.num_items = ni;
  std::uniform_int_distribution<int> pick_block(0, cfg.blocks - 1);
  d.user_block.resize(static_cast<std::size_t>(nu));
  for (EntityIndex u = 0; u < nu; ++u)
    d.user_block[u] = u < static_cast<EntityIndex>(forced_blocks.size()) ? forced_blocks[u] : pick_block(rng);
  d.item_block.resize(static_cast<std::size_t>(ni));
  for (EntityIndex i = 0; i < ni; ++i) d.item_block[i] = i % cfg.blocks;
  std::shuffle(d.item_block.begin(), d.item_block.end(), rng);

  std::vector<std::vector<EntityIndex>> members(static_cast<std::size_t>(cfg.blocks));
  for (EntityIndex i = 0; i < ni; ++i) members[d.item_block[i]].push_back(i);
  std::vector<std::discrete_distribution<std::size_t>> popularity;
  for (auto& m : members) {
    std::vector<double> w(m.size());
    std::vector<std::size_t> rank(m.size());
    std::iota(rank.begin(), rank.end(), std::size_t{0});
    std::shuffle(rank.begin(), rank.end(), rng);
    for (std::size_t k = 0; k < m.size(); ++k) w[k] = std::pow(static_cast<double>(rank[k]) + 1.0, -cfg.zipf);
    popularity.emplace_back(w.begin(), w.end());
  }

  std::poisson_distribution<int> extra(std::max(mean_degree - cfg.min_degree, 0.0));
  std::bernoulli_distribution stay(cfg.in_block);
  const int cap = std::max<int>(cfg.min_degree, static_cast<int>(ni) / 2);
  for (EntityIndex u = 0; u < nu; ++u) {
    const int deg = std::min(cap, cfg.min_degree + extra(rng));
    std::set<EntityIndex> chosen;
    while (static_cast<int>(chosen.size()) < deg) {
      int b = d.user_block[u];
      if (!stay(rng)) b = (b + 1 + static_cast<int>(rng() % static_cast<unsigned>(std::max(cfg.blocks - 1, 1)))) % cfg.blocks;
      chosen.insert(members[b][popularity[b](rng)]);
    }
    for (EntityIndex i : chosen) d.edges.emplace_back(u, i);
  }
  std::sort(d.edges.begin(), d.edges.end());

  std::normal_distribution<double> n01;
  auto features = [&](int dim, double noise) {
    Matrix centroids(cfg.blocks, dim);
    for (Eigen::Index k = 0; k < centroids.size(); ++k) centroids.data()[k] = n01(rng);
    Matrix f(ni, dim);
    for (EntityIndex i = 0; i < ni; ++i)
      for (int c = 0; c < dim; ++c) f(i, c) = centroids(d.item_block[i], c) + noise * n01(rng);
    return f;
  };
  d.item_features.text = features(cfg.text_dim, cfg.text_noise);
  d.item_features.visual = features(cfg.visual_dim, cfg.visual_noise);
  return d;
}

}  // namespace

SyntheticData generate(const SyntheticConfig& cfg) {
  if (cfg.blocks < 1) throw std::invalid_argument("blocks must be positive");
  std::mt19937_64 rng(cfg.seed);
  const auto n_overlap =
      static_cast<EntityIndex>(std::floor(cfg.overlap_frac * std::min(cfg.users_a, cfg.users_b)));
  std::uniform_int_distribution<int> pick_block(0, cfg.blocks - 1);
  std::vector<int> shared(static_cast<std::size_t>(n_overlap));
  for (auto& b : shared) b = pick_block(rng);
  SyntheticData out;
  out.a = make_domain(cfg, cfg.users_a, cfg.items_a, cfg.mean_degree_a, shared, rng);
  out.b = make_domain(cfg, cfg.users_b, cfg.items_b, cfg.mean_degree_b, shared, rng);
  for (EntityIndex p = 0; p < n_overlap; ++p) out.overlap.emplace_back(p, p);
  return out;
}

std::vector<Edge> uniform_edges(EntityIndex users, EntityIndex items, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(density);
  std::vector<Edge> e;
  for (EntityIndex u = 0; u < users; ++u)
    for (EntityIndex i = 0; i < items; ++i)
      if (coin(rng)) e.emplace_back(u, i);
  return e;
}

Dataset split_dataset(const SyntheticData& data, const SplitConfig& split, SplitBlocks* blocks) {
  Dataset out;
  std::vector<EntityIndex> user_perm[2];
  for (int k = 0; k < 2; ++k) {
    const auto& src = k ? data.b : data.a;
    const DomainTag tag = k ? DomainTag::B : DomainTag::A;
    const DomainGraph g(tag, src.num_users, src.num_users, src.num_items, src.num_items, src.edges);
    SplitConfig sc = split;
    sc.seed = split.seed + static_cast<std::uint64_t>(k);
    const auto res = make_inductive_split(g, sc);
    auto& d = k ? out.b : out.a;
    d.tag = tag;
    d.num_users = res.graph.num_users();
    d.num_seen_users = res.graph.num_seen_users();
    d.num_items = res.graph.num_items();
    d.num_seen_items = res.graph.num_seen_items();
    d.split = res.bundle;
    d.item_features.text = Matrix(src.num_items, src.item_features.text.cols());
    d.item_features.visual = Matrix(src.num_items, src.item_features.visual.cols());
    for (EntityIndex i = 0; i < src.num_items; ++i) {
      d.item_features.text.row(res.item_perm[i]) = src.item_features.text.row(i);
      d.item_features.visual.row(res.item_perm[i]) = src.item_features.visual.row(i);
    }
    user_perm[k] = res.user_perm;
    if (blocks) {
      blocks->user_block[k].assign(static_cast<std::size_t>(src.num_users), 0);
      blocks->item_block[k].assign(static_cast<std::size_t>(src.num_items), 0);
      for (EntityIndex u = 0; u < src.num_users; ++u) blocks->user_block[k][res.user_perm[u]] = src.user_block[u];
      for (EntityIndex i = 0; i < src.num_items; ++i) blocks->item_block[k][res.item_perm[i]] = src.item_block[i];
    }
  }
  for (const auto& [a, b] : data.overlap) out.overlap.pairs.emplace_back(user_perm[0][a], user_perm[1][b]);
  std::sort(out.overlap.pairs.begin(), out.overlap.pairs.end());
  return out;
}

namespace {

std::string user_key(char domain, EntityIndex u, std::size_t n_overlap) {
  if (static_cast<std::size_t>(u) < n_overlap) return "p" + std::to_string(u);
  return std::string(1, domain) + "_u" + std::to_string(u);
}

}  // namespace

void write_raw(const SyntheticData& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (int k = 0; k < 2; ++k) {
    const auto& d = k ? data.b : data.a;
    const char tag = k ? 'b' : 'a';
    std::ofstream out(std::filesystem::path(dir) / (std::string(1, tag) + ".tsv"));
    std::size_t ts = 1600000000;
    for (const auto& [u, i] : d.edges)
      out << user_key(tag, u, data.overlap.size()) << '\t' << tag << "_i" << i << "\t5\t" << ts++ << '\n';
  }
  std::ofstream ov(std::filesystem::path(dir) / "overlap.tsv");
  for (std::size_t p = 0; p < data.overlap.size(); ++p) ov << 'p' << p << '\n';
}

void write_prepared_features(const SyntheticData& data, const std::string& prepared_dir) {
  const auto prepared = load_prepared(prepared_dir);
  for (int k = 0; k < 2; ++k) {
    const auto& src = k ? data.b : data.a;
    const auto& keys = prepared.domain(k ? DomainTag::B : DomainTag::A).ids.item_keys;
    const std::string tag = k ? "b" : "a";
    for (const Modality m : {Modality::Text, Modality::Visual}) {
      const Matrix& rows = m == Modality::Text ? src.item_features.text : src.item_features.visual;
      FeatureMatrix f{m, Matrix(static_cast<Eigen::Index>(keys.size()), rows.cols())};
      for (std::size_t id = 0; id < keys.size(); ++id) {
        const auto raw = std::stoi(keys[id].substr(keys[id].find("_i") + 2));
        f.rows.row(static_cast<Eigen::Index>(id)) = rows.row(raw);
      }
      save_features((std::filesystem::path(prepared_dir) / ("feat_" + tag + "_" + to_string(m) + ".feat")).string(),
                    f);
    }
  }
}

}  // namespace micrec::testing
