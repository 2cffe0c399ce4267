#include "micrec/eval.hpp"

#include "micrec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace micrec {

namespace {

void add_edges(std::vector<std::vector<EntityIndex>>& lists, const std::vector<Edge>& edges) {
  for (const auto& [u, i] : edges) lists[static_cast<std::size_t>(u)].push_back(i);
}

void sort_unique(std::vector<std::vector<EntityIndex>>& lists) {
  for (auto& l : lists) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }
}

}  // namespace

RankingContext make_test_context(EntityIndex num_users, EntityIndex num_items, const SplitBundle& split) {
  RankingContext ctx{num_users, num_items, std::vector<std::vector<EntityIndex>>(static_cast<std::size_t>(num_users)),
                     std::vector<std::vector<EntityIndex>>(static_cast<std::size_t>(num_users))};
  add_edges(ctx.excluded, split.train);
  add_edges(ctx.excluded, split.new_edges);
  add_edges(ctx.excluded, split.val);
  add_edges(ctx.relevant, split.test);
  sort_unique(ctx.excluded);
  sort_unique(ctx.relevant);
  return ctx;
}

RankingContext make_validation_context(EntityIndex num_users, EntityIndex num_items, const SplitBundle& split) {
  RankingContext ctx{num_users, num_items, std::vector<std::vector<EntityIndex>>(static_cast<std::size_t>(num_users)),
                     std::vector<std::vector<EntityIndex>>(static_cast<std::size_t>(num_users))};
  add_edges(ctx.excluded, split.train);
  add_edges(ctx.relevant, split.val);
  sort_unique(ctx.excluded);
  sort_unique(ctx.relevant);
  return ctx;
}

namespace {

std::vector<EntityIndex> ordered_candidates(const Matrix& r, EntityIndex user, const RankingContext& ctx,
                                            std::size_t n) {
  if (r.rows() != static_cast<Eigen::Index>(ctx.num_users) + ctx.num_items)
    throw std::invalid_argument("representation rows do not match the ranking context");
  const auto& excl = ctx.excluded[static_cast<std::size_t>(user)];
  std::vector<EntityIndex> cand;
  cand.reserve(static_cast<std::size_t>(ctx.num_items));
  std::vector<double> score(static_cast<std::size_t>(ctx.num_items), 0.0);
  const auto ru = r.row(user);
  auto ex = excl.begin();
  for (EntityIndex i = 0; i < ctx.num_items; ++i) {
    while (ex != excl.end() && *ex < i) ++ex;
    if (ex != excl.end() && *ex == i) continue;
    cand.push_back(i);
    score[static_cast<std::size_t>(i)] = ru.dot(r.row(ctx.num_users + i));
  }
  auto better = [&](EntityIndex a, EntityIndex b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  };
  const std::size_t keep = std::min(n, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(), better);
  cand.resize(keep);
  return cand;
}

}  // namespace

std::vector<EntityIndex> rank_items(const Matrix& r, EntityIndex user, const RankingContext& ctx) {
  return ordered_candidates(r, user, ctx, static_cast<std::size_t>(ctx.num_items));
}

std::vector<EntityIndex> top_items(const Matrix& r, EntityIndex user, const RankingContext& ctx, std::size_t n) {
  return ordered_candidates(r, user, ctx, n);
}

Metrics metrics_at(std::span<const EntityIndex> ranking, std::span<const EntityIndex> relevant, int n) {
  if (n < 1) throw std::invalid_argument("metrics_at: N must be at least 1");
  if (relevant.empty()) throw std::invalid_argument("metrics_at: empty relevant set");
  const std::size_t cut = std::min(ranking.size(), static_cast<std::size_t>(n));
  double dcg = 0.0;
  int hits = 0;
  for (std::size_t p = 0; p < cut; ++p) {
    if (std::binary_search(relevant.begin(), relevant.end(), ranking[p])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(relevant.size(), static_cast<std::size_t>(n));
  for (std::size_t p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return {static_cast<double>(hits) / n, static_cast<double>(hits) / static_cast<double>(relevant.size()),
          dcg / idcg};
}

std::string Slice::label() const {
  if (kind == Kind::All) return "all";
  char buf[48];
  std::snprintf(buf, sizeof buf, "low:%g", q);
  return buf;
}

Slice Slice::parse(const std::string& s) {
  if (s == "all") return all();
  for (const char* prefix : {"low:", "low-degree:"}) {
    const std::string p(prefix);
    if (s.rfind(p, 0) == 0) {
      try {
        std::size_t used = 0;
        const double q = std::stod(s.substr(p.size()), &used);
        if (used == s.size() - p.size() && q > 0.0 && q <= 1.0) return low_degree(q);
      } catch (const std::exception&) {
      }
      break;
    }
  }
  throw ConfigError("bad slice '" + s + "' (expected all or low:<q> with 0 < q <= 1)");
}

std::vector<char> low_degree_items(const DomainGraph& train_graph, double q) {
  const EntityIndex ni = train_graph.num_items();
  std::vector<EntityIndex> order(static_cast<std::size_t>(ni));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](EntityIndex a, EntityIndex b) {
    return train_graph.users_of(a).size() < train_graph.users_of(b).size();
  });
  const auto keep = std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::ceil(q * ni - 1e-9)));
  std::vector<char> mask(static_cast<std::size_t>(ni), 0);
  for (std::size_t k = 0; k < keep; ++k) mask[static_cast<std::size_t>(order[k])] = 1;
  return mask;
}

std::vector<UserMetrics> evaluate_users(const Matrix& r, const RankingContext& ctx, int n,
                                        const std::vector<char>* item_mask) {
  std::vector<UserMetrics> out;
  std::vector<EntityIndex> rel;
  for (EntityIndex u = 0; u < ctx.num_users; ++u) {
    const auto& full = ctx.relevant[static_cast<std::size_t>(u)];
    rel.clear();
    for (EntityIndex i : full)
      if (!item_mask || (*item_mask)[static_cast<std::size_t>(i)]) rel.push_back(i);
    if (rel.empty()) continue;
    const auto ranking = top_items(r, u, ctx, static_cast<std::size_t>(n));
    out.push_back({u, metrics_at(ranking, rel, n)});
  }
  return out;
}

std::vector<EvalRow> evaluate(const Matrix& r, const RankingContext& ctx, const DomainGraph& train_graph,
                              std::span<const int> ns, const Slice& slice) {
  std::vector<char> mask;
  const std::vector<char>* mask_ptr = nullptr;
  if (slice.kind == Slice::Kind::LowDegree && slice.q < 1.0) {
    mask = low_degree_items(train_graph, slice.q);
    mask_ptr = &mask;
  }
  std::vector<EvalRow> rows;
  for (int n : ns) {
    const auto per_user = evaluate_users(r, ctx, n, mask_ptr);
    if (per_user.empty())
      throw DataError(std::string("domain ") + to_string(train_graph.tag()) + ": no evaluable users for slice " +
                      slice.label());
    EvalRow row;
    row.domain = train_graph.tag();
    row.n = n;
    row.slice = slice.label();
    row.users = per_user.size();
    for (const auto& um : per_user) {
      row.precision += um.m.precision;
      row.recall += um.m.recall;
      row.ndcg += um.m.ndcg;
    }
    const double scale = 100.0 / static_cast<double>(per_user.size());
    row.precision *= scale;
    row.recall *= scale;
    row.ndcg *= scale;
    rows.push_back(row);
  }
  return rows;
}

void EvalReport::write_lines(std::ostream& out) const {
  char buf[160];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%s %d %s %.6f %.6f %.6f %zu\n", to_string(row.domain), row.n, row.slice.c_str(),
                  row.precision, row.recall, row.ndcg, row.users);
    out << buf;
  }
}

void EvalReport::write_table(std::ostream& out) const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s %5s %-10s %10s %10s %10s %7s\n", "domain", "N", "slice", "Pre", "Rec", "NDCG",
                "users");
  out << buf;
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof buf, "%-6s %5d %-10s %10.3f %10.3f %10.3f %7zu\n", to_string(row.domain), row.n,
                  row.slice.c_str(), row.precision, row.recall, row.ndcg, row.users);
    out << buf;
  }
}

}  // namespace micrec
