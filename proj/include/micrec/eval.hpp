#pragma once

#include "micrec/graph.hpp"
#include "micrec/numeric.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace micrec {

/// Per-user candidate exclusions and relevant items for one ranking task.
struct RankingContext {
  EntityIndex num_users = 0;
  EntityIndex num_items = 0;
  std::vector<std::vector<EntityIndex>> excluded;  // sorted, per user
  std::vector<std::vector<EntityIndex>> relevant;  // sorted, per user
};

/// Test protocol: relevant = test edges; excluded = train, new and val edges.
RankingContext make_test_context(EntityIndex num_users, EntityIndex num_items, const SplitBundle& split);
/// Validation protocol: relevant = val edges; excluded = train edges.
RankingContext make_validation_context(EntityIndex num_users, EntityIndex num_items, const SplitBundle& split);

/// Candidates of `user` sorted by descending r_u . r_i, ties by ascending id.
/// `r` stacks user rows before item rows.
std::vector<EntityIndex> rank_items(const Matrix& r, EntityIndex user, const RankingContext& ctx);

/// Top-n of the same order as rank_items().
std::vector<EntityIndex> top_items(const Matrix& r, EntityIndex user, const RankingContext& ctx, std::size_t n);

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
};

/// Precision, recall and NDCG of `ranking` truncated at n; `relevant` sorted.
/// Ranks are 1-based; the ideal DCG uses min(n, |relevant|) hits.
Metrics metrics_at(std::span<const EntityIndex> ranking, std::span<const EntityIndex> relevant, int n);

struct Slice {
  enum class Kind { All, LowDegree };
  Kind kind = Kind::All;
  double q = 1.0;

  static Slice all() { return {}; }
  static Slice low_degree(double q) { return {Kind::LowDegree, q}; }
  std::string label() const;
  static Slice parse(const std::string& s);
};

/// The ceil(q * |I|) items with the fewest training edges (ties by ascending id).
std::vector<char> low_degree_items(const DomainGraph& train_graph, double q);

struct EvalRow {
  DomainTag domain = DomainTag::A;
  int n = 20;
  std::string slice = "all";
  double precision = 0.0;  // x100
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t users = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  void write_lines(std::ostream& out) const;  // `domain N slice precision recall ndcg users`
  void write_table(std::ostream& out) const;
};

/// Per-user metrics for one N; users whose (sliced) relevant set is empty are skipped.
struct UserMetrics {
  EntityIndex user = 0;
  Metrics m;
};
std::vector<UserMetrics> evaluate_users(const Matrix& r, const RankingContext& ctx, int n,
                                        const std::vector<char>* item_mask = nullptr);

/// Macro averages (x100), one row per N. `train_graph` supplies the
/// item frequencies for low-degree slices. Throws DataError when no user is
/// evaluable.
std::vector<EvalRow> evaluate(const Matrix& r, const RankingContext& ctx, const DomainGraph& train_graph,
                              std::span<const int> ns, const Slice& slice);

}  // namespace micrec
