#pragma once

#include "micrec/graph.hpp"
#include "micrec/pipeline.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace micrec::testing {

/// Planted two-domain data: every user and item belongs to one of `blocks`
/// preference blocks, overlapping persons share their block across domains,
/// items are drawn mostly from the user's block with a Zipf popularity skew,
/// and item features are noisy block centroids.
struct SyntheticConfig {
  int blocks = 2;
  EntityIndex users_a = 240;
  EntityIndex items_a = 160;
  EntityIndex users_b = 240;
  EntityIndex items_b = 160;
  double overlap_frac = 0.3;     // of the smaller user population
  double mean_degree_a = 15.0;
  double mean_degree_b = 3.0;    // sparse domain
  int min_degree = 3;
  double in_block = 0.95;        // probability an edge stays in the user's block
  double zipf = 0.3;             // popularity skew within a block
  int text_dim = 16;
  int visual_dim = 16;
  double text_noise = 0.8;
  double visual_noise = 1.2;
  std::uint64_t seed = 1;
};

struct SyntheticDomain {
  EntityIndex num_users = 0;
  EntityIndex num_items = 0;
  std::vector<Edge> edges;          // sorted
  std::vector<int> user_block;
  std::vector<int> item_block;
  EntityFeatures item_features;     // by item id
};

struct SyntheticData {
  SyntheticDomain a, b;
  std::vector<std::pair<EntityIndex, EntityIndex>> overlap;  // (user in A, user in B)
};

SyntheticData generate(const SyntheticConfig& cfg);

/// Uniform random bipartite edges (no planted structure).
std::vector<Edge> uniform_edges(EntityIndex users, EntityIndex items, double density, std::uint64_t seed);

/// Planted blocks in the relabeled id space of a split, indexed by domain (0 = A).
struct SplitBlocks {
  std::vector<int> user_block[2];
  std::vector<int> item_block[2];
};

/// Inductive split of both domains with features and overlap carried through
/// the relabeling.
Dataset split_dataset(const SyntheticData& data, const SplitConfig& split, SplitBlocks* blocks = nullptr);

/// Writes raw records (`a.tsv`, `b.tsv`, ratings 5) and `overlap.tsv` with
/// keys `a_u<id>`, `a_i<id>`, `b_u<id>`, `b_i<id>`, and persons `p<id>`
/// shared by overlapping users.
void write_raw(const SyntheticData& data, const std::string& dir);

/// After `prepare`, writes `<prepared>/feat_{a,b}_{text,visual}.feat` in
/// the relabeled id space by resolving item keys.
void write_prepared_features(const SyntheticData& data, const std::string& prepared_dir);

}  // namespace micrec::testing
