#pragma once

#include "micrec/graph.hpp"
#include "micrec/numeric.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace micrec {

enum class Modality { Text, Visual };
const char* to_string(Modality m);
Modality parse_modality(const std::string& s);

/// One feature row per entity id.
struct FeatureMatrix {
  Modality modality = Modality::Text;
  Matrix rows;

  std::int64_t count() const { return rows.rows(); }
  std::int64_t dim() const { return rows.cols(); }
};

/// Reads the `MICREC-FEAT v1 <modality> <count> <dim>` format. Rows may come in
/// any order but every id in [0, expected_count) must appear exactly once.
FeatureMatrix read_features(std::istream& in, const std::string& source_name, std::int64_t expected_count);
FeatureMatrix load_features(const std::string& path, std::int64_t expected_count);

/// Writes rows in id order with round-trip precision.
void write_features(std::ostream& out, const FeatureMatrix& features);
void save_features(const std::string& path, const FeatureMatrix& features);

/// Text and visual features of one entity class, row-aligned by id.
struct EntityFeatures {
  Matrix text;
  Matrix visual;

  std::int64_t count() const { return text.rows(); }
};

/// Mean of the item features over each user's adjacent items in `graph`
/// (pass the graph state whose edges should count). Users without edges get
/// zero rows. Accumulation runs in ascending item order in double precision.
EntityFeatures derive_user_features(const DomainGraph& graph, const EntityFeatures& items);

/// Weight of the text modality in the fused similarity, strictly inside (0, 1).
class FusionWeight {
 public:
  explicit FusionWeight(double w);
  double value() const { return w_; }

 private:
  double w_;
};

/// Cosine similarity; 0 when either vector is all zero.
double cosine(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b);

/// w*cos(text) + (1-w)*cos(visual).
double fused_similarity(const Eigen::Ref<const RowVector>& a_text, const Eigen::Ref<const RowVector>& a_visual,
                        const Eigen::Ref<const RowVector>& b_text, const Eigen::Ref<const RowVector>& b_visual,
                        FusionWeight w);

/// Which modalities feed the similarity. Single-modality variants use that
/// modality's cosine alone.
struct SimilarityConfig {
  FusionWeight weight{0.9};
  bool use_text = true;
  bool use_visual = true;
};

/// Exact top-K most similar entities of one class.
struct NeighborIndex {
  int k = 0;
  std::vector<std::vector<EntityIndex>> neighbors;  // per entity, descending similarity, ties by id
  std::vector<std::vector<double>> scores;

  std::int64_t size() const { return static_cast<std::int64_t>(neighbors.size()); }
};

/// Exact all-pairs scan. Each list holds min(k, n-1) entries, self excluded.
NeighborIndex build_neighbor_index(const EntityFeatures& features, const SimilarityConfig& cfg, int k);

}  // namespace micrec
