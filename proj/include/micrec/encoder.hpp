#pragma once

#include "micrec/features.hpp"
#include "micrec/graph.hpp"
#include "micrec/numeric.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace micrec {

/// Two-layer feedforward map d -> d: y = relu(x W1^T + b1) W2^T + b2.
struct Projection {
  Matrix w1, b1, w2, b2;  // biases are 1 x d
};

/// Learnable tensors of one domain. Biases are stored as 1 x d matrices so
/// every tensor can be visited uniformly.
struct DomainParams {
  Matrix template_user;  // |U_tem| x d
  Matrix template_item;  // |I_tem| x d
  Matrix bias_user;      // added to template item embeddings when encoding users
  Matrix bias_item;      // added to template user embeddings when encoding items
  Matrix se_projection;  // d x d
  Projection proj;       // into the shared cross-domain space

  int dim() const { return static_cast<int>(se_projection.rows()); }

  template <typename F>
  void for_each(F&& f) {
    f("template_user", template_user);
    f("template_item", template_item);
    f("bias_user", bias_user);
    f("bias_item", bias_item);
    f("se_projection", se_projection);
    f("proj.w1", proj.w1);
    f("proj.b1", proj.b1);
    f("proj.w2", proj.w2);
    f("proj.b2", proj.b2);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<DomainParams*>(this)->for_each([&](const char* name, Matrix& m) { f(name, std::as_const(m)); });
  }

  DomainParams zeros_like() const;
  double squared_norm() const;
  /// this += scale * other
  void add_scaled(const DomainParams& other, double scale);
};

/// Parameters of both domains; nothing is shared between them.
struct ModelParams {
  DomainParams a, b;

  DomainParams& domain(DomainTag t) { return t == DomainTag::A ? a : b; }
  const DomainParams& domain(DomainTag t) const { return t == DomainTag::A ? a : b; }

  template <typename F>
  void for_each(F&& f) {
    a.for_each([&](const char* name, Matrix& m) { f(std::string("A.") + name, m); });
    b.for_each([&](const char* name, Matrix& m) { f(std::string("B.") + name, m); });
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<ModelParams*>(this)->for_each([&](const std::string& name, Matrix& m) { f(name, std::as_const(m)); });
  }

  ModelParams zeros_like() const { return {a.zeros_like(), b.zeros_like()}; }
  std::size_t size() const;
  std::vector<double> flatten() const;
  /// Inverse of flatten(); shapes come from *this.
  void assign_flat(std::span<const double> values);
  void add_scaled(const ModelParams& other, double scale) {
    a.add_scaled(other.a, scale);
    b.add_scaled(other.b, scale);
  }
};

/// Gaussian template embeddings (std `init_std`), zero biases, identity SE
/// projection, Glorot-uniform projection layers.
DomainParams init_domain_params(EntityIndex num_template_users, EntityIndex num_template_items, int dim,
                                double init_std, std::mt19937_64& rng);

struct EncoderConfig {
  int dim = 64;
  double alpha = 1.0;  // template normalization exponent
  int k = 3;           // neighbors aggregated per entity
  int layers = 3;      // propagation depth
  double dropout = 0.2;
  bool use_mm = true;  // modality-based aggregation on/off
};

/// One interaction state of a domain together with everything the encoder
/// derives from it: the normalized adjacency and the similarity indices.
struct GraphState {
  DomainGraph graph;
  NormalizedAdjacency adjacency;
  NeighborIndex user_neighbors;  // may be empty when aggregation is off
  NeighborIndex item_neighbors;

  /// Builds adjacency and, when `features` is given, the two neighbor indices
  /// (user features derived from this state's edges).
  static GraphState build(DomainGraph graph, const EntityFeatures* item_features, const SimilarityConfig& sim, int k);
};

/// x: template-derived, x_agg: after neighbor aggregation, r: after propagation.
/// Rows are [users..., items...].
struct Representations {
  Matrix x;
  Matrix x_agg;
  Matrix r;
};

/// x_u = (|N_u ∩ I_tem| + 1)^(-alpha) * sum over template neighbors of (e_i + b_user),
/// and symmetrically for items. No template neighbors gives a zero row.
Matrix template_encode(const DomainGraph& graph, const DomainParams& params, double alpha);

/// x_agg_v = x_v + (1/k) * sum of x over v's neighbor list. The divisor is k
/// even when a list is shorter.
Matrix aggregate_modal(const Matrix& x, const NeighborIndex& users, const NeighborIndex& items, int k);

/// Mean of the layer outputs h_0 = x_agg, h_{l+1} = A h_l for l < layers.
Matrix propagate(const Matrix& x_agg, const NormalizedAdjacency& adj, int layers);

enum class EncodeMode { Train, Infer };

/// Forward pass of one domain with the cache needed for backward().
class Encoding {
 public:
  Encoding(const GraphState& state, const DomainParams& params, const EncoderConfig& cfg, EncodeMode mode,
           std::uint64_t dropout_seed);

  const Representations& reps() const { return reps_; }
  const Matrix& r() const { return reps_.r; }
  EntityIndex num_users() const { return state_->graph.num_users(); }
  const GraphState& state() const { return *state_; }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(r).
  void backward(const Matrix& grad_r, DomainParams& grad) const;

 private:
  const GraphState* state_;
  EncoderConfig cfg_;
  Matrix mask_;  // inverted-dropout scale per entry of x; empty when unused
  Representations reps_;
};

/// Convenience wrapper returning only the representations.
Representations encode_domain(const GraphState& state, const DomainParams& params, const EncoderConfig& cfg,
                              EncodeMode mode, std::uint64_t dropout_seed = 0);

}  // namespace micrec
