#pragma once

#include "micrec/encoder.hpp"
#include "micrec/graph.hpp"

#include <span>
#include <utility>
#include <vector>

namespace micrec {

/// (user, interacted item, non-interacted item) in domain-local ids.
struct Triplet {
  EntityIndex user = 0;
  EntityIndex pos = 0;
  EntityIndex neg = 0;
};

using TripletBatch = std::vector<Triplet>;

/// Overlapping users sampled for one contrastive step: (id in A, id in B).
struct OverlapBatch {
  std::vector<std::pair<EntityIndex, EntityIndex>> members;
};

struct LossWeights {
  double lambda = 1e-4;  // L2 on all parameters
  double beta = 0.01;    // SE loss
  double gamma = 1.0;    // contrastive loss
  double tau = 0.2;      // temperature
  // Adds the positive pair to the contrastive denominator (conventional
  // InfoNCE). Off by default: the denominator sums over other users only.
  bool include_positive_in_denominator = false;

  void validate() const;
};

struct DomainLoss {
  double value = 0.0;
  DomainParams grad;
};

struct ModelLoss {
  double value = 0.0;
  ModelParams grad;
};

/// Mean of -ln sigmoid(s(u,pos) - s(u,neg)) over the triplets, with
/// s(u,i) = r_u . r_i, plus lambda * ||params||^2. Throws on an empty batch.
DomainLoss bpr_loss(const Encoding& enc, std::span<const Triplet> batch, const DomainParams& params, double lambda);

/// BPR over template users/items scored as e_u . (W e_i). Triplets use entity
/// ids; every id must be a template. An empty batch yields 0.
DomainLoss se_loss(const DomainParams& params, const DomainGraph& graph, std::span<const Triplet> batch);

/// L1 + L2 over the projected representations of the batch members. For
/// member u the numerator pairs u with itself across domains; the
/// denominator sums over the other members (plus u itself when
/// include_positive_in_denominator). Each term is a mean over the batch.
/// Throws when the batch has fewer than two members.
ModelLoss contrastive_loss(const Encoding& enc_a, const Encoding& enc_b, const OverlapBatch& batch,
                           const ModelParams& params, double tau, bool include_positive_in_denominator = false);

struct JointInputs {
  const Encoding* enc_a = nullptr;
  const Encoding* enc_b = nullptr;
  std::span<const Triplet> bpr_a;
  std::span<const Triplet> bpr_b;
  std::span<const Triplet> se_a;
  std::span<const Triplet> se_b;
  const OverlapBatch* overlap = nullptr;  // null or fewer than 2 members: no contrastive term
};

struct JointLoss {
  double value = 0.0;
  double bpr_a = 0.0, bpr_b = 0.0, se_a = 0.0, se_b = 0.0, cl = 0.0;
  ModelParams grad;
};

/// (BPR_A + BPR_B) + beta (SE_A + SE_B) + gamma CL. A domain with an empty
/// BPR batch contributes nothing. One encoder backward pass per domain.
JointLoss joint_loss(const JointInputs& in, const ModelParams& params, const LossWeights& w);

/// Forward of the projection network, exposed for tests and diagnostics.
Matrix project(const Projection& p, const Matrix& x);

}  // namespace micrec
