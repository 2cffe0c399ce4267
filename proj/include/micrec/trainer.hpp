#pragma once

#include "micrec/encoder.hpp"
#include "micrec/eval.hpp"
#include "micrec/graph.hpp"
#include "micrec/objective.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace micrec {

struct TrainConfig {
  int epochs_max = 1000;
  int patience = 50;
  int batches_per_epoch = 100;
  int overlap_batch = 64;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double alpha_start = 0.5;
  double alpha_end = 1.0;
  double init_std = 0.1;
  int eval_n = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Linear ramp from alpha_start at epoch 0 to alpha_end at epochs_max - 1.
double alpha_at(int epoch, const TrainConfig& cfg);

/// One epoch of BPR triplets: every training edge once, in shuffled order,
/// each paired with a uniform negative among the seen items the user has not
/// interacted with, then cut into `batches` contiguous batches. Users adjacent
/// to every seen item are skipped with a warning.
std::vector<TripletBatch> sample_triplets(const DomainGraph& train_graph, int batches, std::mt19937_64& rng);

/// SE triplets for the template (user, item) pairs of a BPR batch, each with a
/// uniform template-item negative outside the user's neighborhood.
TripletBatch sample_se_triplets(const DomainGraph& train_graph, std::span<const Triplet> bpr_batch,
                                std::mt19937_64& rng);

/// Up to `size` distinct overlap pairs, uniformly without replacement.
OverlapBatch sample_overlap(const OverlapMap& overlap, int size, std::mt19937_64& rng);

struct TrainDomain {
  GraphState state;           // training edges only
  RankingContext validation;  // relevant = val edges
};

struct TrainSetup {
  TrainDomain a;
  TrainDomain b;
  OverlapMap overlap;  // pairs seen in both domains

  const TrainDomain& domain(DomainTag t) const { return t == DomainTag::A ? a : b; }
};

struct HistoryRow {
  int epoch = 0;
  double loss = 0.0;
  double recall_a = 0.0;  // validation Recall@eval_n, x100
  double recall_b = 0.0;
  double alpha = 0.0;
};

/// `epoch loss recallA recallB alpha`, one line per row, round-trip precision.
void write_history(std::ostream& out, std::span<const HistoryRow> rows);

struct TrainState {
  int epoch = 0;  // next epoch to run
  double best_metric = -std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int stale = 0;
  std::int64_t adam_step = 0;
  ModelParams adam_m;
  ModelParams adam_v;
  ModelParams best_params;
  std::mt19937_64 rng;
  std::vector<HistoryRow> history;
};

/// Joint optimization of both domains with Adam, alpha annealing and early
/// stopping on the mean validation recall.
class Trainer {
 public:
  Trainer(const TrainSetup& setup, const TrainConfig& cfg, const EncoderConfig& enc, const LossWeights& weights,
          bool use_cd = true);

  /// Fresh parameters sized to the setup's template sets.
  static ModelParams initial_params(const TrainSetup& setup, int dim, double init_std, std::mt19937_64& rng);

  /// Trains and validates one epoch; throws DivergenceError on a non-finite loss.
  HistoryRow run_epoch();
  bool done() const;
  /// Runs epochs until done(), then makes the best parameters current.
  void fit(const std::function<void(const Trainer&, const HistoryRow&)>& on_epoch = {});

  /// Validation Recall@eval_n (x100) of the current parameters per domain,
  /// encoded with the alpha of the epoch they come from; negative when a
  /// domain has no validation users.
  std::pair<double, double> validate() const;

  const ModelParams& params() const { return params_; }
  const ModelParams& best_params() const { return state_.best_params; }
  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return cfg_; }

  /// Continue from a saved state.
  void restore(ModelParams params, TrainState state);

 private:
  void adam_step(const ModelParams& grad);

  const TrainSetup* setup_;
  TrainConfig cfg_;
  EncoderConfig enc_;
  LossWeights weights_;
  bool use_cd_;
  ModelParams params_;
  int params_epoch_ = 0;  // epoch whose alpha matches params_
  TrainState state_;
};

}  // namespace micrec
