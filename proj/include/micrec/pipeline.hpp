#pragma once

#include "micrec/checkpoint.hpp"
#include "micrec/config.hpp"
#include "micrec/encoder.hpp"
#include "micrec/eval.hpp"
#include "micrec/features.hpp"
#include "micrec/graph.hpp"
#include "micrec/trainer.hpp"

#include <functional>
#include <string>
#include <vector>

namespace micrec {

// ---- in-memory layer -------------------------------------------------------

/// One prepared domain: populations after relabeling, the split and (when the
/// model uses them) item features in the relabeled id space.
struct DomainData {
  DomainTag tag = DomainTag::A;
  EntityIndex num_users = 0;
  EntityIndex num_seen_users = 0;
  EntityIndex num_items = 0;
  EntityIndex num_seen_items = 0;
  SplitBundle split;
  EntityFeatures item_features;  // text/visual may have zero columns when unused
};

struct Dataset {
  DomainData a;
  DomainData b;
  OverlapMap overlap;  // all overlapping users, seen or not

  const DomainData& domain(DomainTag t) const { return t == DomainTag::A ? a : b; }
};

struct ModelConfig {
  EncoderConfig enc;
  SimilarityConfig sim;
  LossWeights loss;
  TrainConfig train;
  TemplatePolicy templates;

  static ModelConfig from(const RunConfig& cfg);
};

/// Train-edge graph with templates chosen by the policy.
DomainGraph training_graph(const DomainData& d, const TemplatePolicy& policy);
/// Train plus new edges, carrying the given template sets.
DomainGraph inference_graph(const DomainData& d, const TemplateSets& templates);

/// Overlap pairs whose users are seen in both domains.
OverlapMap seen_overlap(const Dataset& data);

TrainSetup make_train_setup(const Dataset& data, const ModelConfig& cfg);

struct TrainedModel {
  ModelParams params;  // best validation epoch
  TemplateSets templates_a;
  TemplateSets templates_b;
  double alpha = 1.0;  // schedule value at the best epoch
  int best_epoch = -1;
  std::vector<HistoryRow> history;

  const TemplateSets& templates(DomainTag t) const { return t == DomainTag::A ? templates_a : templates_b; }
};

using EpochCallback = std::function<void(const Trainer&, const HistoryRow&)>;

TrainedModel train_model(const Dataset& data, const ModelConfig& cfg, const EpochCallback& on_epoch = {});

/// Inference-mode graph state (train + new edges) and representations.
GraphState inference_state(const DomainData& d, const TemplateSets& templates, const ModelConfig& cfg);
Matrix infer_representations(const GraphState& state, const DomainParams& params, const ModelConfig& cfg,
                             double alpha);

/// Test-protocol metrics for one domain.
std::vector<EvalRow> evaluate_domain(const DomainData& d, const Matrix& r, std::span<const int> ns,
                                     const Slice& slice);

// ---- on-disk layer ---------------------------------------------------------

struct IdMaps {
  std::vector<std::string> user_keys;  // by relabeled id
  std::vector<std::string> item_keys;
};

/// Output of `prepare` as read back from its directory.
struct PreparedDomain {
  SplitManifest split;
  IdMaps ids;
};

struct Prepared {
  PreparedDomain a;
  PreparedDomain b;
  OverlapMap overlap;

  const PreparedDomain& domain(DomainTag t) const { return t == DomainTag::A ? a : b; }
};

/// Table 1 style counts of one domain.
struct DomainStats {
  DomainTag tag = DomainTag::A;
  EntityIndex users = 0, items = 0, seen_users = 0, seen_items = 0;
  std::size_t train = 0, new_edges = 0, val = 0, test = 0, overlap = 0;
};

struct PrepareSummary {
  std::vector<DomainStats> stats;
  std::string directory;
};

/// Reads raw records of both domains and the overlap key file, filters, splits
/// and writes `<out>/{A,B}.{users,items,split}.tsv`, `overlap.tsv`,
/// `stats.tsv` and `prepare.manifest.json`.
///
/// Overlap lines hold either one key (same key in both domains) or
/// `keyA<TAB>keyB`; pairs with a user filtered out in either domain are dropped.
PrepareSummary cmd_prepare(const RunConfig& cfg);

Prepared load_prepared(const std::string& dir);

/// Reads both domains' feature files as the config requires (none when
/// aggregation is off). Missing rows surface as IncompleteFeaturesError.
Dataset load_dataset(const Prepared& prepared, const RunConfig& cfg);

struct TrainSummary {
  TrainedModel model;
  std::string checkpoint_path;
  std::string history_path;
};

/// Trains on `<out>` produced by prepare and writes `model.ckpt`,
/// `history.tsv` and `train.manifest.json` there. With `state_path` set, the
/// full trainer state is written after every epoch; `resume_path` continues
/// from such a file.
TrainSummary cmd_train(const RunConfig& cfg, const std::string& state_path = {},
                       const std::string& resume_path = {});

/// Checkpoint written at the end of training: run config, id maps, templates,
/// populations and best parameters.
Checkpoint make_model_checkpoint(const RunConfig& cfg, const Prepared& prepared, const TrainedModel& model);

/// Resumable trainer state (current and best parameters, Adam moments, RNG,
/// history, early-stopping counters) tagged with the config hash.
Checkpoint make_state_checkpoint(const RunConfig& cfg, const Trainer& trainer);
/// Throws ConfigError when the state was written under a different config.
void restore_state_checkpoint(const Checkpoint& ckpt, const RunConfig& cfg, Trainer& trainer);

/// Rebuilds the run config stored in a model checkpoint.
RunConfig config_from_checkpoint(const Checkpoint& ckpt);

/// JSON manifest with the config hash, seed, full config and SHA-256 of every
/// listed input and output file (given as role, path).
void write_manifest(const std::string& path, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& inputs,
                    const std::vector<std::pair<std::string, std::string>>& outputs);

/// Evaluates a checkpoint on the test protocol of its prepared data. Throws
/// VersionError when populations disagree.
EvalReport cmd_eval(const std::string& checkpoint_path, std::span<const int> ns, std::span<const Slice> slices,
                    const std::string& prepared_dir = {});

struct Recommendation {
  std::string item_key;
  EntityIndex item = 0;
  double score = 0.0;
};

/// Top-n unknown items for a user key. Unknown keys raise ConfigError naming
/// the known keys sharing the longest prefix.
std::vector<Recommendation> cmd_recommend(const std::string& checkpoint_path, DomainTag domain,
                                          const std::string& user_key, int top_n,
                                          const std::string& prepared_dir = {});

/// Known keys sorted by shared prefix length with `key` (longest first), then
/// lexicographically; at most `limit`.
std::vector<std::string> nearest_keys(const std::vector<std::string>& keys, const std::string& key,
                                      std::size_t limit = 5);

}  // namespace micrec
