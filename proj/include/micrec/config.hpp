#pragma once

#include "micrec/encoder.hpp"
#include "micrec/graph.hpp"
#include "micrec/objective.hpp"
#include "micrec/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace micrec {

/// Everything a run depends on. Read from a flat `key = value` file; command
/// line overrides are applied afterwards with the same keys.
struct RunConfig {
  // paths
  std::string data_a, data_b, overlap;
  std::string feat_a_text, feat_a_visual, feat_b_text, feat_b_visual;
  std::string out = "out";

  // data preparation
  double min_rating = 4.0;
  int min_degree = 10;
  double unseen_frac = 0.2;
  SplitFractions seen_split;
  double new_frac = 0.5;
  std::string templates = "all";  // all | top:<m>

  // model
  int dim = 64;
  int layers = 3;
  int k = 3;
  double w = 0.9;
  double dropout = 0.2;
  double init_std = 0.1;

  // objective
  double lambda = 1e-4;
  double beta = 0.01;
  double gamma = 1.0;
  std::optional<double> tau;  // unset: taken from the preset
  std::string preset = "default";  // default | food_kitchen
  bool include_positive = false;

  // optimization
  double lr = 1e-3;
  int epochs = 1000;
  int patience = 50;
  int batches = 100;
  int overlap_batch = 64;
  double alpha_start = 0.5;
  double alpha_end = 1.0;
  int eval_n = 20;
  std::uint64_t seed = 2024;

  // ablations
  bool no_mm = false;
  bool no_cd = false;
  bool no_txt = false;
  bool no_vis = false;

  /// Sets one field from its textual form; throws ConfigError on an unknown key
  /// or an unparsable value.
  void set(const std::string& key, const std::string& value);
  /// Range checks; throws ConfigError.
  void validate() const;

  double resolved_tau() const;
  TemplatePolicy template_policy() const;

  /// Canonical `key=value` lines in a fixed order (the hash input).
  std::vector<std::pair<std::string, std::string>> entries() const;
  /// Hex SHA-256 of the canonical entries other than `out`.
  std::string hash() const;

  EncoderConfig encoder() const;
  SimilarityConfig similarity() const;
  LossWeights loss() const;
  TrainConfig train() const;
};

/// Applies every `key = value` line of a config file; `#` starts a comment.
void read_config(std::istream& in, const std::string& source_name, RunConfig& cfg);
void load_config_file(const std::string& path, RunConfig& cfg);

}  // namespace micrec
