#include "micrec/config.hpp"

#include "micrec/digest.hpp"
#include "micrec/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>

namespace micrec {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError("config '" + key + "': not a finite number: '" + s + "'");
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& s) {
  Int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("config '" + key + "': not an integer: '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ConfigError("config '" + key + "': not a boolean: '" + s + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define STR_FIELD(name, member)                                                    \
  {                                                                                \
    name, {                                                                        \
      [](RunConfig& c, const std::string& v) { c.member = v; },                    \
          [](const RunConfig& c) { return c.member; }                              \
    }                                                                              \
  }
#define DBL_FIELD(name, member)                                                    \
  {                                                                                \
    name, {                                                                        \
      [](RunConfig& c, const std::string& v) { c.member = parse_double(name, v); }, \
          [](const RunConfig& c) { return fmt_double(c.member); }                  \
    }                                                                              \
  }
#define INT_FIELD(name, member)                                                         \
  {                                                                                     \
    name, {                                                                             \
      [](RunConfig& c, const std::string& v) { c.member = parse_int<int>(name, v); },   \
          [](const RunConfig& c) { return std::to_string(c.member); }                   \
    }                                                                                   \
  }
#define BOOL_FIELD(name, member)                                                     \
  {                                                                                  \
    name, {                                                                          \
      [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); },    \
          [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); } \
    }                                                                                \
  }

// Canonical order of entries().
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      STR_FIELD("data_a", data_a),
      STR_FIELD("data_b", data_b),
      STR_FIELD("overlap", overlap),
      STR_FIELD("feat_a_text", feat_a_text),
      STR_FIELD("feat_a_visual", feat_a_visual),
      STR_FIELD("feat_b_text", feat_b_text),
      STR_FIELD("feat_b_visual", feat_b_visual),
      STR_FIELD("out", out),
      DBL_FIELD("min_rating", min_rating),
      INT_FIELD("min_degree", min_degree),
      DBL_FIELD("unseen_frac", unseen_frac),
      DBL_FIELD("split_train", seen_split.train),
      DBL_FIELD("split_val", seen_split.val),
      DBL_FIELD("split_test", seen_split.test),
      DBL_FIELD("new_frac", new_frac),
      STR_FIELD("templates", templates),
      INT_FIELD("dim", dim),
      INT_FIELD("layers", layers),
      INT_FIELD("k", k),
      DBL_FIELD("w", w),
      DBL_FIELD("dropout", dropout),
      DBL_FIELD("init_std", init_std),
      DBL_FIELD("lambda", lambda),
      DBL_FIELD("beta", beta),
      DBL_FIELD("gamma", gamma),
      {"tau",
       {[](RunConfig& c, const std::string& v) {
          if (v.empty() || v == "preset")
            c.tau.reset();
          else
            c.tau = parse_double("tau", v);
        },
        [](const RunConfig& c) { return c.tau ? fmt_double(*c.tau) : std::string("preset"); }}},
      STR_FIELD("preset", preset),
      BOOL_FIELD("include_positive", include_positive),
      DBL_FIELD("lr", lr),
      INT_FIELD("epochs", epochs),
      INT_FIELD("patience", patience),
      INT_FIELD("batches", batches),
      INT_FIELD("overlap_batch", overlap_batch),
      DBL_FIELD("alpha_start", alpha_start),
      DBL_FIELD("alpha_end", alpha_end),
      INT_FIELD("eval_n", eval_n),
      {"seed",
       {[](RunConfig& c, const std::string& v) { c.seed = parse_int<std::uint64_t>("seed", v); },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      BOOL_FIELD("no_mm", no_mm),
      BOOL_FIELD("no_cd", no_cd),
      BOOL_FIELD("no_txt", no_txt),
      BOOL_FIELD("no_vis", no_vis),
  };
  return table;
}

#undef STR_FIELD
#undef DBL_FIELD
#undef INT_FIELD
#undef BOOL_FIELD

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  std::string k = key;
  for (auto& ch : k)
    if (ch == '-' || ch == '.') ch = '_';
  for (const auto& [name, f] : fields())
    if (name == k) {
      f.set(*this, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(min_degree >= 0, "min_degree must be non-negative");
  require(unseen_frac >= 0.0 && unseen_frac < 1.0, "unseen_frac must lie in [0, 1)");
  require(seen_split.train >= 0 && seen_split.val >= 0 && seen_split.test >= 0 &&
              std::fabs(seen_split.train + seen_split.val + seen_split.test - 1.0) < 1e-9,
          "split_train, split_val and split_test must be non-negative and sum to 1");
  require(new_frac >= 0.0 && new_frac <= 1.0, "new_frac must lie in [0, 1]");
  (void)template_policy();
  require(dim >= 1, "dim must be at least 1");
  require(layers >= 0, "layers must be non-negative");
  require(k >= 1, "k must be at least 1");
  require(w > 0.0 && w < 1.0, "w must lie strictly inside (0, 1)");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(init_std > 0.0, "init_std must be positive");
  require(preset == "default" || preset == "food_kitchen", "preset must be default or food_kitchen");
  require(!(no_txt && no_vis), "no_txt and no_vis together leave no modality; use no_mm instead");
  loss().validate();
  train().validate();
}

double RunConfig::resolved_tau() const {
  if (tau) return *tau;
  return preset == "food_kitchen" ? 0.2 : 0.1;
}

TemplatePolicy RunConfig::template_policy() const {
  if (templates == "all") return TemplatePolicy::all_seen();
  if (templates.rfind("top:", 0) == 0) {
    const auto m = parse_int<EntityIndex>("templates", templates.substr(4));
    if (m < 0) throw ConfigError("templates: m must be non-negative");
    return TemplatePolicy::top_degree(m);
  }
  throw ConfigError("templates must be 'all' or 'top:<m>', got '" + templates + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, f] : fields()) out.emplace_back(name, f.get(*this));
  return out;
}

std::string RunConfig::hash() const {
  std::string text;
  for (const auto& [k, v] : entries())
    if (k != "out") text += k + "=" + v + "\n";
  return sha256_hex(text);
}

EncoderConfig RunConfig::encoder() const {
  EncoderConfig e;
  e.dim = dim;
  e.alpha = alpha_end;
  e.k = k;
  e.layers = layers;
  e.dropout = dropout;
  e.use_mm = !no_mm;
  return e;
}

SimilarityConfig RunConfig::similarity() const {
  SimilarityConfig s;
  s.weight = FusionWeight(w);
  s.use_text = !no_txt;
  s.use_visual = !no_vis;
  return s;
}

LossWeights RunConfig::loss() const {
  LossWeights l;
  l.lambda = lambda;
  l.beta = beta;
  l.gamma = no_cd ? 0.0 : gamma;
  l.tau = resolved_tau();
  l.include_positive_in_denominator = include_positive;
  return l;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.epochs_max = epochs;
  t.patience = patience;
  t.batches_per_epoch = batches;
  t.overlap_batch = overlap_batch;
  t.lr = lr;
  t.alpha_start = alpha_start;
  t.alpha_end = alpha_end;
  t.init_std = init_std;
  t.eval_n = eval_n;
  t.seed = seed;
  return t;
}

void read_config(std::istream& in, const std::string& source_name, RunConfig& cfg) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source_name + ":" + std::to_string(line_no) + ": expected key = value");
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source_name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  read_config(in, path, cfg);
}

}  // namespace micrec
