#include "micrec/pipeline.hpp"

#include "micrec/digest.hpp"
#include "micrec/errors.hpp"

#include "json.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace micrec {

namespace fs = std::filesystem;

// ---- in-memory layer -------------------------------------------------------

ModelConfig ModelConfig::from(const RunConfig& cfg) {
  cfg.validate();
  return {cfg.encoder(), cfg.similarity(), cfg.loss(), cfg.train(), cfg.template_policy()};
}

DomainGraph training_graph(const DomainData& d, const TemplatePolicy& policy) {
  DomainGraph g(d.tag, d.num_users, d.num_seen_users, d.num_items, d.num_seen_items, d.split.train);
  auto t = select_templates(g, policy);
  g.set_templates(std::move(t.users), std::move(t.items));
  return g;
}

DomainGraph inference_graph(const DomainData& d, const TemplateSets& templates) {
  std::vector<Edge> edges = d.split.train;
  edges.insert(edges.end(), d.split.new_edges.begin(), d.split.new_edges.end());
  std::sort(edges.begin(), edges.end());
  DomainGraph g(d.tag, d.num_users, d.num_seen_users, d.num_items, d.num_seen_items, edges);
  g.set_templates(templates.users, templates.items);
  return g;
}

OverlapMap seen_overlap(const Dataset& data) {
  OverlapMap out;
  for (const auto& [ua, ub] : data.overlap.pairs)
    if (ua < data.a.num_seen_users && ub < data.b.num_seen_users) out.pairs.emplace_back(ua, ub);
  return out;
}

namespace {

GraphState build_state(DomainGraph g, const DomainData& d, const ModelConfig& cfg) {
  if (!cfg.enc.use_mm) return GraphState::build(std::move(g), nullptr, cfg.sim, cfg.enc.k);
  if (d.item_features.text.rows() != d.num_items || d.item_features.visual.rows() != d.num_items)
    throw DataError(std::string("domain ") + to_string(d.tag) + ": item features do not cover " +
                    std::to_string(d.num_items) + " items");
  return GraphState::build(std::move(g), &d.item_features, cfg.sim, cfg.enc.k);
}

TemplateSets templates_of(const DomainGraph& g) { return {g.template_users(), g.template_items()}; }

}  // namespace

TrainSetup make_train_setup(const Dataset& data, const ModelConfig& cfg) {
  TrainSetup s;
  for (const DomainTag t : {DomainTag::A, DomainTag::B}) {
    const auto& d = data.domain(t);
    auto& td = t == DomainTag::A ? s.a : s.b;
    td.state = build_state(training_graph(d, cfg.templates), d, cfg);
    td.validation = make_validation_context(d.num_users, d.num_items, d.split);
  }
  s.overlap = seen_overlap(data);
  return s;
}

TrainedModel train_model(const Dataset& data, const ModelConfig& cfg, const EpochCallback& on_epoch) {
  const auto setup = make_train_setup(data, cfg);
  Trainer trainer(setup, cfg.train, cfg.enc, cfg.loss, cfg.loss.gamma != 0.0);
  trainer.fit(on_epoch);
  TrainedModel m;
  m.params = trainer.params();
  m.templates_a = templates_of(setup.a.state.graph);
  m.templates_b = templates_of(setup.b.state.graph);
  m.best_epoch = trainer.state().best_epoch;
  m.alpha = alpha_at(std::max(m.best_epoch, 0), cfg.train);
  m.history = trainer.state().history;
  return m;
}

GraphState inference_state(const DomainData& d, const TemplateSets& templates, const ModelConfig& cfg) {
  return build_state(inference_graph(d, templates), d, cfg);
}

Matrix infer_representations(const GraphState& state, const DomainParams& params, const ModelConfig& cfg,
                             double alpha) {
  EncoderConfig enc = cfg.enc;
  enc.alpha = alpha;
  return encode_domain(state, params, enc, EncodeMode::Infer).r;
}

std::vector<EvalRow> evaluate_domain(const DomainData& d, const Matrix& r, std::span<const int> ns,
                                     const Slice& slice) {
  const auto ctx = make_test_context(d.num_users, d.num_items, d.split);
  const DomainGraph train(d.tag, d.num_users, d.num_seen_users, d.num_items, d.num_seen_items, d.split.train);
  return evaluate(r, ctx, train, ns, slice);
}

// ---- on-disk helpers -------------------------------------------------------

namespace {

std::string domain_file(const std::string& dir, DomainTag t, const char* what) {
  return (fs::path(dir) / (std::string(to_string(t)) + "." + what + ".tsv")).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

void write_keys(const std::string& path, const std::vector<std::string>& keys) {
  auto out = open_out(path);
  for (std::size_t id = 0; id < keys.size(); ++id) out << id << '\t' << keys[id] << '\n';
}

std::vector<std::string> read_keys(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path + " (run prepare first)");
  std::vector<std::string> keys;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path, line_no, "expected id<TAB>key");
    if (line.substr(0, tab) != std::to_string(keys.size()))
      throw ParseError(path, line_no, "ids must be contiguous from 0");
    keys.push_back(line.substr(tab + 1));
  }
  return keys;
}

std::vector<std::pair<std::string, std::string>> read_overlap_keys(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open overlap file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      out.emplace_back(line, line);
    } else {
      if (line.find('\t', tab + 1) != std::string::npos)
        throw ParseError(path, line_no, "expected key or keyA<TAB>keyB");
      out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
  }
  return out;
}

std::vector<std::string> relabel_keys(const std::vector<std::string>& keys, const std::vector<EntityIndex>& perm) {
  std::vector<std::string> out(keys.size());
  for (std::size_t old = 0; old < keys.size(); ++old) out[static_cast<std::size_t>(perm[old])] = keys[old];
  return out;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("no ") + what + " given");
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " '" + path + "' does not exist");
}

void write_stats(const std::string& path, const std::vector<DomainStats>& stats) {
  auto out = open_out(path);
  out << "domain\tusers\titems\tseen_users\tseen_items\ttrain\tnew\tval\ttest\toverlap\n";
  for (const auto& s : stats)
    out << to_string(s.tag) << '\t' << s.users << '\t' << s.items << '\t' << s.seen_users << '\t' << s.seen_items
        << '\t' << s.train << '\t' << s.new_edges << '\t' << s.val << '\t' << s.test << '\t' << s.overlap << '\n';
}

}  // namespace

void write_manifest(const std::string& path, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& inputs,
                    const std::vector<std::pair<std::string, std::string>>& outputs) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["config_hash"] = cfg.hash();
  j["seed"] = cfg.seed;
  nlohmann::ordered_json conf = nlohmann::ordered_json::object();
  for (const auto& [k, v] : cfg.entries())
    if (k != "out") conf[k] = v;
  j["config"] = conf;
  auto files = [](const std::vector<std::pair<std::string, std::string>>& list) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& [role, p] : list) {
      nlohmann::ordered_json e;
      e["role"] = role;
      e["path"] = fs::path(p).filename().string();
      e["sha256"] = sha256_file(p);
      arr.push_back(e);
    }
    return arr;
  };
  j["inputs"] = files(inputs);
  j["outputs"] = files(outputs);
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

PrepareSummary cmd_prepare(const RunConfig& cfg) {
  cfg.validate();
  require_file(cfg.data_a, "raw data file for domain A");
  require_file(cfg.data_b, "raw data file for domain B");
  require_file(cfg.overlap, "overlap file");
  const auto overlap_keys = read_overlap_keys(cfg.overlap);

  struct Prep {
    IngestResult ingest;
    SplitResult split;
    std::vector<std::string> user_keys, item_keys;
  };
  std::vector<Prep> preps;
  for (const DomainTag t : {DomainTag::A, DomainTag::B}) {
    const std::string& path = t == DomainTag::A ? cfg.data_a : cfg.data_b;
    const auto records = read_records_file(path);
    Prep p;
    try {
      p.ingest = ingest(records, cfg.min_rating, cfg.min_degree, t);
    } catch (const EmptyDomainError& e) {
      throw EmptyDomainError(path + ": " + e.what() + " (" + std::to_string(records.size()) +
                             " records read; min_rating " + std::to_string(cfg.min_rating) + ", min_degree " +
                             std::to_string(cfg.min_degree) + ")");
    }
    SplitConfig sc;
    sc.unseen_frac = cfg.unseen_frac;
    sc.seen_split = cfg.seen_split;
    sc.new_frac_of_unseen = cfg.new_frac;
    sc.seed = cfg.seed + (t == DomainTag::A ? 0 : 1);
    p.split = make_inductive_split(p.ingest.graph, sc);
    p.user_keys = relabel_keys(p.ingest.user_keys, p.split.user_perm);
    p.item_keys = relabel_keys(p.ingest.item_keys, p.split.item_perm);
    preps.push_back(std::move(p));
  }

  OverlapMap overlap;
  {
    std::vector<char> used_a(preps[0].user_keys.size(), 0), used_b(preps[1].user_keys.size(), 0);
    for (const auto& [ka, kb] : overlap_keys) {
      const auto ia = preps[0].ingest.user_ids.find(ka);
      const auto ib = preps[1].ingest.user_ids.find(kb);
      if (ia == preps[0].ingest.user_ids.end() || ib == preps[1].ingest.user_ids.end()) continue;
      const EntityIndex a = preps[0].split.user_perm[static_cast<std::size_t>(ia->second)];
      const EntityIndex b = preps[1].split.user_perm[static_cast<std::size_t>(ib->second)];
      if (used_a[a] || used_b[b])
        throw DataError(cfg.overlap + ": user '" + (used_a[a] ? ka : kb) + "' is listed more than once");
      used_a[a] = used_b[b] = 1;
      overlap.pairs.emplace_back(a, b);
    }
    std::sort(overlap.pairs.begin(), overlap.pairs.end());
  }

  fs::create_directories(cfg.out);
  PrepareSummary summary;
  summary.directory = cfg.out;
  std::vector<std::pair<std::string, std::string>> outputs;
  for (const DomainTag t : {DomainTag::A, DomainTag::B}) {
    const auto& p = preps[t == DomainTag::A ? 0 : 1];
    const auto& g = p.split.graph;
    const auto users_path = domain_file(cfg.out, t, "users");
    const auto items_path = domain_file(cfg.out, t, "items");
    const auto split_path = domain_file(cfg.out, t, "split");
    write_keys(users_path, p.user_keys);
    write_keys(items_path, p.item_keys);
    SplitManifest m;
    m.tag = t;
    m.seed = cfg.seed + (t == DomainTag::A ? 0 : 1);
    m.num_users = g.num_users();
    m.num_seen_users = g.num_seen_users();
    m.num_items = g.num_items();
    m.num_seen_items = g.num_seen_items();
    m.bundle = p.split.bundle;
    {
      auto out = open_out(split_path);
      write_split_manifest(out, m);
    }
    outputs.emplace_back(std::string(to_string(t)) + ".users", users_path);
    outputs.emplace_back(std::string(to_string(t)) + ".items", items_path);
    outputs.emplace_back(std::string(to_string(t)) + ".split", split_path);

    DomainStats s;
    s.tag = t;
    s.users = g.num_users();
    s.items = g.num_items();
    s.seen_users = g.num_seen_users();
    s.seen_items = g.num_seen_items();
    s.train = m.bundle.train.size();
    s.new_edges = m.bundle.new_edges.size();
    s.val = m.bundle.val.size();
    s.test = m.bundle.test.size();
    s.overlap = overlap.pairs.size();
    summary.stats.push_back(s);
  }
  const auto overlap_path = (fs::path(cfg.out) / "overlap.tsv").string();
  {
    auto out = open_out(overlap_path);
    for (const auto& [a, b] : overlap.pairs) out << a << '\t' << b << '\n';
  }
  const auto stats_path = (fs::path(cfg.out) / "stats.tsv").string();
  write_stats(stats_path, summary.stats);
  outputs.emplace_back("overlap", overlap_path);
  outputs.emplace_back("stats", stats_path);
  write_manifest((fs::path(cfg.out) / "prepare.manifest.json").string(), "prepare", cfg,
                 {{"data_a", cfg.data_a}, {"data_b", cfg.data_b}, {"overlap", cfg.overlap}}, outputs);
  return summary;
}

Prepared load_prepared(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("prepared data directory '" + dir + "' does not exist");
  Prepared p;
  for (const DomainTag t : {DomainTag::A, DomainTag::B}) {
    auto& d = t == DomainTag::A ? p.a : p.b;
    const auto split_path = domain_file(dir, t, "split");
    std::ifstream in(split_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + split_path + " (run prepare first)");
    d.split = read_split_manifest(in, split_path);
    if (d.split.tag != t) throw DataError(split_path + ": manifest is for domain " + to_string(d.split.tag));
    d.ids.user_keys = read_keys(domain_file(dir, t, "users"));
    d.ids.item_keys = read_keys(domain_file(dir, t, "items"));
    if (static_cast<EntityIndex>(d.ids.user_keys.size()) != d.split.num_users ||
        static_cast<EntityIndex>(d.ids.item_keys.size()) != d.split.num_items)
      throw DataError(dir + ": id maps of domain " + to_string(t) + " disagree with the split manifest");
  }
  const auto overlap_path = (fs::path(dir) / "overlap.tsv").string();
  std::ifstream in(overlap_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + overlap_path + " (run prepare first)");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long a = -1, b = -1;
    if (!(ls >> a >> b) || a < 0 || b < 0 || a >= p.a.split.num_users || b >= p.b.split.num_users)
      throw ParseError(overlap_path, line_no, "expected two in-range user ids");
    p.overlap.pairs.emplace_back(static_cast<EntityIndex>(a), static_cast<EntityIndex>(b));
  }
  p.overlap.validate();
  return p;
}

Dataset load_dataset(const Prepared& prepared, const RunConfig& cfg) {
  Dataset data;
  data.overlap = prepared.overlap;
  for (const DomainTag t : {DomainTag::A, DomainTag::B}) {
    const auto& src = prepared.domain(t);
    auto& d = t == DomainTag::A ? data.a : data.b;
    d.tag = t;
    d.num_users = src.split.num_users;
    d.num_seen_users = src.split.num_seen_users;
    d.num_items = src.split.num_items;
    d.num_seen_items = src.split.num_seen_items;
    d.split = src.split.bundle;
    d.item_features.text = Matrix(d.num_items, 0);
    d.item_features.visual = Matrix(d.num_items, 0);
    if (cfg.no_mm) continue;
    const bool a = t == DomainTag::A;
    if (!cfg.no_txt) {
      const auto& path = a ? cfg.feat_a_text : cfg.feat_b_text;
      if (path.empty()) throw ConfigError(std::string("no text feature file for domain ") + to_string(t));
      d.item_features.text = load_features(path, d.num_items).rows;
    }
    if (!cfg.no_vis) {
      const auto& path = a ? cfg.feat_a_visual : cfg.feat_b_visual;
      if (path.empty()) throw ConfigError(std::string("no visual feature file for domain ") + to_string(t));
      d.item_features.visual = load_features(path, d.num_items).rows;
    }
  }
  return data;
}

// ---- checkpoints -----------------------------------------------------------

namespace {

std::vector<std::string> ids_to_strings(const std::vector<EntityIndex>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (auto v : ids) out.push_back(std::to_string(v));
  return out;
}

std::vector<EntityIndex> strings_to_ids(const std::vector<std::string>& s, const std::string& what) {
  std::vector<EntityIndex> out;
  out.reserve(s.size());
  for (const auto& v : s) {
    try {
      std::size_t used = 0;
      const long long x = std::stoll(v, &used);
      if (used != v.size() || x < 0) throw std::invalid_argument(v);
      out.push_back(static_cast<EntityIndex>(x));
    } catch (const std::exception&) {
      throw VersionError("checkpoint list '" + what + "' holds a bad id '" + v + "'");
    }
  }
  return out;
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void put_run_config(Checkpoint& ckpt, const RunConfig& cfg) {
  for (const auto& [k, v] : cfg.entries())
    if (k != "out") ckpt.set("run." + k, v);
  ckpt.set("run_hash", cfg.hash());
}

std::string history_line(const HistoryRow& r) {
  std::ostringstream os;
  const HistoryRow rows[] = {r};
  write_history(os, rows);
  auto s = os.str();
  if (!s.empty() && s.back() == '\n') s.pop_back();
  return s;
}

HistoryRow parse_history_line(const std::string& line) {
  std::istringstream is(line);
  HistoryRow r;
  if (!(is >> r.epoch >> r.loss >> r.recall_a >> r.recall_b >> r.alpha))
    throw VersionError("bad history entry '" + line + "' in checkpoint");
  return r;
}

}  // namespace

RunConfig config_from_checkpoint(const Checkpoint& ckpt) {
  RunConfig cfg;
  for (const auto& [k, v] : ckpt.config)
    if (k.rfind("run.", 0) == 0) cfg.set(k.substr(4), v);
  return cfg;
}

Checkpoint make_model_checkpoint(const RunConfig& cfg, const Prepared& prepared, const TrainedModel& model) {
  Checkpoint ckpt;
  put_run_config(ckpt, cfg);
  ckpt.set("model.alpha", fmt17(model.alpha));
  ckpt.set("model.best_epoch", std::to_string(model.best_epoch));
  ckpt.set("model.dim", std::to_string(model.params.a.dim()));
  for (const DomainTag t : {DomainTag::A, DomainTag::B}) {
    const std::string p = to_string(t);
    const auto& s = prepared.domain(t).split;
    ckpt.set(p + ".num_users", std::to_string(s.num_users));
    ckpt.set(p + ".num_seen_users", std::to_string(s.num_seen_users));
    ckpt.set(p + ".num_items", std::to_string(s.num_items));
    ckpt.set(p + ".num_seen_items", std::to_string(s.num_seen_items));
  }
  for (const DomainTag t : {DomainTag::A, DomainTag::B}) {
    const std::string p = to_string(t);
    ckpt.put_list(p + ".user_keys", prepared.domain(t).ids.user_keys);
    ckpt.put_list(p + ".item_keys", prepared.domain(t).ids.item_keys);
    ckpt.put_list(p + ".template_users", ids_to_strings(model.templates(t).users));
    ckpt.put_list(p + ".template_items", ids_to_strings(model.templates(t).items));
  }
  ckpt.put_params("", model.params);
  return ckpt;
}

Checkpoint make_state_checkpoint(const RunConfig& cfg, const Trainer& trainer) {
  Checkpoint ckpt;
  put_run_config(ckpt, cfg);
  const auto& st = trainer.state();
  ckpt.set("state.epoch", std::to_string(st.epoch));
  ckpt.set("state.best_metric", fmt17(st.best_metric));
  ckpt.set("state.best_epoch", std::to_string(st.best_epoch));
  ckpt.set("state.stale", std::to_string(st.stale));
  ckpt.set("state.adam_step", std::to_string(st.adam_step));
  std::ostringstream rng;
  rng << st.rng;
  ckpt.set("state.rng", rng.str());
  std::vector<std::string> hist;
  for (const auto& r : st.history) hist.push_back(history_line(r));
  ckpt.put_list("history", std::move(hist));
  ckpt.put_params("current.", trainer.params());
  ckpt.put_params("best.", st.best_params);
  ckpt.put_params("adam_m.", st.adam_m);
  ckpt.put_params("adam_v.", st.adam_v);
  return ckpt;
}

void restore_state_checkpoint(const Checkpoint& ckpt, const RunConfig& cfg, Trainer& trainer) {
  if (ckpt.get("run_hash") != cfg.hash())
    throw ConfigError("trainer state was written under a different configuration");
  TrainState st;
  try {
    st.epoch = std::stoi(ckpt.get("state.epoch"));
    st.best_metric = std::stod(ckpt.get("state.best_metric"));
    st.best_epoch = std::stoi(ckpt.get("state.best_epoch"));
    st.stale = std::stoi(ckpt.get("state.stale"));
    st.adam_step = std::stoll(ckpt.get("state.adam_step"));
  } catch (const std::logic_error&) {
    throw VersionError("trainer state holds malformed counters");
  }
  std::istringstream rng(ckpt.get("state.rng"));
  rng >> st.rng;
  if (!rng) throw VersionError("trainer state holds a malformed RNG state");
  for (const auto& line : ckpt.list("history")) st.history.push_back(parse_history_line(line));
  auto current = ckpt.params("current.");
  st.best_params = ckpt.params("best.");
  st.adam_m = ckpt.params("adam_m.");
  st.adam_v = ckpt.params("adam_v.");
  const auto& ref = trainer.params();
  bool same = true;
  ModelParams* parts[] = {&current, &st.best_params, &st.adam_m, &st.adam_v};
  for (ModelParams* p : parts) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> a, b;
    p->for_each([&](const std::string&, const Matrix& m) { a.emplace_back(m.rows(), m.cols()); });
    ref.for_each([&](const std::string&, const Matrix& m) { b.emplace_back(m.rows(), m.cols()); });
    same = same && a == b;
  }
  if (!same) throw VersionError("trainer state tensors do not match the model shapes");
  trainer.restore(std::move(current), std::move(st));
}

// ---- commands --------------------------------------------------------------

TrainSummary cmd_train(const RunConfig& cfg, const std::string& state_path, const std::string& resume_path) {
  const auto mc = ModelConfig::from(cfg);
  const auto prepared = load_prepared(cfg.out);
  const auto data = load_dataset(prepared, cfg);
  const auto setup = make_train_setup(data, mc);
  Trainer trainer(setup, mc.train, mc.enc, mc.loss, mc.loss.gamma != 0.0);
  if (!resume_path.empty()) restore_state_checkpoint(load_checkpoint(resume_path), cfg, trainer);

  trainer.fit([&](const Trainer& t, const HistoryRow& row) {
    spdlog::info("epoch {} loss {:.6f} recall@{} A {:.4f} B {:.4f} alpha {:.4f}", row.epoch, row.loss,
                 mc.train.eval_n, row.recall_a, row.recall_b, row.alpha);
    if (!state_path.empty()) save_checkpoint(state_path, make_state_checkpoint(cfg, t));
  });

  TrainSummary out;
  out.model.params = trainer.params();
  out.model.templates_a = {setup.a.state.graph.template_users(), setup.a.state.graph.template_items()};
  out.model.templates_b = {setup.b.state.graph.template_users(), setup.b.state.graph.template_items()};
  out.model.best_epoch = trainer.state().best_epoch;
  out.model.alpha = alpha_at(std::max(out.model.best_epoch, 0), mc.train);
  out.model.history = trainer.state().history;

  out.checkpoint_path = (fs::path(cfg.out) / "model.ckpt").string();
  out.history_path = (fs::path(cfg.out) / "history.tsv").string();
  save_checkpoint(out.checkpoint_path, make_model_checkpoint(cfg, prepared, out.model));
  {
    auto h = open_out(out.history_path);
    write_history(h, out.model.history);
  }
  std::vector<std::pair<std::string, std::string>> inputs;
  for (const DomainTag t : {DomainTag::A, DomainTag::B})
    inputs.emplace_back(std::string(to_string(t)) + ".split", domain_file(cfg.out, t, "split"));
  inputs.emplace_back("overlap", (fs::path(cfg.out) / "overlap.tsv").string());
  if (!cfg.no_mm) {
    if (!cfg.no_txt) {
      inputs.emplace_back("feat_a_text", cfg.feat_a_text);
      inputs.emplace_back("feat_b_text", cfg.feat_b_text);
    }
    if (!cfg.no_vis) {
      inputs.emplace_back("feat_a_visual", cfg.feat_a_visual);
      inputs.emplace_back("feat_b_visual", cfg.feat_b_visual);
    }
  }
  write_manifest((fs::path(cfg.out) / "train.manifest.json").string(), "train", cfg, inputs,
                 {{"model", out.checkpoint_path}, {"history", out.history_path}});
  return out;
}

namespace {

struct LoadedModel {
  RunConfig cfg;
  ModelConfig mc;
  Prepared prepared;
  Dataset data;
  ModelParams params;
  TemplateSets templates[2];
  double alpha = 1.0;
};

LoadedModel load_model(const std::string& checkpoint_path, const std::string& prepared_dir) {
  const auto ckpt = load_checkpoint(checkpoint_path);
  LoadedModel m;
  try {
    m.cfg = config_from_checkpoint(ckpt);
  } catch (const ConfigError& e) {
    throw VersionError(checkpoint_path + ": " + e.what());
  }
  m.mc = ModelConfig::from(m.cfg);
  const std::string dir =
      prepared_dir.empty() ? fs::path(checkpoint_path).parent_path().string() : prepared_dir;
  m.prepared = load_prepared(dir.empty() ? "." : dir);
  for (const DomainTag t : {DomainTag::A, DomainTag::B}) {
    const std::string p = to_string(t);
    const auto& s = m.prepared.domain(t).split;
    const std::pair<const char*, EntityIndex> counts[] = {{".num_users", s.num_users},
                                                          {".num_seen_users", s.num_seen_users},
                                                          {".num_items", s.num_items},
                                                          {".num_seen_items", s.num_seen_items}};
    for (const auto& [key, have] : counts)
      if (ckpt.get(p + key) != std::to_string(have))
        throw VersionError(checkpoint_path + ": population mismatch in domain " + p + " (" + p + key +
                           " is " + ckpt.get(p + key) + " in the checkpoint, " + std::to_string(have) +
                           " in " + dir + ")");
    if (ckpt.list(p + ".user_keys") != m.prepared.domain(t).ids.user_keys ||
        ckpt.list(p + ".item_keys") != m.prepared.domain(t).ids.item_keys)
      throw VersionError(checkpoint_path + ": id maps of domain " + p + " differ from " + dir);
    auto& tpl = m.templates[t == DomainTag::A ? 0 : 1];
    tpl.users = strings_to_ids(ckpt.list(p + ".template_users"), p + ".template_users");
    tpl.items = strings_to_ids(ckpt.list(p + ".template_items"), p + ".template_items");
  }
  m.params = ckpt.params("");
  try {
    m.alpha = std::stod(ckpt.get("model.alpha"));
  } catch (const std::logic_error&) {
    throw VersionError(checkpoint_path + ": malformed model.alpha");
  }
  m.data = load_dataset(m.prepared, m.cfg);
  return m;
}

}  // namespace

EvalReport cmd_eval(const std::string& checkpoint_path, std::span<const int> ns, std::span<const Slice> slices,
                    const std::string& prepared_dir) {
  for (int n : ns)
    if (n < 1) throw ConfigError("N must be at least 1");
  const auto m = load_model(checkpoint_path, prepared_dir);
  EvalReport report;
  for (const DomainTag t : {DomainTag::A, DomainTag::B}) {
    const auto& d = m.data.domain(t);
    const auto state = inference_state(d, m.templates[t == DomainTag::A ? 0 : 1], m.mc);
    const auto r = infer_representations(state, m.params.domain(t), m.mc, m.alpha);
    for (const auto& slice : slices) {
      auto rows = evaluate_domain(d, r, ns, slice);
      report.rows.insert(report.rows.end(), rows.begin(), rows.end());
    }
  }
  return report;
}

std::vector<std::string> nearest_keys(const std::vector<std::string>& keys, const std::string& key,
                                      std::size_t limit) {
  std::vector<std::pair<std::size_t, const std::string*>> scored;
  scored.reserve(keys.size());
  for (const auto& k : keys) {
    std::size_t p = 0;
    while (p < k.size() && p < key.size() && k[p] == key[p]) ++p;
    scored.emplace_back(p, &k);
  }
  const std::size_t keep = std::min(limit, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return *a.second < *b.second;
                    });
  std::vector<std::string> out;
  for (std::size_t k = 0; k < keep; ++k) out.push_back(*scored[k].second);
  return out;
}

std::vector<Recommendation> cmd_recommend(const std::string& checkpoint_path, DomainTag domain,
                                          const std::string& user_key, int top_n, const std::string& prepared_dir) {
  if (top_n < 1) throw ConfigError("top_n must be at least 1");
  const auto m = load_model(checkpoint_path, prepared_dir);
  const auto& ids = m.prepared.domain(domain).ids;
  const auto it = std::find(ids.user_keys.begin(), ids.user_keys.end(), user_key);
  if (it == ids.user_keys.end()) {
    std::string msg = "unknown user key '" + user_key + "' in domain " + to_string(domain);
    const auto near = nearest_keys(ids.user_keys, user_key);
    if (!near.empty()) {
      msg += "; nearest known keys:";
      for (const auto& k : near) msg += " " + k;
    }
    throw ConfigError(msg);
  }
  const auto user = static_cast<EntityIndex>(it - ids.user_keys.begin());
  const auto& d = m.data.domain(domain);
  const auto state = inference_state(d, m.templates[domain == DomainTag::A ? 0 : 1], m.mc);
  if (state.graph.items_of(user).empty())
    spdlog::warn("user '{}' has no known interactions; all scores tie", user_key);
  const auto r = infer_representations(state, m.params.domain(domain), m.mc, m.alpha);
  const auto ctx = make_test_context(d.num_users, d.num_items, d.split);
  std::vector<Recommendation> out;
  for (EntityIndex i : top_items(r, user, ctx, static_cast<std::size_t>(top_n)))
    out.push_back({ids.item_keys[static_cast<std::size_t>(i)], i, r.row(user).dot(r.row(d.num_users + i))});
  return out;
}

}  // namespace micrec
