#include "micrec/trainer.hpp"

#include "micrec/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

namespace micrec {

void TrainConfig::validate() const {
  if (epochs_max < 1) throw ConfigError("epochs_max must be at least 1");
  if (patience < 0) throw ConfigError("patience must be non-negative");
  if (batches_per_epoch < 1) throw ConfigError("batches_per_epoch must be at least 1");
  if (overlap_batch < 0) throw ConfigError("overlap_batch must be non-negative");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (!(alpha_start >= 0.5 && alpha_end <= 1.0 && alpha_start <= alpha_end))
    throw ConfigError("alpha schedule must satisfy 0.5 <= alpha_start <= alpha_end <= 1");
  if (eval_n < 1) throw ConfigError("eval_n must be at least 1");
}

double alpha_at(int epoch, const TrainConfig& cfg) {
  if (cfg.epochs_max <= 1) return cfg.alpha_start;
  const double t = std::clamp(static_cast<double>(epoch) / static_cast<double>(cfg.epochs_max - 1), 0.0, 1.0);
  return cfg.alpha_start + (cfg.alpha_end - cfg.alpha_start) * t;
}

std::vector<TripletBatch> sample_triplets(const DomainGraph& g, int batches, std::mt19937_64& rng) {
  if (batches < 1) throw std::invalid_argument("sample_triplets: batches must be at least 1");
  auto positives = g.edges();
  if (positives.empty()) throw DataError(std::string("domain ") + to_string(g.tag()) + ": no training edges");
  std::shuffle(positives.begin(), positives.end(), rng);

  const EntityIndex num_candidates = g.num_seen_items();
  std::uniform_int_distribution<EntityIndex> pick(0, std::max<EntityIndex>(num_candidates - 1, 0));
  TripletBatch all;
  all.reserve(positives.size());
  std::vector<char> warned;
  for (const auto& [u, i] : positives) {
    std::size_t seen_neighbors = 0;
    for (EntityIndex j : g.items_of(u))
      if (g.is_seen_item(j)) ++seen_neighbors;
    if (seen_neighbors >= static_cast<std::size_t>(num_candidates)) {
      if (warned.empty()) warned.resize(static_cast<std::size_t>(g.num_users()), 0);
      if (!warned[u]) {
        spdlog::warn("domain {}: user {} interacts with every seen item; no negative exists, skipping",
                     to_string(g.tag()), u);
        warned[u] = 1;
      }
      continue;
    }
    EntityIndex neg = pick(rng);
    while (g.has_edge(u, neg)) neg = pick(rng);
    all.push_back({u, i, neg});
  }

  std::vector<TripletBatch> out(static_cast<std::size_t>(batches));
  const std::size_t n = all.size();
  for (int b = 0; b < batches; ++b) {
    const std::size_t begin = n * static_cast<std::size_t>(b) / static_cast<std::size_t>(batches);
    const std::size_t end = n * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(batches);
    out[static_cast<std::size_t>(b)].assign(all.begin() + static_cast<std::ptrdiff_t>(begin),
                                            all.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

TripletBatch sample_se_triplets(const DomainGraph& g, std::span<const Triplet> bpr_batch, std::mt19937_64& rng) {
  const auto& templates = g.template_items();
  TripletBatch out;
  if (templates.empty()) return out;
  std::uniform_int_distribution<std::size_t> pick(0, templates.size() - 1);
  for (const auto& t : bpr_batch) {
    if (g.template_user_slot(t.user) < 0 || g.template_item_slot(t.pos) < 0) continue;
    std::size_t template_neighbors = 0;
    for (EntityIndex j : g.items_of(t.user))
      if (g.template_item_slot(j) >= 0) ++template_neighbors;
    if (template_neighbors >= templates.size()) continue;
    EntityIndex neg = templates[pick(rng)];
    while (g.has_edge(t.user, neg)) neg = templates[pick(rng)];
    out.push_back({t.user, t.pos, neg});
  }
  return out;
}

OverlapBatch sample_overlap(const OverlapMap& overlap, int size, std::mt19937_64& rng) {
  OverlapBatch batch;
  const std::size_t n = overlap.pairs.size();
  const std::size_t m = std::min(n, static_cast<std::size_t>(std::max(size, 0)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates.
  for (std::size_t k = 0; k < m; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n - 1);
    std::swap(idx[k], idx[pick(rng)]);
    batch.members.push_back(overlap.pairs[idx[k]]);
  }
  return batch;
}

void write_history(std::ostream& out, std::span<const HistoryRow> rows) {
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d %.17g %.17g %.17g %.17g\n", r.epoch, r.loss, r.recall_a, r.recall_b, r.alpha);
    out << buf;
  }
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const TrainSetup& setup, const TrainConfig& cfg, const EncoderConfig& enc, const LossWeights& weights,
                 bool use_cd)
    : setup_(&setup), cfg_(cfg), enc_(enc), weights_(weights), use_cd_(use_cd) {
  cfg_.validate();
  weights_.validate();
  setup.overlap.validate();
  state_.rng.seed(cfg.seed);
  params_ = initial_params(setup, enc.dim, cfg.init_std, state_.rng);
  state_.adam_m = params_.zeros_like();
  state_.adam_v = params_.zeros_like();
  state_.best_params = params_;
}

ModelParams Trainer::initial_params(const TrainSetup& setup, int dim, double init_std, std::mt19937_64& rng) {
  ModelParams p;
  const auto& ga = setup.a.state.graph;
  const auto& gb = setup.b.state.graph;
  p.a = init_domain_params(static_cast<EntityIndex>(ga.template_users().size()),
                           static_cast<EntityIndex>(ga.template_items().size()), dim, init_std, rng);
  p.b = init_domain_params(static_cast<EntityIndex>(gb.template_users().size()),
                           static_cast<EntityIndex>(gb.template_items().size()), dim, init_std, rng);
  return p;
}

void Trainer::adam_step(const ModelParams& grad) {
  ++state_.adam_step;
  const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.adam_step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.adam_step));
  std::vector<Matrix*> p, m, v;
  std::vector<const Matrix*> g;
  params_.for_each([&](const std::string&, Matrix& x) { p.push_back(&x); });
  state_.adam_m.for_each([&](const std::string&, Matrix& x) { m.push_back(&x); });
  state_.adam_v.for_each([&](const std::string&, Matrix& x) { v.push_back(&x); });
  grad.for_each([&](const std::string&, const Matrix& x) { g.push_back(&x); });
  for (std::size_t t = 0; t < p.size(); ++t) {
    auto mt = m[t]->array();
    auto vt = v[t]->array();
    const auto gt = g[t]->array();
    mt = b1 * mt + (1.0 - b1) * gt;
    vt = b2 * vt + (1.0 - b2) * gt.square();
    p[t]->array() -= cfg_.lr * (mt / c1) / ((vt / c2).sqrt() + cfg_.adam_eps);
  }
}

namespace {

std::string dump_batch(int epoch, int batch, const JointLoss& loss, std::span<const Triplet> a,
                       std::span<const Triplet> b, const OverlapBatch& overlap) {
  std::ostringstream os;
  os << "epoch " << epoch << " batch " << batch << "\n";
  os << "terms bpr_a=" << loss.bpr_a << " bpr_b=" << loss.bpr_b << " se_a=" << loss.se_a << " se_b=" << loss.se_b
     << " cl=" << loss.cl << "\n";
  for (const auto& t : a) os << "A " << t.user << ' ' << t.pos << ' ' << t.neg << "\n";
  for (const auto& t : b) os << "B " << t.user << ' ' << t.pos << ' ' << t.neg << "\n";
  for (const auto& [x, y] : overlap.members) os << "O " << x << ' ' << y << "\n";
  return os.str();
}

}  // namespace

HistoryRow Trainer::run_epoch() {
  auto& rng = state_.rng;
  const int epoch = state_.epoch;
  EncoderConfig enc = enc_;
  enc.alpha = alpha_at(epoch, cfg_);

  const auto& ga = setup_->a.state.graph;
  const auto& gb = setup_->b.state.graph;
  const auto batches_a = ga.num_edges() > 0 ? sample_triplets(ga, cfg_.batches_per_epoch, rng)
                                            : std::vector<TripletBatch>(static_cast<std::size_t>(cfg_.batches_per_epoch));
  const auto batches_b = gb.num_edges() > 0 ? sample_triplets(gb, cfg_.batches_per_epoch, rng)
                                            : std::vector<TripletBatch>(static_cast<std::size_t>(cfg_.batches_per_epoch));
  LossWeights weights = weights_;
  if (!use_cd_) weights.gamma = 0.0;

  double loss_sum = 0.0;
  int loss_batches = 0;
  for (int b = 0; b < cfg_.batches_per_epoch; ++b) {
    const auto& ta = batches_a[static_cast<std::size_t>(b)];
    const auto& tb = batches_b[static_cast<std::size_t>(b)];
    const std::uint64_t seed_a = rng();
    const std::uint64_t seed_b = rng();
    const auto se_a = sample_se_triplets(ga, ta, rng);
    const auto se_b = sample_se_triplets(gb, tb, rng);
    OverlapBatch overlap;
    if (weights.gamma != 0.0) overlap = sample_overlap(setup_->overlap, cfg_.overlap_batch, rng);
    if (ta.empty() && tb.empty() && overlap.members.size() < 2) continue;

    const Encoding enc_a(setup_->a.state, params_.a, enc, EncodeMode::Train, seed_a);
    const Encoding enc_b(setup_->b.state, params_.b, enc, EncodeMode::Train, seed_b);
    JointInputs in;
    in.enc_a = &enc_a;
    in.enc_b = &enc_b;
    in.bpr_a = ta;
    in.bpr_b = tb;
    in.se_a = se_a;
    in.se_b = se_b;
    in.overlap = &overlap;
    const auto loss = joint_loss(in, params_, weights);
    if (!std::isfinite(loss.value))
      throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b),
                            dump_batch(epoch, b, loss, ta, tb, overlap));
    adam_step(loss.grad);
    loss_sum += loss.value;
    ++loss_batches;
  }

  params_epoch_ = epoch;
  const auto [ra, rb] = validate();
  HistoryRow row{epoch, loss_batches ? loss_sum / loss_batches : 0.0, std::max(ra, 0.0), std::max(rb, 0.0), enc.alpha};
  double metric = 0.0;
  if (ra >= 0.0 && rb >= 0.0)
    metric = 0.5 * (ra + rb);
  else if (ra >= 0.0)
    metric = ra;
  else if (rb >= 0.0)
    metric = rb;
  if (metric > state_.best_metric) {
    state_.best_metric = metric;
    state_.best_epoch = epoch;
    state_.best_params = params_;
    state_.stale = 0;
  } else {
    ++state_.stale;
  }
  state_.history.push_back(row);
  ++state_.epoch;
  return row;
}

std::pair<double, double> Trainer::validate() const {
  EncoderConfig enc = enc_;
  enc.alpha = alpha_at(params_epoch_, cfg_);
  const int ns[] = {cfg_.eval_n};
  auto recall = [&](const TrainDomain& d, const DomainParams& p) {
    bool any = false;
    for (const auto& rel : d.validation.relevant) any = any || !rel.empty();
    if (!any) return -1.0;
    const auto reps = encode_domain(d.state, p, enc, EncodeMode::Infer);
    return evaluate(reps.r, d.validation, d.state.graph, ns, Slice::all()).front().recall;
  };
  return {recall(setup_->a, params_.a), recall(setup_->b, params_.b)};
}

bool Trainer::done() const { return state_.epoch >= cfg_.epochs_max || state_.stale > cfg_.patience; }

void Trainer::fit(const std::function<void(const Trainer&, const HistoryRow&)>& on_epoch) {
  while (!done()) {
    const auto row = run_epoch();
    if (on_epoch) on_epoch(*this, row);
  }
  params_ = state_.best_params;
  params_epoch_ = std::max(state_.best_epoch, 0);
}

void Trainer::restore(ModelParams params, TrainState state) {
  params_ = std::move(params);
  state_ = std::move(state);
  params_epoch_ = std::max(state_.epoch - 1, 0);
}

}  // namespace micrec
