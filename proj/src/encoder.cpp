#include "micrec/encoder.hpp"

#include "micrec/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace micrec {

DomainParams DomainParams::zeros_like() const {
  DomainParams z = *this;
  z.for_each([](const char*, Matrix& m) { m.setZero(); });
  return z;
}

double DomainParams::squared_norm() const {
  double s = 0.0;
  for_each([&](const char*, const Matrix& m) { s += m.squaredNorm(); });
  return s;
}

void DomainParams::add_scaled(const DomainParams& other, double scale) {
  std::vector<const Matrix*> src;
  other.for_each([&](const char*, const Matrix& m) { src.push_back(&m); });
  std::size_t k = 0;
  for_each([&](const char*, Matrix& m) { m.noalias() += scale * *src[k++]; });
}

std::size_t ModelParams::size() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  for_each([&](const std::string&, const Matrix& m) { out.insert(out.end(), m.data(), m.data() + m.size()); });
  return out;
}

void ModelParams::assign_flat(std::span<const double> values) {
  if (values.size() != size()) throw std::invalid_argument("assign_flat: size mismatch");
  std::size_t off = 0;
  for_each([&](const std::string&, Matrix& m) {
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(off),
              values.begin() + static_cast<std::ptrdiff_t>(off + static_cast<std::size_t>(m.size())), m.data());
    off += static_cast<std::size_t>(m.size());
  });
}

DomainParams init_domain_params(EntityIndex num_template_users, EntityIndex num_template_items, int dim,
                                double init_std, std::mt19937_64& rng) {
  if (dim < 1) throw ConfigError("embedding dimension must be at least 1");
  std::normal_distribution<double> normal(0.0, init_std);
  const double bound = std::sqrt(6.0 / (2.0 * dim));
  std::uniform_real_distribution<double> glorot(-bound, bound);
  auto fill = [](Matrix& m, auto& dist, std::mt19937_64& g) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = dist(g);
  };
  DomainParams p;
  p.template_user.resize(num_template_users, dim);
  fill(p.template_user, normal, rng);
  p.template_item.resize(num_template_items, dim);
  fill(p.template_item, normal, rng);
  p.bias_user = Matrix::Zero(1, dim);
  p.bias_item = Matrix::Zero(1, dim);
  p.se_projection = Matrix::Identity(dim, dim);
  p.proj.w1.resize(dim, dim);
  fill(p.proj.w1, glorot, rng);
  p.proj.b1 = Matrix::Zero(1, dim);
  p.proj.w2.resize(dim, dim);
  fill(p.proj.w2, glorot, rng);
  p.proj.b2 = Matrix::Zero(1, dim);
  return p;
}

GraphState GraphState::build(DomainGraph graph, const EntityFeatures* item_features, const SimilarityConfig& sim,
                             int k) {
  GraphState s;
  const auto edges = graph.edges();
  s.adjacency = NormalizedAdjacency::from_edges(graph.num_users(), graph.num_items(), edges);
  if (item_features) {
    const auto users = derive_user_features(graph, *item_features);
    s.user_neighbors = build_neighbor_index(users, sim, k);
    s.item_neighbors = build_neighbor_index(*item_features, sim, k);
  }
  s.graph = std::move(graph);
  return s;
}

namespace {

void check_params(const DomainGraph& graph, const DomainParams& params) {
  const auto tu = static_cast<Eigen::Index>(graph.template_users().size());
  const auto ti = static_cast<Eigen::Index>(graph.template_items().size());
  if (params.template_user.rows() != tu || params.template_item.rows() != ti)
    throw DataError("population mismatch: parameters hold " + std::to_string(params.template_user.rows()) + "/" +
                    std::to_string(params.template_item.rows()) + " template users/items, graph has " +
                    std::to_string(tu) + "/" + std::to_string(ti));
  const auto d = params.se_projection.rows();
  if (params.template_user.cols() != d || params.template_item.cols() != d || params.bias_user.cols() != d ||
      params.bias_item.cols() != d)
    throw DataError("parameter dimension mismatch");
}

}  // namespace

Matrix template_encode(const DomainGraph& graph, const DomainParams& params, double alpha) {
  check_params(graph, params);
  const auto d = params.se_projection.rows();
  const EntityIndex nu = graph.num_users();
  Matrix x = Matrix::Zero(graph.num_nodes(), d);
  RowVector acc(d);
  for (EntityIndex u = 0; u < nu; ++u) {
    acc.setZero();
    int n = 0;
    for (EntityIndex i : graph.items_of(u)) {
      const EntityIndex slot = graph.template_item_slot(i);
      if (slot < 0) continue;
      acc += params.template_item.row(slot) + params.bias_user;
      ++n;
    }
    if (n > 0) x.row(u) = std::pow(static_cast<double>(n + 1), -alpha) * acc;
  }
  for (EntityIndex i = 0; i < graph.num_items(); ++i) {
    acc.setZero();
    int n = 0;
    for (EntityIndex u : graph.users_of(i)) {
      const EntityIndex slot = graph.template_user_slot(u);
      if (slot < 0) continue;
      acc += params.template_user.row(slot) + params.bias_item;
      ++n;
    }
    if (n > 0) x.row(nu + i) = std::pow(static_cast<double>(n + 1), -alpha) * acc;
  }
  return x;
}

Matrix aggregate_modal(const Matrix& x, const NeighborIndex& users, const NeighborIndex& items, int k) {
  if (k < 1) throw ConfigError("neighbor count K must be at least 1");
  if (users.size() + items.size() != x.rows())
    throw DataError("population mismatch: neighbor indices cover " + std::to_string(users.size() + items.size()) +
                    " entities, representations have " + std::to_string(x.rows()));
  const auto nu = static_cast<EntityIndex>(users.size());
  Matrix out = x;
  RowVector acc(x.cols());
  auto aggregate = [&](const NeighborIndex& index, EntityIndex offset) {
    for (EntityIndex v = 0; v < static_cast<EntityIndex>(index.size()); ++v) {
      const auto& nb = index.neighbors[static_cast<std::size_t>(v)];
      if (nb.empty()) continue;
      acc.setZero();
      for (EntityIndex w : nb) acc += x.row(offset + w);
      out.row(offset + v) += acc / static_cast<double>(k);
    }
  };
  aggregate(users, 0);
  aggregate(items, nu);
  return out;
}

Matrix propagate(const Matrix& x_agg, const NormalizedAdjacency& adj, int layers) {
  if (layers < 0) throw ConfigError("propagation depth must be non-negative");
  Matrix sum = x_agg;
  Matrix h = x_agg;
  for (int l = 0; l < layers; ++l) {
    h = spmm(adj, h);
    sum += h;
  }
  return sum / static_cast<double>(layers + 1);
}

Encoding::Encoding(const GraphState& state, const DomainParams& params, const EncoderConfig& cfg, EncodeMode mode,
                   std::uint64_t dropout_seed)
    : state_(&state), cfg_(cfg) {
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (params.se_projection.rows() != cfg.dim) throw DataError("parameter dimension differs from the encoder config");
  reps_.x = template_encode(state.graph, params, cfg.alpha);
  Matrix xd = reps_.x;
  if (mode == EncodeMode::Train && cfg.dropout > 0.0) {
    std::mt19937_64 rng(dropout_seed);
    std::bernoulli_distribution keep(1.0 - cfg.dropout);
    const double scale = 1.0 / (1.0 - cfg.dropout);
    mask_.resize(xd.rows(), xd.cols());
    for (Eigen::Index k = 0; k < mask_.size(); ++k) mask_.data()[k] = keep(rng) ? scale : 0.0;
    xd = xd.cwiseProduct(mask_);
  }
  if (cfg.use_mm)
    reps_.x_agg = aggregate_modal(xd, state.user_neighbors, state.item_neighbors, cfg.k);
  else
    reps_.x_agg = std::move(xd);
  reps_.r = propagate(reps_.x_agg, state.adjacency, cfg.layers);
}

void Encoding::backward(const Matrix& grad_r, DomainParams& grad) const {
  const auto& graph = state_->graph;
  if (grad_r.rows() != reps_.r.rows() || grad_r.cols() != reps_.r.cols())
    throw std::invalid_argument("Encoding::backward: gradient shape mismatch");

  // The normalized adjacency is symmetric, so propagation is self-adjoint.
  Matrix g_agg = propagate(grad_r, state_->adjacency, cfg_.layers);

  Matrix g_x = g_agg;
  if (cfg_.use_mm) {
    const auto nu = graph.num_users();
    const double inv_k = 1.0 / static_cast<double>(cfg_.k);
    auto scatter = [&](const NeighborIndex& index, EntityIndex offset) {
      for (EntityIndex v = 0; v < static_cast<EntityIndex>(index.size()); ++v)
        for (EntityIndex w : index.neighbors[static_cast<std::size_t>(v)])
          g_x.row(offset + w) += inv_k * g_agg.row(offset + v);
    };
    scatter(state_->user_neighbors, 0);
    scatter(state_->item_neighbors, nu);
  }
  if (mask_.size() > 0) g_x = g_x.cwiseProduct(mask_);

  const EntityIndex nu = graph.num_users();
  for (EntityIndex u = 0; u < nu; ++u) {
    int n = 0;
    for (EntityIndex i : graph.items_of(u))
      if (graph.template_item_slot(i) >= 0) ++n;
    if (n == 0) continue;
    const double c = std::pow(static_cast<double>(n + 1), -cfg_.alpha);
    const auto g = g_x.row(u);
    for (EntityIndex i : graph.items_of(u)) {
      const EntityIndex slot = graph.template_item_slot(i);
      if (slot >= 0) grad.template_item.row(slot) += c * g;
    }
    grad.bias_user += (c * n) * g;
  }
  for (EntityIndex i = 0; i < graph.num_items(); ++i) {
    int n = 0;
    for (EntityIndex u : graph.users_of(i))
      if (graph.template_user_slot(u) >= 0) ++n;
    if (n == 0) continue;
    const double c = std::pow(static_cast<double>(n + 1), -cfg_.alpha);
    const auto g = g_x.row(nu + i);
    for (EntityIndex u : graph.users_of(i)) {
      const EntityIndex slot = graph.template_user_slot(u);
      if (slot >= 0) grad.template_user.row(slot) += c * g;
    }
    grad.bias_item += (c * n) * g;
  }
}

Representations encode_domain(const GraphState& state, const DomainParams& params, const EncoderConfig& cfg,
                              EncodeMode mode, std::uint64_t dropout_seed) {
  return Encoding(state, params, cfg, mode, dropout_seed).reps();
}

}  // namespace micrec
