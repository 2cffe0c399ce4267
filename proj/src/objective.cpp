#include "micrec/objective.hpp"

#include "micrec/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace micrec {

void LossWeights::validate() const {
  if (!(lambda >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
}

namespace {

// -ln sigmoid(x), stable for large |x|.
double neg_log_sigmoid(double x) { return x >= 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Mean BPR over the batch; accumulates d/dr into g_r.
double bpr_terms(const Matrix& r, EntityIndex num_users, std::span<const Triplet> batch, Matrix& g_r) {
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& t : batch) {
    const auto ru = r.row(t.user);
    const auto rp = r.row(num_users + t.pos);
    const auto rn = r.row(num_users + t.neg);
    const double delta = ru.dot(rp) - ru.dot(rn);
    total += neg_log_sigmoid(delta);
    const double g = -sigmoid(-delta) * inv_b;
    g_r.row(t.user) += g * (rp - rn);
    g_r.row(num_users + t.pos) += g * ru;
    g_r.row(num_users + t.neg) -= g * ru;
  }
  return total * inv_b;
}

void add_l2(const DomainParams& params, double lambda, DomainParams& grad, double& value) {
  if (lambda == 0.0) return;
  value += lambda * params.squared_norm();
  grad.add_scaled(params, 2.0 * lambda);
}

double se_terms(const DomainParams& params, const DomainGraph& graph, std::span<const Triplet> batch,
                DomainParams& grad, double scale) {
  if (batch.empty()) return 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const Matrix& w = params.se_projection;
  double total = 0.0;
  for (const auto& t : batch) {
    const EntityIndex su = graph.template_user_slot(t.user);
    const EntityIndex sp = graph.template_item_slot(t.pos);
    const EntityIndex sn = graph.template_item_slot(t.neg);
    if (su < 0 || sp < 0 || sn < 0) throw std::invalid_argument("se_loss: triplet entity is not a template");
    const Vector eu = params.template_user.row(su).transpose();
    const Vector diff = (params.template_item.row(sp) - params.template_item.row(sn)).transpose();
    const Vector w_diff = w * diff;
    const double delta = eu.dot(w_diff);
    total += neg_log_sigmoid(delta);
    const double g = -sigmoid(-delta) * inv_b * scale;
    const Vector wt_eu = w.transpose() * eu;
    grad.template_user.row(su) += g * w_diff.transpose();
    grad.se_projection.noalias() += g * eu * diff.transpose();
    grad.template_item.row(sp) += g * wt_eu.transpose();
    grad.template_item.row(sn) -= g * wt_eu.transpose();
  }
  return total * inv_b;
}

struct ProjectionCache {
  Matrix input, hidden_pre, hidden, out;
};

ProjectionCache project_cached(const Projection& p, Matrix input) {
  ProjectionCache c;
  c.input = std::move(input);
  c.hidden_pre = c.input * p.w1.transpose();
  c.hidden_pre.rowwise() += p.b1.row(0);
  c.hidden = c.hidden_pre.cwiseMax(0.0);
  c.out = c.hidden * p.w2.transpose();
  c.out.rowwise() += p.b2.row(0);
  return c;
}

// Returns d/d(input); accumulates parameter gradients scaled by `scale`.
Matrix project_backward(const Projection& p, const ProjectionCache& c, const Matrix& g_out, Projection& grad,
                        double scale) {
  grad.w2.noalias() += scale * g_out.transpose() * c.hidden;
  grad.b2.row(0) += scale * g_out.colwise().sum();
  Matrix g_hidden = g_out * p.w2;
  for (Eigen::Index k = 0; k < g_hidden.size(); ++k)
    if (!(c.hidden_pre.data()[k] > 0.0)) g_hidden.data()[k] = 0.0;
  grad.w1.noalias() += scale * g_hidden.transpose() * c.input;
  grad.b1.row(0) += scale * g_hidden.colwise().sum();
  return g_hidden * p.w1;
}

struct ContrastiveTerms {
  double value = 0.0;
  Matrix g_ra, g_rb;  // full-size gradients w.r.t. r of each domain
};

ContrastiveTerms contrastive_terms(const Encoding& enc_a, const Encoding& enc_b, const OverlapBatch& batch,
                                   const ModelParams& params, double tau, bool include_pos, ModelParams& grad,
                                   double scale) {
  const auto n = static_cast<Eigen::Index>(batch.members.size());
  if (n < 2) throw std::invalid_argument("contrastive loss needs at least two overlapping users");
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
  const auto d = enc_a.r().cols();
  Matrix ra(n, d), rb(n, d);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto [ua, ub] = batch.members[static_cast<std::size_t>(j)];
    if (ua < 0 || ua >= enc_a.num_users() || ub < 0 || ub >= enc_b.num_users())
      throw std::invalid_argument("overlap member out of range");
    ra.row(j) = enc_a.r().row(ua);
    rb.row(j) = enc_b.r().row(ub);
  }
  const auto ca = project_cached(params.a.proj, std::move(ra));
  const auto cb = project_cached(params.b.proj, std::move(rb));
  const Matrix s = (ca.out * cb.out.transpose()) / tau;

  const double inv_n = 1.0 / static_cast<double>(n);
  Matrix g_s = Matrix::Zero(n, n);
  double l1 = 0.0, l2 = 0.0;
  std::vector<double> w(static_cast<std::size_t>(n));
  // Direction A->B uses row j of s, B->A column j.
  for (int dir = 0; dir < 2; ++dir) {
    for (Eigen::Index j = 0; j < n; ++j) {
      auto at = [&](Eigen::Index k) { return dir == 0 ? s(j, k) : s(k, j); };
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < n; ++k)
        if (k != j || include_pos) mx = std::max(mx, at(k));
      double z = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        w[k] = (k != j || include_pos) ? std::exp(at(k) - mx) : 0.0;
        z += w[k];
      }
      const double term = -(at(j) - (mx + std::log(z)));
      (dir == 0 ? l1 : l2) += term * inv_n;
      g_s(j, j) -= inv_n;
      for (Eigen::Index k = 0; k < n; ++k) {
        if (w[k] == 0.0) continue;
        const double g = inv_n * w[k] / z;
        if (dir == 0)
          g_s(j, k) += g;
        else
          g_s(k, j) += g;
      }
    }
  }

  ContrastiveTerms out;
  out.value = l1 + l2;
  const Matrix g_pa = (g_s * cb.out) / tau;
  const Matrix g_pb = (g_s.transpose() * ca.out) / tau;
  const Matrix g_in_a = project_backward(params.a.proj, ca, g_pa, grad.a.proj, scale);
  const Matrix g_in_b = project_backward(params.b.proj, cb, g_pb, grad.b.proj, scale);
  out.g_ra = Matrix::Zero(enc_a.r().rows(), d);
  out.g_rb = Matrix::Zero(enc_b.r().rows(), d);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto [ua, ub] = batch.members[static_cast<std::size_t>(j)];
    out.g_ra.row(ua) += scale * g_in_a.row(j);
    out.g_rb.row(ub) += scale * g_in_b.row(j);
  }
  return out;
}

}  // namespace

Matrix project(const Projection& p, const Matrix& x) { return project_cached(p, x).out; }

DomainLoss bpr_loss(const Encoding& enc, std::span<const Triplet> batch, const DomainParams& params, double lambda) {
  if (batch.empty()) throw std::invalid_argument("bpr_loss: empty triplet batch");
  DomainLoss out{0.0, params.zeros_like()};
  Matrix g_r = Matrix::Zero(enc.r().rows(), enc.r().cols());
  out.value = bpr_terms(enc.r(), enc.num_users(), batch, g_r);
  enc.backward(g_r, out.grad);
  add_l2(params, lambda, out.grad, out.value);
  return out;
}

DomainLoss se_loss(const DomainParams& params, const DomainGraph& graph, std::span<const Triplet> batch) {
  DomainLoss out{0.0, params.zeros_like()};
  out.value = se_terms(params, graph, batch, out.grad, 1.0);
  return out;
}

ModelLoss contrastive_loss(const Encoding& enc_a, const Encoding& enc_b, const OverlapBatch& batch,
                           const ModelParams& params, double tau, bool include_positive_in_denominator) {
  ModelLoss out{0.0, params.zeros_like()};
  auto terms = contrastive_terms(enc_a, enc_b, batch, params, tau, include_positive_in_denominator, out.grad, 1.0);
  out.value = terms.value;
  enc_a.backward(terms.g_ra, out.grad.a);
  enc_b.backward(terms.g_rb, out.grad.b);
  return out;
}

JointLoss joint_loss(const JointInputs& in, const ModelParams& params, const LossWeights& w) {
  w.validate();
  if (!in.enc_a || !in.enc_b) throw std::invalid_argument("joint_loss: both encodings are required");
  JointLoss out;
  out.grad = params.zeros_like();
  Matrix g_ra = Matrix::Zero(in.enc_a->r().rows(), in.enc_a->r().cols());
  Matrix g_rb = Matrix::Zero(in.enc_b->r().rows(), in.enc_b->r().cols());

  if (!in.bpr_a.empty()) {
    out.bpr_a = bpr_terms(in.enc_a->r(), in.enc_a->num_users(), in.bpr_a, g_ra);
    add_l2(params.a, w.lambda, out.grad.a, out.bpr_a);
  }
  if (!in.bpr_b.empty()) {
    out.bpr_b = bpr_terms(in.enc_b->r(), in.enc_b->num_users(), in.bpr_b, g_rb);
    add_l2(params.b, w.lambda, out.grad.b, out.bpr_b);
  }
  if (w.beta != 0.0) {
    out.se_a = se_terms(params.a, in.enc_a->state().graph, in.se_a, out.grad.a, w.beta);
    out.se_b = se_terms(params.b, in.enc_b->state().graph, in.se_b, out.grad.b, w.beta);
  }
  if (w.gamma != 0.0 && in.overlap && in.overlap->members.size() >= 2) {
    auto cl = contrastive_terms(*in.enc_a, *in.enc_b, *in.overlap, params, w.tau, w.include_positive_in_denominator,
                                out.grad, w.gamma);
    out.cl = cl.value;
    g_ra += cl.g_ra;
    g_rb += cl.g_rb;
  }
  in.enc_a->backward(g_ra, out.grad.a);
  in.enc_b->backward(g_rb, out.grad.b);
  out.value = (out.bpr_a + out.bpr_b) + w.beta * (out.se_a + out.se_b) + w.gamma * out.cl;
  return out;
}

}  // namespace micrec
