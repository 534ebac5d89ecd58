#include "gat/objectives.hpp"

#include <cmath>

#include "gat/errors.hpp"

namespace gat::obj {

using ag::NodePtr;

double softplus(double t) {
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

AdvLosses adv_losses(const ag::NodePtr& logit_real, const ag::NodePtr& logit_fake) {
  if (!logit_real->value.same_shape(logit_fake->value)) {
    throw ConfigError("adv_losses: logit batch mismatch");
  }
  AdvLosses out;
  out.l_g_adv = ag::mean_all(ag::softplus(ag::sub(logit_fake, logit_real)));
  out.l_d_adv = ag::mean_all(ag::softplus(ag::sub(logit_real, logit_fake)));
  return out;
}

ag::NodePtr approx_gp_with_noise(const LogitFn& fn, const ag::NodePtr& base_logits,
                                 const std::vector<Tensor>& base_stack,
                                 const std::vector<int>& classes, double sigma,
                                 const Tensor& eps) {
  if (sigma <= 0.0) throw ConfigError("approx_gp: sigma must be positive");
  if (base_stack.empty()) throw ConfigError("approx_gp: empty stack");
  std::vector<NodePtr> perturbed;
  for (const auto& level : base_stack) {
    if (!level.same_shape(eps)) throw ConfigError("approx_gp: eps shape mismatch");
    Tensor shifted = level.clone();
    for (int64_t i = 0; i < shifted.size(); ++i) shifted[i] += eps[i];
    perturbed.push_back(ag::constant(std::move(shifted)));
  }
  NodePtr l1 = fn(perturbed, classes);
  NodePtr diff = ag::sub(base_logits, l1);
  return ag::scale(ag::mean_all(ag::mul(diff, diff)), 1.0 / (sigma * sigma));
}

ag::NodePtr approx_gp(const LogitFn& fn, const std::vector<Tensor>& base_stack,
                      const std::vector<int>& classes, double sigma, RngStream& rng) {
  if (sigma <= 0.0) throw ConfigError("approx_gp: sigma must be positive");
  if (base_stack.empty()) throw ConfigError("approx_gp: empty stack");
  Tensor eps = rng.normal_tensor(base_stack[0].shape(), 0.0, sigma);
  std::vector<NodePtr> base;
  for (const auto& level : base_stack) base.push_back(ag::constant(level));
  return approx_gp_with_noise(fn, fn(base, classes), base_stack, classes, sigma, eps);
}

ag::NodePtr cosine_rows(const ag::NodePtr& a, const Tensor& b) {
  if (!a->value.same_shape(b)) throw ConfigError("cosine_rows: shape mismatch");
  int c = a->value.cols();
  int64_t rows = a->value.rows();
  std::vector<int> out_shape = a->value.shape();
  out_shape.pop_back();
  if (out_shape.empty()) out_shape = {1};
  Tensor out(out_shape);
  const double* pa = a->value.data();
  const double* pb = b.data();
  for (int64_t r = 0; r < rows; ++r) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int j = 0; j < c; ++j) {
      dot += pa[r * c + j] * pb[r * c + j];
      na += pa[r * c + j] * pa[r * c + j];
      nb += pb[r * c + j] * pb[r * c + j];
    }
    out[r] = (na == 0.0 || nb == 0.0) ? 0.0 : dot / (std::sqrt(na) * std::sqrt(nb));
  }
  return ag::make_op(std::move(out), {a}, [a, b, rows, c](ag::Node& n) {
    if (!a->requires_grad) return;
    double* d = a->ensure_grad().data();
    const double* g = n.grad.data();
    const double* pa = a->value.data();
    const double* pb = b.data();
    for (int64_t r = 0; r < rows; ++r) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (int j = 0; j < c; ++j) {
        dot += pa[r * c + j] * pb[r * c + j];
        na += pa[r * c + j] * pa[r * c + j];
        nb += pb[r * c + j] * pb[r * c + j];
      }
      if (na == 0.0 || nb == 0.0) continue;  // flat region, grad defined as 0
      double inv = 1.0 / (std::sqrt(na) * std::sqrt(nb));
      double cosv = dot * inv;
      for (int j = 0; j < c; ++j) {
        d[r * c + j] += g[r] * (pb[r * c + j] * inv - cosv * pa[r * c + j] / na);
      }
    }
  });
}

ag::NodePtr repa_loss(const ag::NodePtr& projected, const Tensor& teacher) {
  return ag::scale(ag::mean_all(cosine_rows(projected, teacher)), -1.0);
}

LossBreakdown combine(double l_g_adv, double l_d_adv, double l_ar1, double l_ar2,
                      double l_repa, double lambda_agp, double lambda_repa) {
  LossBreakdown b;
  b.l_g_adv = l_g_adv;
  b.l_d_adv = l_d_adv;
  b.l_ar1 = l_ar1;
  b.l_ar2 = l_ar2;
  b.l_repa = l_repa;
  b.lambda_agp = lambda_agp;
  b.lambda_repa = lambda_repa;
  b.l_d_total = l_d_adv + lambda_agp * (l_ar1 + l_ar2) + lambda_repa * l_repa;
  b.l_g_total = l_g_adv;
  return b;
}

}  // namespace gat::obj
