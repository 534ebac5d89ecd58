#pragma once

#include <functional>
#include <vector>

#include "gat/autograd.hpp"
#include "gat/rng.hpp"
#include "gat/tensor.hpp"

namespace gat::obj {

// Stable scalar softplus: max(t, 0) + log1p(exp(-|t|)).
double softplus(double t);

struct AdvLosses {
  ag::NodePtr l_g_adv;  // mean f(fake_i - real_i)
  ag::NodePtr l_d_adv;  // mean f(real_i - fake_i)
};
// Index-paired relativistic losses over per-sample logits [B].
AdvLosses adv_losses(const ag::NodePtr& logit_real, const ag::NodePtr& logit_fake);

// Maps a stack of input levels plus classes to per-sample logits [B].
// The closure must hold its augmentation/noise draws fixed so both gp paths
// see identical transforms.
using LogitFn = std::function<ag::NodePtr(const std::vector<ag::NodePtr>&,
                                          const std::vector<int>&)>;

// (1/sigma^2) mean_i (l_i - l'_i)^2 where l is the logit already computed on
// the unperturbed path and l' comes from one extra run of the same pipeline
// on base + eps', eps' ~ N(0, sigma^2 I) drawn once per sample and applied to
// every level. Gradients flow through both forwards.
ag::NodePtr approx_gp(const LogitFn& fn, const std::vector<Tensor>& base_stack,
                      const std::vector<int>& classes, double sigma, RngStream& rng);
// Deterministic variant with a pre-drawn eps' ~ N(0, sigma^2 I) and the
// unperturbed logits passed in instead of recomputed.
ag::NodePtr approx_gp_with_noise(const LogitFn& fn, const ag::NodePtr& base_logits,
                                 const std::vector<Tensor>& base_stack,
                                 const std::vector<int>& classes, double sigma,
                                 const Tensor& eps);

// Row-wise cosine over the last dim; rows where either side has zero norm
// contribute 0 but stay in the mean. b is a constant (teacher side).
ag::NodePtr cosine_rows(const ag::NodePtr& a, const Tensor& b);

// -(1/(N+1)) sum_i cos(projected_i, teacher_i), applied on real data only.
ag::NodePtr repa_loss(const ag::NodePtr& projected, const Tensor& teacher);

struct LossBreakdown {
  double l_g_adv = 0.0, l_d_adv = 0.0, l_ar1 = 0.0, l_ar2 = 0.0, l_repa = 0.0;
  double l_d_total = 0.0, l_g_total = 0.0;
  double lambda_agp = 0.1, lambda_repa = 1.0;
};
LossBreakdown combine(double l_g_adv, double l_d_adv, double l_ar1, double l_ar2,
                      double l_repa, double lambda_agp = 0.1, double lambda_repa = 1.0);

}  // namespace gat::obj
