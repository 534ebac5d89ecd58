#include "gat/optim.hpp"

#include <cmath>

#include "gat/errors.hpp"

namespace gat::opt {

double adapt_lr(double eta_base, double c_base, double c_model) {
  if (eta_base <= 0.0 || c_base <= 0.0 || c_model <= 0.0) {
    throw ConfigError("adapt_lr: all arguments must be positive");
  }
  return eta_base * c_base / c_model;
}

AdamW::AdamW(const std::vector<nn::Param>& params, double lr_, double beta1_,
             double beta2_, double weight_decay_, double eps_)
    : lr(lr_), beta1(beta1_), beta2(beta2_), weight_decay(weight_decay_), eps(eps_) {
  for (const auto& p : params) {
    m.push_back(Tensor::zeros(p.node->value.shape()));
    v.push_back(Tensor::zeros(p.node->value.shape()));
  }
}

void AdamW::step(std::vector<nn::Param>& params) {
  if (params.size() != m.size()) throw ConfigError("optimizer/param tree mismatch");
  ++t;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.node->grad.defined()) continue;  // no gradient reached this leaf
    if (!p.node->value.same_shape(m[i])) throw ConfigError("optimizer slot shape mismatch");
    double step_lr = lr * p.lr_mult;
    double* w = p.node->value.data();
    const double* g = p.node->grad.data();
    double* mi = m[i].data();
    double* vi = v[i].data();
    for (int64_t j = 0; j < p.node->value.size(); ++j) {
      mi[j] = beta1 * mi[j] + (1.0 - beta1) * g[j];
      vi[j] = beta2 * vi[j] + (1.0 - beta2) * g[j] * g[j];
      double mhat = mi[j] / bc1;
      double vhat = vi[j] / bc2;
      w[j] -= step_lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w[j]);
    }
  }
}

AdamW build_optimizer(const nn::ParamStore& store, const OptimConfig& cfg, int c_model) {
  cfg.validate();
  double lr = adapt_lr(cfg.eta_base, cfg.c_base, static_cast<double>(c_model));
  return AdamW(store.all(), lr, cfg.beta1, cfg.beta2, cfg.weight_decay);
}

std::vector<Tensor> ema_init(const std::vector<nn::Param>& params) {
  std::vector<Tensor> ema;
  for (const auto& p : params) ema.push_back(p.node->value.clone());
  return ema;
}

void ema_update(std::vector<Tensor>& ema, const std::vector<nn::Param>& params,
                double decay) {
  if (ema.size() != params.size()) throw ConfigError("ema/param tree mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (!ema[i].same_shape(params[i].node->value)) {
      throw ConfigError("ema slot shape mismatch");
    }
    double* e = ema[i].data();
    const double* w = params[i].node->value.data();
    for (int64_t j = 0; j < ema[i].size(); ++j) {
      e[j] = decay * e[j] + (1.0 - decay) * w[j];
    }
  }
}

}  // namespace gat::opt
