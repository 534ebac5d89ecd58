#pragma once

#include <vector>

#include "gat/config.hpp"
#include "gat/nn.hpp"
#include "gat/tensor.hpp"

namespace gat::opt {

// eta_base * c_base / c_model, the width-aware rule. Rejects non-positive widths.
double adapt_lr(double eta_base, double c_base, double c_model);

// AdamW over a ParamStore; per-param lr_mult honored (mapping group at 0.01).
class AdamW {
 public:
  AdamW() = default;
  AdamW(const std::vector<nn::Param>& params, double lr, double beta1, double beta2,
        double weight_decay, double eps = 1e-8);
  void step(std::vector<nn::Param>& params);  // consumes .grad, leaves it intact

  double lr = 0.0, beta1 = 0.0, beta2 = 0.99, weight_decay = 0.0, eps = 1e-8;
  int64_t t = 0;
  std::vector<Tensor> m, v;  // parallel to the param list
};

AdamW build_optimizer(const nn::ParamStore& store, const OptimConfig& cfg, int c_model);

// ema <- decay*ema + (1-decay)*params, elementwise over the whole tree.
void ema_update(std::vector<Tensor>& ema, const std::vector<nn::Param>& params,
                double decay);
std::vector<Tensor> ema_init(const std::vector<nn::Param>& params);  // deep copy

}  // namespace gat::opt
