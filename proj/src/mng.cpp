#include "gat/mng.hpp"

#include <cmath>

#include "gat/errors.hpp"

namespace gat::mng {

using ag::NodePtr;

NoiseSchedule make_schedule(int k, const std::string& kind) {
  if (k < 1) throw ConfigError("schedule: K must be >= 1");
  if (kind != "exponential" && kind != "linear") {
    throw ConfigError("schedule: kind must be \"exponential\" or \"linear\"");
  }
  NoiseSchedule s;
  s.kind = kind;
  s.alpha.resize(k);
  for (int i = 1; i <= k; ++i) {
    s.alpha[i - 1] = kind == "exponential"
                         ? std::exp2(static_cast<double>(i - k))
                         : static_cast<double>(i) / k;
  }
  s.alpha[k - 1] = 1.0;  // exact by construction either way
  s.r.assign(k, 0.0);
  s.sigma.assign(k, 0.0);
  for (int i = 1; i < k; ++i) {
    s.r[i] = s.alpha[i - 1] / s.alpha[i];
    s.sigma[i] = std::sqrt(1.0 - s.r[i] * s.r[i]);
  }
  return s;
}

std::vector<Tensor> sample_noise_stack(const std::vector<int>& shape,
                                       const NoiseSchedule& sched, RngStream& rng) {
  int k = sched.levels();
  std::vector<Tensor> eps(k);
  eps[k - 1] = rng.normal_tensor(shape);
  for (int i = k - 1; i >= 1; --i) {
    // eps_{i-1} = r_i eps_i + sigma_i eta_i (1-based level i+1 -> index i)
    double r = sched.r[i];
    double sg = sched.sigma[i];
    Tensor eta = rng.normal_tensor(shape);
    Tensor& prev = eps[i - 1];
    prev = Tensor(shape);
    const Tensor& cur = eps[i];
    for (int64_t j = 0; j < prev.size(); ++j) prev[j] = r * cur[j] + sg * eta[j];
  }
  return eps;
}

std::vector<ag::NodePtr> perturb(const std::vector<ag::NodePtr>& stack,
                                 const NoiseSchedule& sched,
                                 const std::vector<Tensor>& noise) {
  int k = sched.levels();
  if (static_cast<int>(stack.size()) != k || static_cast<int>(noise.size()) != k) {
    throw ConfigError("perturb: stack/noise/schedule length mismatch");
  }
  std::vector<NodePtr> out(k);
  for (int i = 0; i < k; ++i) {
    double a = sched.alpha[i];
    if (a == 1.0) {
      out[i] = stack[i];  // bit-clean pass-through
      continue;
    }
    if (!stack[i]->value.same_shape(noise[i])) {
      throw ConfigError("perturb: noise shape mismatch at level " + std::to_string(i + 1));
    }
    double b = std::sqrt(1.0 - a * a);
    Tensor scaled = noise[i].clone();
    for (int64_t j = 0; j < scaled.size(); ++j) scaled[j] *= b;
    out[i] = ag::add(ag::scale(stack[i], a), ag::constant(std::move(scaled)));
  }
  return out;
}

std::vector<Tensor> perturb_values(const std::vector<Tensor>& stack,
                                   const NoiseSchedule& sched,
                                   const std::vector<Tensor>& noise) {
  int k = sched.levels();
  if (static_cast<int>(stack.size()) != k || static_cast<int>(noise.size()) != k) {
    throw ConfigError("perturb: stack/noise/schedule length mismatch");
  }
  std::vector<Tensor> out(k);
  for (int i = 0; i < k; ++i) {
    double a = sched.alpha[i];
    if (a == 1.0) {
      out[i] = stack[i];
      continue;
    }
    double b = std::sqrt(1.0 - a * a);
    Tensor t(stack[i].shape());
    for (int64_t j = 0; j < t.size(); ++j) t[j] = a * stack[i][j] + b * noise[i][j];
    out[i] = t;
  }
  return out;
}

std::vector<ag::NodePtr> replicate_real(const ag::NodePtr& x, int k) {
  if (k < 1) throw ConfigError("replicate_real: K must be >= 1");
  if (!x->value.all_finite()) throw ConfigError("replicate_real: non-finite input");
  return std::vector<NodePtr>(static_cast<size_t>(k), x);
}

}  // namespace gat::mng
