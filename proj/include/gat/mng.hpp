#pragma once

#include <string>
#include <vector>

#include "gat/autograd.hpp"
#include "gat/rng.hpp"
#include "gat/tensor.hpp"

namespace gat::mng {

// Signal strengths alpha_1 < ... < alpha_K = 1 plus the recursion
// coefficients used by the cumulative noise sampler.
struct NoiseSchedule {
  std::vector<double> alpha;  // K entries
  std::vector<double> r;      // K entries; r[0] unused, r[k] = alpha[k-1]/alpha[k]
  std::vector<double> sigma;  // sigma[k] = sqrt(1 - r[k]^2)
  std::string kind;           // "exponential" | "linear"
  int levels() const { return static_cast<int>(alpha.size()); }
};

// exponential: alpha_k = 2^(k-K); linear: alpha_k = k/K. Rejects K < 1.
NoiseSchedule make_schedule(int k, const std::string& kind);

// Correlated noise levels eps_1..eps_K, each marginally N(0, I):
// eps_K ~ N(0, I), then eps_{k-1} = r_k eps_k + sigma_k eta_k going down.
std::vector<Tensor> sample_noise_stack(const std::vector<int>& shape,
                                       const NoiseSchedule& sched, RngStream& rng);

// Level k of the output = alpha_k x_k + sqrt(1 - alpha_k^2) eps_k.
// alpha = 1 short-circuits to the input node itself (bit-clean final level).
std::vector<ag::NodePtr> perturb(const std::vector<ag::NodePtr>& stack,
                                 const NoiseSchedule& sched,
                                 const std::vector<Tensor>& noise);
// Value-only variant for paths that never need gradients.
std::vector<Tensor> perturb_values(const std::vector<Tensor>& stack,
                                   const NoiseSchedule& sched,
                                   const std::vector<Tensor>& noise);

// K views of one image, the real-data counterpart of the generator stack.
std::vector<ag::NodePtr> replicate_real(const ag::NodePtr& x, int k);

}  // namespace gat::mng
