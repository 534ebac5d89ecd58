#pragma once

#include <string>
#include <vector>

#include "gat/config.hpp"
#include "gat/generator.hpp"
#include "gat/nn.hpp"
#include "gat/tensor.hpp"

namespace gat::metrics {

// Frozen, seeded 2-block ViT over the latent grid; the stand-in for a
// pretrained feature extractor. Never trained.
class TeacherEncoder {
 public:
  TeacherEncoder(const ModelConfig& cfg, int dim, uint64_t seed);
  // [B, C_img, hw, hw] values -> [B, N+1, dim] tokens ([cls] first).
  Tensor encode(const Tensor& images) const;
  Tensor cls_features(const Tensor& images) const;  // [B, dim]
  int dim() const { return dim_; }
  int tokens() const { return cfg_.tokens() + 1; }

 private:
  ModelConfig cfg_;
  int dim_ = 0;
  int heads_ = 4;
  mutable nn::ParamStore store_;
  nn::Linear patchify_;
  ag::NodePtr cls_token_;
  std::vector<nn::DisBlockParams> blocks_;
  nn::RopeTables tables_;
};

// Frechet distance between Gaussian fits of two feature sets [M, D]:
// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2).
// Unbiased covariances, eps*I stabilization; rejects M < D+1.
double frechet_proxy(const Tensor& feats_a, const Tensor& feats_b, double eps = 1e-6);

struct BlockContributionReport {
  std::vector<double> distances;  // depth entries
  int sample_count = 0;
  std::string distance_kind;  // "latent-l2" | "teacher-feature"
};

// For each block: bypass it, regenerate, record mean distance of the final
// level to the unablated output. teacher == nullptr selects latent L2.
BlockContributionReport block_contribution(gen::Generator& g, const Tensor& z,
                                           const std::vector<int>& classes,
                                           const TeacherEncoder* teacher = nullptr,
                                           int batch = 32);

struct PcaBlock {
  Tensor components;  // [3, C] rows unit-norm (zero rows when rank-deficient)
  Tensor grid;        // [rows, cols, 3] projections of the first sample
  std::vector<double> explained;  // variance ratio per component
  int rank = 0;
  bool rank_deficient = false;
};

// tokens: per block [S, N, C] feature snapshots (from GenerateOptions.capture).
std::vector<PcaBlock> pca_features(const std::vector<Tensor>& block_tokens, int grid_hw);

}  // namespace gat::metrics
