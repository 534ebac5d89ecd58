#pragma once

#include <vector>

#include "gat/autograd.hpp"
#include "gat/config.hpp"
#include "gat/nn.hpp"
#include "gat/rng.hpp"

namespace gat::gen {

// Monte-Carlo style means used by truncation and guidance.
struct StyleStats {
  std::vector<Tensor> class_means;  // num_classes entries, each [C]
  Tensor global_mean;               // [C]
  int sample_count = 0;
};

struct GenerateOptions {
  // Per-block styles (guidance); size depth when set, else the mapping
  // output drives every block.
  const std::vector<ag::NodePtr>* block_styles = nullptr;
  int skip_block = -1;                    // bypass one block (ablation)
  std::vector<Tensor>* capture = nullptr;  // post-block tokens, for PCA
};

struct GeneratorOutput {
  std::vector<ag::NodePtr> images;  // K levels, each [B, C_img, hw, hw]
  ag::NodePtr style;                // [B, width_C]
};

class Generator {
 public:
  Generator(const ModelConfig& cfg, RngStream& init_rng, double mapping_lr_mult = 0.01);

  ag::NodePtr map_style(const ag::NodePtr& z, const std::vector<int>& classes);
  // Full forward from a style vector; images accumulate per-stage residuals.
  GeneratorOutput run_from_style(const ag::NodePtr& style,
                                 const GenerateOptions& opts = {});
  GeneratorOutput generate(const ag::NodePtr& z, const std::vector<int>& classes,
                           const GenerateOptions& opts = {});

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  nn::ParamStore store_;
  ag::NodePtr input_grid_;  // learned constant [N, C]
  nn::MappingParams mapping_;
  std::vector<nn::GatBlockParams> blocks_;
  std::vector<nn::Linear> heads_;  // one unpatchify decoder per stage
  nn::RopeTables tables_;
};

// Per-class style means over num_samples z-draws per class.
StyleStats collect_style_stats(Generator& g, int num_samples, uint64_t seed);

// w' = mean_c + psi (w - mean_c); psi = 1 returns w bit-exactly.
Tensor truncate_style(const Tensor& w, const StyleStats& stats,
                      const std::vector<int>& classes, double psi);

// Styles for all depth blocks: the first ceil(fraction*depth) blocks get
// mean_c + strength (w - mean_c), the rest w. strength = 1 short-circuits.
std::vector<Tensor> latent_guidance(const Tensor& w, const StyleStats& stats,
                                    const std::vector<int>& classes,
                                    double strength, double fraction, int depth);

}  // namespace gat::gen
