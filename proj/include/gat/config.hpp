#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

namespace gat {

// Geometry shared by the generator, discriminator and teacher.
struct ModelConfig {
  int width_c = 64;
  int depth = 8;
  int heads = 4;
  int patch_p = 2;
  int latent_dz = 64;
  int stages_k = 4;
  int num_classes = 10;
  int image_channels = 4;
  int image_hw = 8;

  int grid_hw() const { return image_hw / patch_p; }
  int tokens() const { return grid_hw() * grid_hw(); }
  int head_dim() const { return width_c / heads; }
  int blocks_per_stage() const { return depth / stages_k; }
  int patch_dim() const { return image_channels * patch_p * patch_p; }

  void validate() const;  // throws ConfigError on any broken invariant
  bool operator==(const ModelConfig&) const = default;
};

// Named presets: gat-s/b/l/xl mirror the reference configurations
// (1000 classes, 32x32x4 latents, patch 2); "toy" is the desk-scale default.
ModelConfig model_preset(const std::string& name);

struct OptimConfig {
  double eta_base = 4e-4;
  double c_base = 384.0;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double weight_decay = 0.0;
  double ema_decay = 0.999;
  double mapping_lr_mult = 0.01;
  void validate() const;
  bool operator==(const OptimConfig&) const = default;
};

// Full run description; serializable to/from JSON with unknown-key rejection.
struct RunConfig {
  ModelConfig model;
  OptimConfig optim;
  std::string schedule = "exponential";  // or "linear"
  bool mng = true;
  std::string d_ingest = "concat";  // or "separate": one D pass per level, summed logits
  double lambda_agp = 0.1;
  double lambda_repa = 1.0;
  double sigma_gp = 0.01;
  int batch_size = 64;
  int steps = 2000;
  uint64_t seed = 1;
  uint64_t teacher_seed = 7777;
  int teacher_dim = 64;
  int repa_hidden = 256;
  int eval_interval = 250;
  int n_eval = 256;
  int checkpoint_interval = 1000;
  double eval_fraction = 0.1;
  std::string out_dir = "runs/out";
  std::string data_source = "synthetic";  // or "file"
  std::string data_path;                  // GLT1 path when source == "file"
  int per_class = 2000;                   // synthetic samples per class

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& m);
nlohmann::json to_json(const RunConfig& c);
// Both parsers reject unknown keys by name and validate the result.
ModelConfig model_from_json(const nlohmann::json& j);
RunConfig run_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);  // IoError on open failure

}  // namespace gat
