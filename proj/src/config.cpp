#include "gat/config.hpp"

#include <fstream>
#include <set>

#include "gat/errors.hpp"

namespace gat {

using nlohmann::json;

void ModelConfig::validate() const {
  if (width_c < 1 || depth < 1 || heads < 1 || patch_p < 1 || num_classes < 1 ||
      image_channels < 1 || image_hw < 1) {
    throw ConfigError("model: all dimensions must be positive");
  }
  if (width_c % heads != 0) throw ConfigError("model: width_c must be divisible by heads");
  if (image_hw % patch_p != 0) throw ConfigError("model: image_hw must be divisible by patch_p");
  if (stages_k < 1) throw ConfigError("model: stages_k must be >= 1");
  if (depth % stages_k != 0) throw ConfigError("model: depth must be divisible by stages_k");
  if (latent_dz < 1) throw ConfigError("model: latent_dz must be >= 1");
  if (head_dim() % 2 != 0) throw ConfigError("model: head dim must be even for rotary pairs");
}

ModelConfig model_preset(const std::string& name) {
  ModelConfig m;
  if (name == "toy") {
    m = ModelConfig{};  // defaults are the toy geometry
  } else if (name == "gat-s" || name == "gat-b" || name == "gat-l" || name == "gat-xl") {
    m.num_classes = 1000;
    m.image_channels = 4;
    m.image_hw = 32;
    m.patch_p = 2;
    m.latent_dz = 64;
    m.stages_k = 4;
    if (name == "gat-s") { m.depth = 12; m.width_c = 384; m.heads = 6; }
    if (name == "gat-b") { m.depth = 12; m.width_c = 768; m.heads = 12; }
    if (name == "gat-l") { m.depth = 24; m.width_c = 1024; m.heads = 16; }
    if (name == "gat-xl") { m.depth = 28; m.width_c = 1152; m.heads = 16; }
  } else {
    throw ConfigError("unknown model preset: " + name);
  }
  m.validate();
  return m;
}

void OptimConfig::validate() const {
  if (eta_base <= 0.0) throw ConfigError("optim: eta_base must be positive");
  if (c_base < 1.0) throw ConfigError("optim: c_base must be >= 1");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("optim: betas must lie in [0, 1)");
  }
  if (ema_decay < 0.0 || ema_decay > 1.0) throw ConfigError("optim: ema_decay must lie in [0, 1]");
  if (weight_decay < 0.0) throw ConfigError("optim: weight_decay must be >= 0");
  if (mapping_lr_mult <= 0.0) throw ConfigError("optim: mapping_lr_mult must be positive");
}

void RunConfig::validate() const {
  model.validate();
  optim.validate();
  if (schedule != "exponential" && schedule != "linear") {
    throw ConfigError("schedule must be \"exponential\" or \"linear\"");
  }
  if (d_ingest != "concat" && d_ingest != "separate") {
    throw ConfigError("d_ingest must be \"concat\" or \"separate\"");
  }
  if (lambda_agp < 0.0 || lambda_repa < 0.0) throw ConfigError("loss weights must be >= 0");
  if (sigma_gp <= 0.0) throw ConfigError("sigma_gp must be positive");
  if (batch_size < 1 || steps < 0) throw ConfigError("batch_size/steps out of range");
  if (teacher_dim < 1 || repa_hidden < 1) throw ConfigError("teacher dims must be positive");
  if (eval_interval < 1 || checkpoint_interval < 1) throw ConfigError("intervals must be >= 1");
  if (n_eval < 2) throw ConfigError("n_eval must be >= 2");
  if (eval_fraction <= 0.0 || eval_fraction >= 1.0) throw ConfigError("eval_fraction must be in (0, 1)");
  if (data_source != "synthetic" && data_source != "file") {
    throw ConfigError("data_source must be \"synthetic\" or \"file\"");
  }
  if (data_source == "file" && data_path.empty()) throw ConfigError("data_path required for file source");
  if (data_source == "synthetic" && per_class < 2) throw ConfigError("per_class must be >= 2");
}

json to_json(const ModelConfig& m) {
  return json{{"width_c", m.width_c},   {"depth", m.depth},
              {"heads", m.heads},       {"patch_p", m.patch_p},
              {"latent_dz", m.latent_dz}, {"stages_k", m.stages_k},
              {"num_classes", m.num_classes}, {"image_channels", m.image_channels},
              {"image_hw", m.image_hw}};
}

json to_json(const RunConfig& c) {
  return json{{"model", to_json(c.model)},
              {"schedule", c.schedule},
              {"mng", c.mng},
              {"d_ingest", c.d_ingest},
              {"lambda_agp", c.lambda_agp},
              {"lambda_repa", c.lambda_repa},
              {"sigma_gp", c.sigma_gp},
              {"eta_base", c.optim.eta_base},
              {"c_base", c.optim.c_base},
              {"beta1", c.optim.beta1},
              {"beta2", c.optim.beta2},
              {"weight_decay", c.optim.weight_decay},
              {"ema_decay", c.optim.ema_decay},
              {"mapping_lr_mult", c.optim.mapping_lr_mult},
              {"batch_size", c.batch_size},
              {"steps", c.steps},
              {"seed", c.seed},
              {"teacher_seed", c.teacher_seed},
              {"teacher_dim", c.teacher_dim},
              {"repa_hidden", c.repa_hidden},
              {"eval_interval", c.eval_interval},
              {"n_eval", c.n_eval},
              {"checkpoint_interval", c.checkpoint_interval},
              {"eval_fraction", c.eval_fraction},
              {"out_dir", c.out_dir},
              {"data_source", c.data_source},
              {"data_path", c.data_path},
              {"per_class", c.per_class}};
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const char* where) {
  std::string bad;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) bad += (bad.empty() ? "" : ", ") + it.key();
  }
  if (!bad.empty()) {
    throw ConfigError(std::string(where) + ": unknown keys: " + bad);
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ModelConfig model_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model: expected an object");
  reject_unknown(j,
                 {"preset", "width_c", "depth", "heads", "patch_p", "latent_dz",
                  "stages_k", "num_classes", "image_channels", "image_hw"},
                 "model");
  ModelConfig m;
  if (j.contains("preset")) m = model_preset(j.at("preset").get<std::string>());
  maybe(j, "width_c", m.width_c);
  maybe(j, "depth", m.depth);
  maybe(j, "heads", m.heads);
  maybe(j, "patch_p", m.patch_p);
  maybe(j, "latent_dz", m.latent_dz);
  maybe(j, "stages_k", m.stages_k);
  maybe(j, "num_classes", m.num_classes);
  maybe(j, "image_channels", m.image_channels);
  maybe(j, "image_hw", m.image_hw);
  m.validate();
  return m;
}

RunConfig run_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config: expected an object");
  reject_unknown(j,
                 {"model", "schedule", "mng", "d_ingest", "lambda_agp", "lambda_repa",
                  "sigma_gp", "eta_base", "c_base", "beta1", "beta2", "weight_decay",
                  "ema_decay", "mapping_lr_mult", "batch_size", "steps", "seed",
                  "teacher_seed", "teacher_dim", "repa_hidden", "eval_interval",
                  "n_eval", "checkpoint_interval", "eval_fraction", "out_dir",
                  "data_source", "data_path", "per_class"},
                 "run config");
  RunConfig c;
  if (j.contains("model")) c.model = model_from_json(j.at("model"));
  maybe(j, "schedule", c.schedule);
  maybe(j, "mng", c.mng);
  maybe(j, "d_ingest", c.d_ingest);
  maybe(j, "lambda_agp", c.lambda_agp);
  maybe(j, "lambda_repa", c.lambda_repa);
  maybe(j, "sigma_gp", c.sigma_gp);
  maybe(j, "eta_base", c.optim.eta_base);
  maybe(j, "c_base", c.optim.c_base);
  maybe(j, "beta1", c.optim.beta1);
  maybe(j, "beta2", c.optim.beta2);
  maybe(j, "weight_decay", c.optim.weight_decay);
  maybe(j, "ema_decay", c.optim.ema_decay);
  maybe(j, "mapping_lr_mult", c.optim.mapping_lr_mult);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "steps", c.steps);
  maybe(j, "seed", c.seed);
  maybe(j, "teacher_seed", c.teacher_seed);
  maybe(j, "teacher_dim", c.teacher_dim);
  maybe(j, "repa_hidden", c.repa_hidden);
  maybe(j, "eval_interval", c.eval_interval);
  maybe(j, "n_eval", c.n_eval);
  maybe(j, "checkpoint_interval", c.checkpoint_interval);
  maybe(j, "eval_fraction", c.eval_fraction);
  maybe(j, "out_dir", c.out_dir);
  maybe(j, "data_source", c.data_source);
  maybe(j, "data_path", c.data_path);
  maybe(j, "per_class", c.per_class);
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(IoCode::open_failed, "cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return run_from_json(j);
}

}  // namespace gat
