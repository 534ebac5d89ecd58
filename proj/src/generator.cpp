#include "gat/generator.hpp"

#include <cmath>

#include "gat/errors.hpp"

namespace gat::gen {

using ag::NodePtr;

Generator::Generator(const ModelConfig& cfg, RngStream& init_rng, double mapping_lr_mult)
    : cfg_(cfg) {
  cfg_.validate();
  int c = cfg_.width_c;
  input_grid_ = store_.add("input_grid", nn::trunc_normal(init_rng, {cfg_.tokens(), c}, 0.02));
  mapping_ = nn::make_mapping(store_, cfg_.latent_dz, c, cfg_.num_classes, init_rng,
                              mapping_lr_mult);
  for (int b = 0; b < cfg_.depth; ++b) {
    blocks_.push_back(nn::make_gat_block(store_, "block" + std::to_string(b), c, init_rng));
  }
  for (int k = 0; k < cfg_.stages_k; ++k) {
    heads_.push_back(nn::make_linear(store_, "head" + std::to_string(k), c,
                                     cfg_.patch_dim(), init_rng));
  }
  tables_ = nn::make_rope_tables(cfg_.grid_hw(), cfg_.head_dim(), false);

  // Calibrate every gate head so fresh gates have variance ~0.1: probe the
  // mapping with a handful of draws and rescale each gate group.
  {
    ag::NoGradGuard ng;
    const int probes = 16;
    Tensor z(std::vector<int>{probes, cfg_.latent_dz});
    init_rng.fill_normal(z);
    std::vector<int> classes;
    for (int i = 0; i < probes; ++i) classes.push_back(init_rng.below(cfg_.num_classes));
    NodePtr w = nn::mapping_forward(mapping_, ag::constant(z), classes);
    for (auto& blk : blocks_) {
      nn::calibrate_gate_head(blk.gate_w->value, w->value, 0.1);
    }
  }
}

ag::NodePtr Generator::map_style(const ag::NodePtr& z, const std::vector<int>& classes) {
  return nn::mapping_forward(mapping_, z, classes);
}

GeneratorOutput Generator::run_from_style(const ag::NodePtr& style,
                                          const GenerateOptions& opts) {
  if (opts.block_styles && static_cast<int>(opts.block_styles->size()) != cfg_.depth) {
    throw ConfigError("generate: block_styles must have one entry per block");
  }
  if (opts.skip_block >= cfg_.depth) {
    throw ConfigError("generate: skip_block out of range");
  }
  int b = style->value.dim(0);
  int n = cfg_.tokens(), c = cfg_.width_c;

  NodePtr x = ag::reshape(
      ag::repeat_rows(ag::reshape(input_grid_, {n * c}), b), {b, n, c});

  GeneratorOutput out;
  out.style = style;
  int bps = cfg_.blocks_per_stage();
  NodePtr accum;
  for (int blk = 0; blk < cfg_.depth; ++blk) {
    if (blk != opts.skip_block) {
      const NodePtr& w = opts.block_styles ? (*opts.block_styles)[blk] : style;
      nn::Gates g = nn::gate_forward(blocks_[blk], w);
      x = nn::gat_block(blocks_[blk], x, g, cfg_.heads, tables_);
    }
    if (opts.capture) opts.capture->push_back(x->value.clone());
    if ((blk + 1) % bps == 0) {
      int stage = (blk + 1) / bps - 1;
      NodePtr res = nn::apply_linear(heads_[stage], ag::rms_norm_last(x, nn::kRmsEps));
      NodePtr img = ag::image_from_patches(res, cfg_.patch_p, cfg_.image_channels,
                                           cfg_.image_hw, cfg_.image_hw);
      accum = accum ? ag::add(accum, img) : img;
      out.images.push_back(accum);
    }
  }
  return out;
}

GeneratorOutput Generator::generate(const ag::NodePtr& z, const std::vector<int>& classes,
                                    const GenerateOptions& opts) {
  return run_from_style(map_style(z, classes), opts);
}

StyleStats collect_style_stats(Generator& g, int num_samples, uint64_t seed) {
  if (num_samples < 1) throw ConfigError("style stats: num_samples must be >= 1");
  ag::NoGradGuard ng;
  const ModelConfig& cfg = g.config();
  RngStream rng(derive_seed(seed, "style-stats"));
  StyleStats stats;
  stats.global_mean = Tensor::zeros({cfg.width_c});
  for (int c = 0; c < cfg.num_classes; ++c) {
    Tensor z(std::vector<int>{num_samples, cfg.latent_dz});
    rng.fill_normal(z);
    std::vector<int> classes(static_cast<size_t>(num_samples), c);
    NodePtr w = g.map_style(ag::constant(z), classes);
    Tensor mean = Tensor::zeros({cfg.width_c});
    for (int i = 0; i < num_samples; ++i) {
      for (int j = 0; j < cfg.width_c; ++j) {
        mean[j] += w->value[static_cast<int64_t>(i) * cfg.width_c + j];
      }
    }
    for (int j = 0; j < cfg.width_c; ++j) {
      mean[j] /= num_samples;
      stats.global_mean[j] += mean[j] / cfg.num_classes;
    }
    stats.class_means.push_back(std::move(mean));
  }
  stats.sample_count = num_samples * cfg.num_classes;
  return stats;
}

namespace {

const Tensor& mean_for(const StyleStats& stats, int c) {
  if (stats.sample_count <= 0) throw ConfigError("style stats are empty");
  if (c >= 0 && c < static_cast<int>(stats.class_means.size())) {
    return stats.class_means[static_cast<size_t>(c)];
  }
  if (!stats.global_mean.defined()) throw ConfigError("style stats have no global mean");
  return stats.global_mean;
}

}  // namespace

Tensor truncate_style(const Tensor& w, const StyleStats& stats,
                      const std::vector<int>& classes, double psi) {
  if (!std::isfinite(psi)) throw ConfigError("truncate: psi must be finite");
  if (psi == 1.0) return w;  // bit-exact identity
  int b = w.dim(0), c = w.dim(1);
  if (static_cast<int>(classes.size()) != b) throw ConfigError("truncate: batch mismatch");
  Tensor out(w.shape());
  for (int i = 0; i < b; ++i) {
    const Tensor& mean = mean_for(stats, classes[static_cast<size_t>(i)]);
    for (int j = 0; j < c; ++j) {
      int64_t idx = static_cast<int64_t>(i) * c + j;
      out[idx] = mean[j] + psi * (w[idx] - mean[j]);
    }
  }
  return out;
}

std::vector<Tensor> latent_guidance(const Tensor& w, const StyleStats& stats,
                                    const std::vector<int>& classes,
                                    double strength, double fraction, int depth) {
  if (!std::isfinite(strength) || strength < 0.0) {
    throw ConfigError("guidance: strength must be finite and >= 0");
  }
  if (fraction < 0.0 || fraction > 1.0) throw ConfigError("guidance: fraction must be in [0, 1]");
  int guided_blocks = static_cast<int>(std::ceil(fraction * depth));
  std::vector<Tensor> styles(static_cast<size_t>(depth), w);
  if (strength == 1.0 || guided_blocks == 0) return styles;  // bit-exact identity

  int b = w.dim(0), c = w.dim(1);
  if (static_cast<int>(classes.size()) != b) throw ConfigError("guidance: batch mismatch");
  if (stats.class_means.empty()) throw ConfigError("guidance: stats lack class means");
  Tensor guided(w.shape());
  for (int i = 0; i < b; ++i) {
    int cls = classes[static_cast<size_t>(i)];
    if (cls < 0 || cls >= static_cast<int>(stats.class_means.size())) {
      throw ConfigError("guidance: class absent from stats");
    }
    const Tensor& mean = stats.class_means[static_cast<size_t>(cls)];
    for (int j = 0; j < c; ++j) {
      int64_t idx = static_cast<int64_t>(i) * c + j;
      guided[idx] = mean[j] + strength * (w[idx] - mean[j]);
    }
  }
  for (int blk = 0; blk < guided_blocks; ++blk) styles[static_cast<size_t>(blk)] = guided;
  return styles;
}

}  // namespace gat::gen
