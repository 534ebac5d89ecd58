#pragma once

#include <string>
#include <vector>

#include "gat/autograd.hpp"
#include "gat/rng.hpp"
#include "gat/tensor.hpp"

namespace gat::nn {

constexpr double kRmsEps = 1e-6;

// A named trainable leaf plus its learning-rate multiplier (the mapping
// network trains 100x slower than the rest).
struct Param {
  std::string name;
  ag::NodePtr node;
  double lr_mult = 1.0;
};

class ParamStore {
 public:
  ag::NodePtr add(const std::string& name, Tensor init, double lr_mult = 1.0);
  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }
  int64_t count() const;  // total scalar parameters
  void zero_grad();
  // Toggling off skips gradient accumulation into these leaves (used for the
  // frozen-discriminator half of the generator step).
  void set_trainable(bool on);
  const Param& at(const std::string& name) const;  // ConfigError if absent

 private:
  std::vector<Param> params_;
};

// Normal draw clamped to ±2 std by redraw; the usual ViT init.
Tensor trunc_normal(RngStream& rng, std::vector<int> shape, double std);

// x / sqrt(mean(x^2) + eps) over the last dim; non-finite input raises
// DivergenceError (activations went bad, not the configuration).
ag::NodePtr rms_normalize(const ag::NodePtr& x, double eps = kRmsEps);

struct Linear {
  ag::NodePtr w;  // [in, out]
  ag::NodePtr b;  // [out] or null
};
Linear make_linear(ParamStore& store, const std::string& name, int in, int out,
                   RngStream& rng, double lr_mult = 1.0, bool bias = true,
                   double init_std = 0.02);
ag::NodePtr apply_linear(const Linear& lin, const ag::NodePtr& x);

// Axial rotary tables over a square grid: the first ceil(pairs/2) rotation
// pairs encode the row coordinate, the rest the column. Row 0 is an unrotated
// [cls] slot when with_cls is set.
struct RopeTables {
  Tensor cos;  // [T, head_dim/2]
  Tensor sin;
  bool with_cls = false;
};
RopeTables make_rope_tables(int grid_hw, int head_dim, bool with_cls);

struct AttentionParams {
  Linear qkv;  // [C, 3C], column groups q | k | v
  Linear o;
};
AttentionParams make_attention(ParamStore& store, const std::string& name, int c,
                               RngStream& rng, double lr_mult = 1.0);
// Multi-head attention with per-head qk RMS norm, then rotary positions.
// use_rope=false is the diagnostic position-free mode.
// Throws DivergenceError when attention logits go non-finite.
ag::NodePtr attention(const AttentionParams& p, const ag::NodePtr& x, int heads,
                      const RopeTables& tables, bool use_rope = true);

int swiglu_hidden(int c);  // ceil(8c/3) rounded up to a multiple of 8

struct FfnParams {
  Linear w13;  // [C, 2H], column groups gate | value: out = w2(silu(g) * v)
  Linear w2;   // [H, C]
};
FfnParams make_ffn(ParamStore& store, const std::string& name, int c,
                   RngStream& rng, double lr_mult = 1.0);
ag::NodePtr swiglu_ffn(const FfnParams& p, const ag::NodePtr& x);

// Mapping network: w = L2(silu(L1([z; embed(c)]))). All parameters carry
// lr_mult so the optimizer trains the group 100x slower.
struct MappingParams {
  ag::NodePtr class_table;  // [num_classes, dz]
  Linear l1, l2;
  int num_classes = 0;
};
MappingParams make_mapping(ParamStore& store, int dz, int width_c,
                           int num_classes, RngStream& rng, double lr_mult);
ag::NodePtr mapping_forward(const MappingParams& p, const ag::NodePtr& z,
                            const std::vector<int>& classes);

// Per-sample modulation gates, each [B, C].
struct Gates {
  ag::NodePtr gamma_attn, alpha_attn, gamma_ffn, alpha_ffn;
};

// Style-modulated residual block. The gate head is a zero-bias linear from
// the style vector; its scale is calibrated at build time so fresh gates
// have variance ~0.1 (near-identity start).
struct GatBlockParams {
  AttentionParams attn;
  FfnParams ffn;
  ag::NodePtr gate_w;  // [C, 4C], groups: gamma_attn | alpha_attn | gamma_ffn | alpha_ffn
};
GatBlockParams make_gat_block(ParamStore& store, const std::string& name, int c,
                              RngStream& rng);
Gates gate_forward(const GatBlockParams& p, const ag::NodePtr& style);
ag::NodePtr gat_block(const GatBlockParams& p, const ag::NodePtr& x,
                      const Gates& g, int heads, const RopeTables& tables);

// Rescales gate head columns in place so each gate group has empirical
// variance `target` over the given probe styles ([M, C] values).
void calibrate_gate_head(Tensor& gate_w, const Tensor& probe_styles, double target);

// Unconditional block: learned norm scale (init 1) and Layerscale (init 0.1)
// replace the style gates.
struct DisBlockParams {
  AttentionParams attn;
  FfnParams ffn;
  ag::NodePtr norm_attn, ls_attn, norm_ffn, ls_ffn;  // each [C]
};
DisBlockParams make_dis_block(ParamStore& store, const std::string& name, int c,
                              RngStream& rng);
ag::NodePtr dis_block(const DisBlockParams& p, const ag::NodePtr& x, int heads,
                      const RopeTables& tables, bool use_rope = true);

}  // namespace gat::nn
