#include "gat/nn.hpp"

#include <cmath>

#include "gat/errors.hpp"

namespace gat::nn {

using ag::NodePtr;

ag::NodePtr ParamStore::add(const std::string& name, Tensor init, double lr_mult) {
  for (const auto& p : params_) {
    if (p.name == name) throw ConfigError("duplicate parameter name: " + name);
  }
  NodePtr n = ag::leaf(std::move(init), true);
  params_.push_back({name, n, lr_mult});
  return n;
}

int64_t ParamStore::count() const {
  int64_t total = 0;
  for (const auto& p : params_) total += p.node->value.size();
  return total;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.node->grad.release();
}

void ParamStore::set_trainable(bool on) {
  for (auto& p : params_) p.node->requires_grad = on;
}

const Param& ParamStore::at(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ConfigError("no such parameter: " + name);
}

Tensor trunc_normal(RngStream& rng, std::vector<int> shape, double std) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) {
    double v = rng.normal();
    while (std::abs(v) > 2.0) v = rng.normal();
    t[i] = v * std;
  }
  return t;
}

ag::NodePtr rms_normalize(const ag::NodePtr& x, double eps) {
  if (!x->value.all_finite()) throw DivergenceError("rms_normalize: non-finite input");
  return ag::rms_norm_last(x, eps);
}

Linear make_linear(ParamStore& store, const std::string& name, int in, int out,
                   RngStream& rng, double lr_mult, bool bias, double init_std) {
  Linear lin;
  lin.w = store.add(name + ".w", trunc_normal(rng, {in, out}, init_std), lr_mult);
  if (bias) lin.b = store.add(name + ".b", Tensor::zeros({out}), lr_mult);
  return lin;
}

ag::NodePtr apply_linear(const Linear& lin, const ag::NodePtr& x) {
  if (lin.b) return ag::linear(x, lin.w, lin.b);
  return ag::matmul(x, lin.w);
}

RopeTables make_rope_tables(int grid_hw, int head_dim, bool with_cls) {
  if (head_dim % 2 != 0) throw ConfigError("rope: head dim must be even");
  int pairs = head_dim / 2;
  int pairs_row = (pairs + 1) / 2;
  int pairs_col = pairs - pairs_row;
  int n = grid_hw * grid_hw + (with_cls ? 1 : 0);
  RopeTables t;
  t.cos = Tensor({n, pairs});
  t.sin = Tensor({n, pairs});
  t.with_cls = with_cls;
  const double base = 10000.0;
  for (int tok = 0; tok < n; ++tok) {
    int g = with_cls ? tok - 1 : tok;
    double row = 0.0, col = 0.0;
    bool rotated = !(with_cls && tok == 0);
    if (rotated) {
      row = static_cast<double>(g / grid_hw);
      col = static_cast<double>(g % grid_hw);
    }
    for (int j = 0; j < pairs; ++j) {
      double angle = 0.0;
      if (rotated) {
        if (j < pairs_row) {
          angle = row * std::pow(base, -static_cast<double>(j) / pairs_row);
        } else if (pairs_col > 0) {
          angle = col * std::pow(base, -static_cast<double>(j - pairs_row) / pairs_col);
        }
      }
      t.cos[static_cast<int64_t>(tok) * pairs + j] = std::cos(angle);
      t.sin[static_cast<int64_t>(tok) * pairs + j] = std::sin(angle);
    }
  }
  return t;
}

AttentionParams make_attention(ParamStore& store, const std::string& name, int c,
                               RngStream& rng, double lr_mult) {
  AttentionParams p;
  p.qkv = make_linear(store, name + ".qkv", c, 3 * c, rng, lr_mult);
  p.o = make_linear(store, name + ".o", c, c, rng, lr_mult);
  return p;
}

ag::NodePtr attention(const AttentionParams& p, const ag::NodePtr& x, int heads,
                      const RopeTables& tables, bool use_rope) {
  int b = x->value.dim(0), t = x->value.dim(1), c = x->value.dim(2);
  if (c % heads != 0) throw ConfigError("attention: heads must divide width");
  int hd = c / heads;
  if (tables.cos.dim(0) != t) throw ConfigError("attention: rope table/token mismatch");

  NodePtr qkv = apply_linear(p.qkv, x);  // [B, T, 3C]
  NodePtr q = ag::head_split(qkv, 0, 3, heads);  // [B, H, T, hd]
  NodePtr k = ag::head_split(qkv, 1, 3, heads);
  NodePtr v = ag::head_split(qkv, 2, 3, heads);

  q = ag::rms_norm_last(q, kRmsEps);
  k = ag::rms_norm_last(k, kRmsEps);
  if (use_rope) {
    q = ag::rope(q, tables.cos, tables.sin);
    k = ag::rope(k, tables.cos, tables.sin);
  }

  NodePtr q3 = ag::reshape(q, {b * heads, t, hd});
  NodePtr k3 = ag::reshape(k, {b * heads, t, hd});
  NodePtr v3 = ag::reshape(v, {b * heads, t, hd});

  NodePtr scores = ag::scale(ag::bmm(q3, k3, false, true), 1.0 / std::sqrt(hd));
  if (!scores->value.all_finite()) {
    throw DivergenceError("attention logits went non-finite");
  }
  NodePtr attn = ag::softmax_last(scores);
  NodePtr out = ag::bmm(attn, v3);  // [B*H, T, hd]
  out = ag::head_merge(ag::reshape(out, {b, heads, t, hd}));  // [B, T, C]
  return apply_linear(p.o, out);
}

int swiglu_hidden(int c) {
  int raw = (8 * c + 2) / 3;  // ceil(8c/3)
  return (raw + 7) / 8 * 8;
}

FfnParams make_ffn(ParamStore& store, const std::string& name, int c,
                   RngStream& rng, double lr_mult) {
  int h = swiglu_hidden(c);
  FfnParams p;
  p.w13 = make_linear(store, name + ".w13", c, 2 * h, rng, lr_mult);
  p.w2 = make_linear(store, name + ".w2", h, c, rng, lr_mult);
  return p;
}

ag::NodePtr swiglu_ffn(const FfnParams& p, const ag::NodePtr& x) {
  int h = p.w2.w->value.dim(0);
  NodePtr gv = apply_linear(p.w13, x);  // [.., 2H]
  return apply_linear(p.w2, ag::mul(ag::silu(ag::slice_last(gv, 0, h)),
                                    ag::slice_last(gv, h, h)));
}

MappingParams make_mapping(ParamStore& store, int dz, int width_c,
                           int num_classes, RngStream& rng, double lr_mult) {
  MappingParams p;
  p.class_table = store.add("mapping.class_table",
                            trunc_normal(rng, {num_classes, dz}, 0.02), lr_mult);
  p.l1 = make_linear(store, "mapping.l1", 2 * dz, width_c, rng, lr_mult);
  p.l2 = make_linear(store, "mapping.l2", width_c, width_c, rng, lr_mult);
  p.num_classes = num_classes;
  return p;
}

ag::NodePtr mapping_forward(const MappingParams& p, const ag::NodePtr& z,
                            const std::vector<int>& classes) {
  if (static_cast<int>(classes.size()) != z->value.dim(0)) {
    throw ConfigError("mapping: class count must match batch");
  }
  for (int c : classes) {
    if (c < 0 || c >= p.num_classes) throw ConfigError("mapping: class id out of range");
  }
  NodePtr e = ag::embed_rows(p.class_table, classes);
  NodePtr h = ag::concat_last(z, e);
  return apply_linear(p.l2, ag::silu(apply_linear(p.l1, h)));
}

GatBlockParams make_gat_block(ParamStore& store, const std::string& name, int c,
                              RngStream& rng) {
  GatBlockParams p;
  p.attn = make_attention(store, name + ".attn", c, rng);
  p.ffn = make_ffn(store, name + ".ffn", c, rng);
  p.gate_w = store.add(name + ".gate.w", trunc_normal(rng, {c, 4 * c}, 0.02));
  return p;
}

Gates gate_forward(const GatBlockParams& p, const ag::NodePtr& style) {
  int c = p.gate_w->value.dim(0);
  NodePtr all = ag::matmul(style, p.gate_w);  // [B, 4C]
  Gates g;
  g.gamma_attn = ag::slice_last(all, 0, c);
  g.alpha_attn = ag::slice_last(all, c, c);
  g.gamma_ffn = ag::slice_last(all, 2 * c, c);
  g.alpha_ffn = ag::slice_last(all, 3 * c, c);
  return g;
}

ag::NodePtr gat_block(const GatBlockParams& p, const ag::NodePtr& x,
                      const Gates& g, int heads, const RopeTables& tables) {
  if (g.gamma_attn->value.dim(-1) != x->value.dim(-1)) {
    throw ConfigError("gat_block: gate width mismatch");
  }
  NodePtr h = ag::mul_gate(ag::rms_norm_last(x, kRmsEps), g.gamma_attn);
  NodePtr y = ag::add(x, ag::mul_gate(attention(p.attn, h, heads, tables), g.alpha_attn));
  NodePtr h2 = ag::mul_gate(ag::rms_norm_last(y, kRmsEps), g.gamma_ffn);
  return ag::add(y, ag::mul_gate(swiglu_ffn(p.ffn, h2), g.alpha_ffn));
}

void calibrate_gate_head(Tensor& gate_w, const Tensor& probe_styles, double target) {
  int c = gate_w.dim(0);
  int m = probe_styles.dim(0);
  if (probe_styles.dim(1) != c) throw ConfigError("calibrate: style width mismatch");
  for (int grp = 0; grp < 4; ++grp) {
    double sq = 0.0;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < c; ++j) {
        double acc = 0.0;
        for (int k = 0; k < c; ++k) {
          acc += probe_styles[static_cast<int64_t>(i) * c + k] *
                 gate_w[static_cast<int64_t>(k) * 4 * c + grp * c + j];
        }
        sq += acc * acc;
      }
    }
    double var = sq / (static_cast<double>(m) * c);
    if (var <= 0.0) throw ConfigError("calibrate: degenerate gate head");
    double s = std::sqrt(target / var);
    for (int k = 0; k < c; ++k) {
      for (int j = 0; j < c; ++j) {
        gate_w[static_cast<int64_t>(k) * 4 * c + grp * c + j] *= s;
      }
    }
  }
}

DisBlockParams make_dis_block(ParamStore& store, const std::string& name, int c,
                              RngStream& rng) {
  DisBlockParams p;
  p.attn = make_attention(store, name + ".attn", c, rng);
  p.ffn = make_ffn(store, name + ".ffn", c, rng);
  p.norm_attn = store.add(name + ".norm_attn", Tensor::full({c}, 1.0));
  p.ls_attn = store.add(name + ".ls_attn", Tensor::full({c}, 0.1));
  p.norm_ffn = store.add(name + ".norm_ffn", Tensor::full({c}, 1.0));
  p.ls_ffn = store.add(name + ".ls_ffn", Tensor::full({c}, 0.1));
  return p;
}

ag::NodePtr dis_block(const DisBlockParams& p, const ag::NodePtr& x, int heads,
                      const RopeTables& tables, bool use_rope) {
  NodePtr h = ag::mul_channels(ag::rms_norm_last(x, kRmsEps), p.norm_attn);
  NodePtr y = ag::add(x, ag::mul_channels(attention(p.attn, h, heads, tables, use_rope),
                                          p.ls_attn));
  NodePtr h2 = ag::mul_channels(ag::rms_norm_last(y, kRmsEps), p.norm_ffn);
  return ag::add(y, ag::mul_channels(swiglu_ffn(p.ffn, h2), p.ls_ffn));
}

}  // namespace gat::nn
