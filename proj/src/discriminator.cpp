#include "gat/discriminator.hpp"

#include "gat/errors.hpp"

namespace gat::dis {

using ag::NodePtr;

Projector make_projector(nn::ParamStore& store, int in_dim, int hidden, int out_dim,
                         RngStream& rng) {
  Projector p;
  p.l1 = nn::make_linear(store, "proj.l1", in_dim, hidden, rng);
  p.l2 = nn::make_linear(store, "proj.l2", hidden, hidden, rng);
  p.l3 = nn::make_linear(store, "proj.l3", hidden, out_dim, rng);
  return p;
}

Projector make_identity_projector(nn::ParamStore& store, int dim) {
  Projector p;
  Tensor eye = Tensor::zeros({dim, dim});
  for (int i = 0; i < dim; ++i) eye[static_cast<int64_t>(i) * dim + i] = 1.0;
  p.l1 = {store.add("proj.l1.w", eye.clone()), store.add("proj.l1.b", Tensor::zeros({dim}))};
  p.l2 = {store.add("proj.l2.w", eye.clone()), store.add("proj.l2.b", Tensor::zeros({dim}))};
  p.l3 = {store.add("proj.l3.w", eye.clone()), store.add("proj.l3.b", Tensor::zeros({dim}))};
  p.use_act = false;
  return p;
}

ag::NodePtr project_tokens(const Projector& p, const ag::NodePtr& tokens) {
  NodePtr h = nn::apply_linear(p.l1, tokens);
  if (p.use_act) h = ag::silu(h);
  h = nn::apply_linear(p.l2, h);
  if (p.use_act) h = ag::silu(h);
  return nn::apply_linear(p.l3, h);
}

Discriminator::Discriminator(const ModelConfig& cfg, const std::string& ingest,
                             int teacher_dim, int repa_hidden, RngStream& init_rng)
    : cfg_(cfg), ingest_(ingest) {
  cfg_.validate();
  if (ingest != "concat" && ingest != "separate") {
    throw ConfigError("discriminator: ingest must be \"concat\" or \"separate\"");
  }
  int c = cfg_.width_c;
  int in_dim = ingest == "concat" ? cfg_.stages_k * cfg_.patch_dim() : cfg_.patch_dim();
  patchify_ = nn::make_linear(store_, "patchify", in_dim, c, init_rng);
  cls_token_ = store_.add("cls", nn::trunc_normal(init_rng, {c}, 0.02));
  for (int b = 0; b < cfg_.depth; ++b) {
    blocks_.push_back(nn::make_dis_block(store_, "block" + std::to_string(b), c, init_rng));
  }
  logit_head_ = nn::make_linear(store_, "logit_head", c, 1, init_rng);
  class_embed_ = store_.add("class_embed",
                            nn::trunc_normal(init_rng, {cfg_.num_classes, c}, 0.02));
  projector_ = make_projector(store_, c, repa_hidden, teacher_dim, init_rng);
  tables_ = nn::make_rope_tables(cfg_.grid_hw(), cfg_.head_dim(), true);
}

ag::NodePtr Discriminator::forward_tokens(const ag::NodePtr& images, bool use_rope) {
  int b = images->value.dim(0);
  NodePtr tok = nn::apply_linear(patchify_, ag::patches_from_image(images, cfg_.patch_p));
  NodePtr cls = ag::reshape(ag::repeat_rows(cls_token_, b), {b, 1, cfg_.width_c});
  NodePtr x = ag::concat_dim1({cls, tok});
  for (auto& blk : blocks_) {
    x = nn::dis_block(blk, x, cfg_.heads, tables_, use_rope);
  }
  return ag::rms_norm_last(x, nn::kRmsEps);
}

DisOutput Discriminator::discriminate(const std::vector<ag::NodePtr>& stack,
                                      const std::vector<int>& classes, bool use_rope) {
  if (static_cast<int>(stack.size()) != cfg_.stages_k) {
    throw ConfigError("discriminate: expected " + std::to_string(cfg_.stages_k) +
                      " levels, got " + std::to_string(stack.size()));
  }
  for (const auto& level : stack) {
    if (level->value.ndim() != 4 || level->value.dim(1) != cfg_.image_channels ||
        level->value.dim(2) != cfg_.image_hw || level->value.dim(3) != cfg_.image_hw) {
      throw ConfigError("discriminate: level shape mismatch");
    }
    if (!level->value.all_finite()) throw DivergenceError("discriminate: non-finite input");
  }
  int b = stack[0]->value.dim(0);

  DisOutput out;
  if (ingest_ == "concat") {
    NodePtr images = ag::concat_dim1(stack);  // channel axis of [B, C, H, W]
    NodePtr tokens = forward_tokens(images, use_rope);
    out.tokens = tokens;
    out.cls = ag::reshape(ag::slice_dim1(tokens, 0, 1), {b, cfg_.width_c});
    out.logits = projection_logit(out.cls, classes);
  } else {
    // One pass per level; adversarial signal is the sum of per-level logits,
    // alignment tokens come from the clean final level.
    NodePtr total;
    for (int k = 0; k < cfg_.stages_k; ++k) {
      NodePtr tokens = forward_tokens(stack[static_cast<size_t>(k)], use_rope);
      NodePtr cls = ag::reshape(ag::slice_dim1(tokens, 0, 1), {b, cfg_.width_c});
      NodePtr logit = projection_logit(cls, classes);
      total = total ? ag::add(total, logit) : logit;
      if (k == cfg_.stages_k - 1) {
        out.tokens = tokens;
        out.cls = cls;
      }
    }
    out.logits = total;
  }
  return out;
}

ag::NodePtr Discriminator::projection_logit(const ag::NodePtr& cls,
                                            const std::vector<int>& classes) {
  if (static_cast<int>(classes.size()) != cls->value.dim(0)) {
    throw ConfigError("projection_logit: class count must match batch");
  }
  for (int c : classes) {
    if (c < 0 || c >= cfg_.num_classes) throw ConfigError("projection_logit: class out of range");
  }
  int b = cls->value.dim(0);
  NodePtr uncond = ag::reshape(nn::apply_linear(logit_head_, cls), {b});
  NodePtr embed = ag::embed_rows(class_embed_, classes);
  return ag::add(uncond, ag::row_dot(embed, cls));
}

ag::NodePtr Discriminator::repa_project(const ag::NodePtr& tokens) {
  return project_tokens(projector_, tokens);
}

}  // namespace gat::dis
