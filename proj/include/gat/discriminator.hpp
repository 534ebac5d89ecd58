#pragma once

#include <string>
#include <vector>

#include "gat/autograd.hpp"
#include "gat/config.hpp"
#include "gat/nn.hpp"
#include "gat/rng.hpp"

namespace gat::dis {

// Token-to-teacher projector for the alignment loss. use_act=false is the
// identity-diagnostic configuration used by tests.
struct Projector {
  nn::Linear l1, l2, l3;
  bool use_act = true;
};
Projector make_projector(nn::ParamStore& store, int in_dim, int hidden, int out_dim,
                         RngStream& rng);
Projector make_identity_projector(nn::ParamStore& store, int dim);
ag::NodePtr project_tokens(const Projector& p, const ag::NodePtr& tokens);

struct DisOutput {
  ag::NodePtr logits;  // [B]
  ag::NodePtr cls;     // [B, C], final-norm applied
  ag::NodePtr tokens;  // [B, N+1, C], final-norm applied ([cls] first)
};

class Discriminator {
 public:
  // ingest "concat": one pass over channel-concatenated levels;
  // "separate": one pass per level with summed logits (ablation path).
  Discriminator(const ModelConfig& cfg, const std::string& ingest, int teacher_dim,
                int repa_hidden, RngStream& init_rng);

  DisOutput discriminate(const std::vector<ag::NodePtr>& stack,
                         const std::vector<int>& classes, bool use_rope = true);
  ag::NodePtr projection_logit(const ag::NodePtr& cls, const std::vector<int>& classes);
  ag::NodePtr repa_project(const ag::NodePtr& tokens);

  nn::ParamStore& params() { return store_; }
  const ModelConfig& config() const { return cfg_; }
  const std::string& ingest() const { return ingest_; }

 private:
  ag::NodePtr forward_tokens(const ag::NodePtr& images, bool use_rope);

  ModelConfig cfg_;
  std::string ingest_;
  nn::ParamStore store_;
  nn::Linear patchify_;
  ag::NodePtr cls_token_;  // [C]
  std::vector<nn::DisBlockParams> blocks_;
  nn::Linear logit_head_;      // [C, 1]
  ag::NodePtr class_embed_;    // [num_classes, C]
  Projector projector_;
  nn::RopeTables tables_;
};

}  // namespace gat::dis
