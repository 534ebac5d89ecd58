#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "gat/autograd.hpp"
#include "gat/discriminator.hpp"
#include "gat/errors.hpp"
#include "gat/generator.hpp"
#include "gat/rng.hpp"

using namespace gat;
using ag::NodePtr;

namespace {

ModelConfig toy() {
  ModelConfig mc;
  mc.width_c = 32;
  mc.depth = 4;
  mc.heads = 2;
  mc.patch_p = 2;
  mc.latent_dz = 16;
  mc.stages_k = 2;
  mc.num_classes = 4;
  mc.image_channels = 3;
  mc.image_hw = 8;
  return mc;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST_CASE("generator produces one image per level with the right shapes") {
  ModelConfig mc = toy();
  RngStream init(1);
  gen::Generator g(mc, init);
  RngStream zr(2);
  Tensor z = zr.normal_tensor({3, mc.latent_dz});
  std::vector<int> cls = {0, 1, 3};

  gen::GeneratorOutput out = g.generate(ag::constant(z), cls);
  REQUIRE(static_cast<int>(out.images.size()) == mc.stages_k);
  for (const auto& img : out.images) {
    CHECK(img->value.shape() ==
          std::vector<int>{3, mc.image_channels, mc.image_hw, mc.image_hw});
    CHECK(img->value.all_finite());
  }
  CHECK(out.style->value.shape() == std::vector<int>{3, mc.width_c});

  // Same seed model + same draw = same output; class change moves it.
  RngStream init2(1);
  gen::Generator g2(mc, init2);
  gen::GeneratorOutput out2 = g2.generate(ag::constant(z), cls);
  CHECK(max_abs_diff(out.images.back()->value, out2.images.back()->value) == 0.0);
  gen::GeneratorOutput out3 = g.generate(ag::constant(z), {1, 1, 1});
  CHECK(max_abs_diff(out.images.back()->value, out3.images.back()->value) > 1e-9);
}

TEST_CASE("generate equals map_style followed by run_from_style") {
  ModelConfig mc = toy();
  RngStream init(3);
  gen::Generator g(mc, init);
  RngStream zr(4);
  Tensor z = zr.normal_tensor({2, mc.latent_dz});
  std::vector<int> cls = {2, 0};

  gen::GeneratorOutput a = g.generate(ag::constant(z), cls);
  NodePtr style = g.map_style(ag::constant(z), cls);
  gen::GeneratorOutput b = g.run_from_style(style);
  for (int k = 0; k < mc.stages_k; ++k)
    CHECK(max_abs_diff(a.images[k]->value, b.images[k]->value) == 0.0);
}

TEST_CASE("block capture and skip hooks work") {
  ModelConfig mc = toy();
  RngStream init(5);
  gen::Generator g(mc, init);
  RngStream zr(6);
  Tensor z = zr.normal_tensor({2, mc.latent_dz});
  std::vector<int> cls = {0, 1};

  gen::GenerateOptions opts;
  std::vector<Tensor> caps;
  opts.capture = &caps;
  gen::GeneratorOutput full = g.generate(ag::constant(z), cls, opts);
  REQUIRE(static_cast<int>(caps.size()) == mc.depth);
  for (const Tensor& t : caps)
    CHECK(t.shape() == std::vector<int>{2, mc.tokens(), mc.width_c});

  gen::GenerateOptions skip;
  skip.skip_block = 1;
  gen::GeneratorOutput ablated = g.generate(ag::constant(z), cls, skip);
  CHECK(max_abs_diff(full.images.back()->value, ablated.images.back()->value) > 1e-12);

  gen::GenerateOptions bad;
  bad.skip_block = mc.depth;
  CHECK_THROWS_AS((void)g.generate(ag::constant(z), cls, bad), ConfigError);
}

TEST_CASE("per-block styles override the mapping output") {
  ModelConfig mc = toy();
  RngStream init(7);
  gen::Generator g(mc, init);
  RngStream zr(8);
  Tensor z = zr.normal_tensor({2, mc.latent_dz});
  std::vector<int> cls = {3, 3};

  NodePtr w = g.map_style(ag::constant(z), cls);
  std::vector<NodePtr> same(mc.depth, w);
  gen::GenerateOptions opts;
  opts.block_styles = &same;
  gen::GeneratorOutput via_styles = g.run_from_style(w, opts);
  gen::GeneratorOutput plain = g.run_from_style(w);
  CHECK(max_abs_diff(via_styles.images.back()->value,
                     plain.images.back()->value) == 0.0);

  // A different style per block changes the output.
  RngStream o(9);
  std::vector<NodePtr> other(mc.depth, ag::constant(o.normal_tensor({2, mc.width_c})));
  opts.block_styles = &other;
  gen::GeneratorOutput changed = g.run_from_style(w, opts);
  CHECK(max_abs_diff(changed.images.back()->value, plain.images.back()->value) > 1e-9);

  std::vector<NodePtr> short_list(mc.depth - 1, w);
  opts.block_styles = &short_list;
  CHECK_THROWS_AS((void)g.run_from_style(w, opts), ConfigError);
}

TEST_CASE("style stats, truncation, and guidance identities") {
  ModelConfig mc = toy();
  RngStream init(10);
  gen::Generator g(mc, init);
  gen::StyleStats stats = gen::collect_style_stats(g, 16, 77);
  REQUIRE(static_cast<int>(stats.class_means.size()) == mc.num_classes);
  CHECK(stats.sample_count == 16 * mc.num_classes);
  CHECK(stats.global_mean.shape() == std::vector<int>{mc.width_c});

  // Global mean is the average of the class means (equal draws per class).
  Tensor avg = Tensor::zeros({mc.width_c});
  for (const Tensor& m : stats.class_means)
    for (int i = 0; i < mc.width_c; ++i) avg.data()[i] += m.data()[i];
  for (int i = 0; i < mc.width_c; ++i) avg.data()[i] /= mc.num_classes;
  CHECK(max_abs_diff(avg, stats.global_mean) < 1e-12);

  RngStream zr(11);
  Tensor z = zr.normal_tensor({2, mc.latent_dz});
  std::vector<int> cls = {1, 2};
  Tensor w = g.map_style(ag::constant(z), cls)->value;

  // psi = 1 is a bit-exact identity, psi = 0 collapses to the class mean.
  Tensor same = gen::truncate_style(w, stats, cls, 1.0);
  for (int64_t i = 0; i < w.size(); ++i) REQUIRE(same.data()[i] == w.data()[i]);
  Tensor zero = gen::truncate_style(w, stats, cls, 0.0);
  for (int i = 0; i < mc.width_c; ++i) {
    CHECK(zero.data()[i] == stats.class_means[1].data()[i]);
    CHECK(zero.data()[mc.width_c + i] == stats.class_means[2].data()[i]);
  }

  // strength = 1 short-circuits to depth copies of w.
  std::vector<Tensor> styles = gen::latent_guidance(w, stats, cls, 1.0, 0.5, mc.depth);
  REQUIRE(static_cast<int>(styles.size()) == mc.depth);
  for (const Tensor& s : styles)
    for (int64_t i = 0; i < w.size(); ++i) REQUIRE(s.data()[i] == w.data()[i]);

  // strength 2, fraction 0.5: first half amplified, second half untouched.
  styles = gen::latent_guidance(w, stats, cls, 2.0, 0.5, mc.depth);
  for (int blk = 0; blk < mc.depth; ++blk)
    for (int s = 0; s < 2; ++s)
      for (int i = 0; i < mc.width_c; ++i) {
        double mean = stats.class_means[cls[s]].data()[i];
        double base = w.data()[s * mc.width_c + i];
        double want = blk < mc.depth / 2 ? mean + 2.0 * (base - mean) : base;
        REQUIRE(styles[blk].data()[s * mc.width_c + i] ==
                doctest::Approx(want).epsilon(1e-15));
      }

  // fraction 0 guides nothing even at high strength.
  styles = gen::latent_guidance(w, stats, cls, 5.0, 0.0, mc.depth);
  for (const Tensor& s : styles)
    for (int64_t i = 0; i < w.size(); ++i) REQUIRE(s.data()[i] == w.data()[i]);
}

TEST_CASE("discriminator emits logits, cls, and tokens for both ingest modes") {
  ModelConfig mc = toy();
  for (const std::string ingest : {"concat", "separate"}) {
    RngStream init(12);
    dis::Discriminator d(mc, ingest, 16, 32, init);
    RngStream xr(13);
    int b = 3, k = mc.stages_k;
    std::vector<NodePtr> stack;
    for (int i = 0; i < k; ++i)
      stack.push_back(ag::constant(
          xr.normal_tensor({b, mc.image_channels, mc.image_hw, mc.image_hw})));
    std::vector<int> cls = {0, 2, 3};

    dis::DisOutput out = d.discriminate(stack, cls);
    CHECK(out.logits->value.shape() == std::vector<int>{b});
    CHECK(out.cls->value.shape() == std::vector<int>{b, mc.width_c});
    CHECK(out.tokens->value.shape() ==
          std::vector<int>{b, mc.tokens() + 1, mc.width_c});
    CHECK(out.logits->value.all_finite());

    // Projection head responds to the class label.
    NodePtr pl0 = d.projection_logit(out.cls, {0, 0, 0});
    NodePtr pl1 = d.projection_logit(out.cls, {1, 1, 1});
    CHECK(max_abs_diff(pl0->value, pl1->value) > 1e-12);

    // Same construction, same input, same logits.
    RngStream init2(12);
    dis::Discriminator d2(mc, ingest, 16, 32, init2);
    dis::DisOutput out2 = d2.discriminate(stack, cls);
    CHECK(max_abs_diff(out.logits->value, out2.logits->value) == 0.0);

    std::vector<NodePtr> bad = stack;
    bad[0] = ag::constant(Tensor::full(
        {b, mc.image_channels, mc.image_hw, mc.image_hw},
        std::numeric_limits<double>::quiet_NaN()));
    CHECK_THROWS_AS((void)d.discriminate(bad, cls), DivergenceError);
  }
}

TEST_CASE("ingest modes are genuinely different paths") {
  ModelConfig mc = toy();
  RngStream init(14);
  dis::Discriminator dc(mc, "concat", 16, 32, init);
  RngStream init2(14);
  dis::Discriminator ds(mc, "separate", 16, 32, init2);
  CHECK(dc.params().count() != ds.params().count());
  CHECK_THROWS_AS(dis::Discriminator(mc, "stacked", 16, 32, init), ConfigError);
}

TEST_CASE("repa projector maps tokens to teacher width; identity variant is exact") {
  ModelConfig mc = toy();
  RngStream init(15);
  dis::Discriminator d(mc, "concat", 16, 32, init);
  RngStream xr(16);
  Tensor toks = xr.normal_tensor({2, mc.tokens() + 1, mc.width_c});
  NodePtr proj = d.repa_project(ag::constant(toks));
  CHECK(proj->value.shape() == std::vector<int>{2, mc.tokens() + 1, 16});

  nn::ParamStore store;
  dis::Projector id = dis::make_identity_projector(store, mc.width_c);
  NodePtr same = dis::project_tokens(id, ag::constant(toks));
  CHECK(max_abs_diff(same->value, toks) == 0.0);
}
