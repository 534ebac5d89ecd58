#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "gat/autograd.hpp"
#include "gat/errors.hpp"
#include "gat/rng.hpp"

using namespace gat;
using namespace gat::ag;

namespace {

using OpFn = std::function<NodePtr(const std::vector<NodePtr>&)>;

// Loss = sum(w ⊙ op(inputs)) with a fixed random weight so gradients are
// direction-sensitive. Analytic grads come off the tape; the reference is a
// central difference on each input element.
void gradcheck(const OpFn& fn, std::vector<Tensor> inputs, uint64_t seed,
               double h = 1e-6, double tol = 1e-6) {
  std::vector<NodePtr> nodes;
  for (auto& t : inputs) nodes.push_back(leaf(t.clone(), true));
  NodePtr out = fn(nodes);
  RngStream wr(seed);
  Tensor w = wr.normal_tensor(out->value.shape());
  NodePtr loss = sum_all(mul(out, constant(w)));
  backward(loss);

  auto eval = [&](const std::vector<Tensor>& ts) {
    NoGradGuard ng;
    std::vector<NodePtr> ns;
    for (const auto& t : ts) ns.push_back(leaf(t, false));
    NodePtr o = fn(ns);
    double s = 0.0;
    for (int64_t i = 0; i < o->value.size(); ++i) s += o->value[i] * w[i];
    return s;
  };

  for (size_t k = 0; k < inputs.size(); ++k) {
    REQUIRE(nodes[k]->grad.defined());
    for (int64_t i = 0; i < inputs[k].size(); ++i) {
      double keep = inputs[k][i];
      inputs[k][i] = keep + h;
      double lp = eval(inputs);
      inputs[k][i] = keep - h;
      double lm = eval(inputs);
      inputs[k][i] = keep;
      double fd = (lp - lm) / (2.0 * h);
      double an = nodes[k]->grad[i];
      double err = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
      INFO("input ", k, " elem ", i, " analytic ", an, " fd ", fd);
      CHECK(err < tol);
    }
  }
}

Tensor randn(uint64_t seed, std::vector<int> shape, double mean = 0.0,
             double std = 1.0) {
  RngStream r(seed);
  return r.normal_tensor(std::move(shape), mean, std);
}

}  // namespace

TEST_CASE("gradcheck elementwise binary ops") {
  auto a = randn(1, {2, 3, 4});
  auto b = randn(2, {2, 3, 4});
  gradcheck([](const std::vector<NodePtr>& v) { return add(v[0], v[1]); }, {a, b}, 10);
  gradcheck([](const std::vector<NodePtr>& v) { return sub(v[0], v[1]); }, {a, b}, 11);
  gradcheck([](const std::vector<NodePtr>& v) { return mul(v[0], v[1]); }, {a, b}, 12);
  auto denom = randn(3, {2, 3, 4}, 3.0, 0.25);  // bounded away from zero
  gradcheck([](const std::vector<NodePtr>& v) { return div(v[0], v[1]); }, {a, denom}, 13);
}

TEST_CASE("gradcheck elementwise unary ops") {
  auto x = randn(4, {3, 5});
  gradcheck([](const std::vector<NodePtr>& v) { return scale(v[0], -1.7); }, {x}, 14);
  gradcheck([](const std::vector<NodePtr>& v) { return affine(v[0], 2.5, -0.3); }, {x}, 15);
  gradcheck([](const std::vector<NodePtr>& v) { return silu(v[0]); }, {x}, 16);
  gradcheck([](const std::vector<NodePtr>& v) { return softplus(v[0]); }, {x}, 17);
  auto pos = randn(5, {3, 5}, 4.0, 0.5);
  gradcheck([](const std::vector<NodePtr>& v) { return sqrt_elem(v[0]); }, {pos}, 18);
}

TEST_CASE("softplus matches log(1+e^x) and stays finite at extremes") {
  auto x = leaf(Tensor::from({-800.0, -20.0, -1.0, 0.0, 1.0, 20.0, 800.0}, {7}), false);
  NodePtr y = softplus(x);
  CHECK(y->value.all_finite());
  for (int i = 1; i < 6; ++i) {
    CHECK(y->value[i] == doctest::Approx(std::log1p(std::exp(x->value[i]))).epsilon(1e-12));
  }
  CHECK(y->value[0] == doctest::Approx(0.0));
  CHECK(y->value[6] == doctest::Approx(800.0));
}

TEST_CASE("gradcheck channel broadcasts") {
  auto x = randn(6, {2, 3, 4});
  auto b = randn(7, {4});
  gradcheck([](const std::vector<NodePtr>& v) { return add_channels(v[0], v[1]); }, {x, b}, 19);
  gradcheck([](const std::vector<NodePtr>& v) { return mul_channels(v[0], v[1]); }, {x, b}, 20);
  auto g = randn(8, {2, 4});
  gradcheck([](const std::vector<NodePtr>& v) { return mul_gate(v[0], v[1]); }, {x, g}, 21);
}

TEST_CASE("gradcheck matmul") {
  auto x = randn(9, {2, 3, 4});
  auto w = randn(10, {4, 5});
  gradcheck([](const std::vector<NodePtr>& v) { return matmul(v[0], v[1]); }, {x, w}, 22);
}

TEST_CASE("gradcheck linear and equivalence with matmul plus bias") {
  auto x = randn(60, {2, 3, 4});
  auto w = randn(61, {4, 5});
  auto b = randn(62, {5});
  gradcheck([](const std::vector<NodePtr>& v) { return linear(v[0], v[1], v[2]); },
            {x, w, b}, 63);
  NodePtr fused = linear(leaf(x.clone(), false), leaf(w.clone(), false),
                         leaf(b.clone(), false));
  NodePtr split = add_channels(matmul(leaf(x.clone(), false), leaf(w.clone(), false)),
                               leaf(b.clone(), false));
  for (int64_t i = 0; i < fused->value.size(); ++i) {
    CHECK(fused->value[i] == doctest::Approx(split->value[i]).epsilon(1e-12));
  }
}

TEST_CASE("gradcheck head split and merge") {
  // Packed projection [B, T, S*H*hd] with S=3, H=2, hd=2.
  auto x = randn(64, {2, 3, 12});
  for (int s = 0; s < 3; ++s) {
    gradcheck([s](const std::vector<NodePtr>& v) { return head_split(v[0], s, 3, 2); },
              {x}, 65 + s);
  }
  // All three sections of one parent: exercises repeated accumulation.
  gradcheck(
      [](const std::vector<NodePtr>& v) {
        return add(add(head_split(v[0], 0, 3, 2), head_split(v[0], 1, 3, 2)),
                   head_split(v[0], 2, 3, 2));
      },
      {x}, 68);
  auto h = randn(69, {2, 2, 3, 2});
  gradcheck([](const std::vector<NodePtr>& v) { return head_merge(v[0]); }, {h}, 70);
  // Merge inverts a single-section split.
  NodePtr n = leaf(x.clone(), false);
  NodePtr rt = head_merge(head_split(n, 0, 1, 2));
  for (int64_t i = 0; i < x.size(); ++i) {
    CHECK(rt->value[i] == doctest::Approx(x[i]).epsilon(1e-12));
  }
}

TEST_CASE("gradcheck bmm all transpose modes") {
  for (int ta = 0; ta < 2; ++ta) {
    for (int tb = 0; tb < 2; ++tb) {
      auto a = ta ? randn(23, {3, 4, 2}) : randn(23, {3, 2, 4});
      auto b = tb ? randn(24, {3, 5, 4}) : randn(24, {3, 4, 5});
      gradcheck(
          [ta, tb](const std::vector<NodePtr>& v) {
            return bmm(v[0], v[1], ta != 0, tb != 0);
          },
          {a, b}, 25 + ta * 2 + tb);
    }
  }
}

TEST_CASE("gradcheck shape ops") {
  auto x = randn(30, {2, 3, 4});
  gradcheck([](const std::vector<NodePtr>& v) { return reshape(v[0], {6, 4}); }, {x}, 31);
  auto x4 = randn(32, {2, 3, 4, 5});
  gradcheck([](const std::vector<NodePtr>& v) { return transpose_12(v[0]); }, {x4}, 33);
  gradcheck([](const std::vector<NodePtr>& v) { return slice_last(v[0], 1, 2); }, {x}, 34);
  gradcheck([](const std::vector<NodePtr>& v) { return slice_dim1(v[0], 1, 2); }, {x}, 35);
  auto y = randn(36, {2, 3, 2});
  gradcheck([](const std::vector<NodePtr>& v) { return concat_last(v[0], v[1]); }, {x, y}, 37);
  auto z = randn(38, {2, 1, 4});
  gradcheck(
      [](const std::vector<NodePtr>& v) {
        return concat_dim1({v[0], v[1], v[2]});
      },
      {x, z, randn(39, {2, 2, 4})}, 40);
  auto vrow = randn(41, {4});
  gradcheck([](const std::vector<NodePtr>& v) { return repeat_rows(v[0], 3); }, {vrow}, 42);
}

TEST_CASE("transpose_12 round-trips") {
  auto x = randn(43, {2, 3, 4, 5});
  auto n = leaf(x, false);
  auto back = transpose_12(transpose_12(n));
  for (int64_t i = 0; i < x.size(); ++i) CHECK(back->value[i] == x[i]);
}

TEST_CASE("gradcheck reductions") {
  auto x = randn(44, {3, 4});
  gradcheck([](const std::vector<NodePtr>& v) { return sum_all(v[0]); }, {x}, 45);
  gradcheck([](const std::vector<NodePtr>& v) { return mean_all(v[0]); }, {x}, 46);
  auto y = randn(47, {3, 4});
  gradcheck([](const std::vector<NodePtr>& v) { return row_dot(v[0], v[1]); }, {x, y}, 48);
}

TEST_CASE("gradcheck softmax and rms norm") {
  auto x = randn(49, {2, 3, 6});
  gradcheck([](const std::vector<NodePtr>& v) { return softmax_last(v[0]); }, {x}, 50,
            1e-6, 2e-6);
  gradcheck([](const std::vector<NodePtr>& v) { return rms_norm_last(v[0], 1e-6); }, {x}, 51,
            1e-6, 2e-6);
}

TEST_CASE("softmax rows sum to one and rms norm hits unit mean square") {
  auto x = randn(52, {4, 7});
  auto sm = softmax_last(leaf(x, false));
  for (int r = 0; r < 4; ++r) {
    double s = 0.0;
    for (int c = 0; c < 7; ++c) s += sm->value[r * 7 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  auto rn = rms_norm_last(leaf(x, false), 0.0);
  for (int r = 0; r < 4; ++r) {
    double ms = 0.0;
    for (int c = 0; c < 7; ++c) ms += rn->value[r * 7 + c] * rn->value[r * 7 + c];
    CHECK(ms / 7.0 == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gradcheck rope") {
  RngStream tr(53);
  int t = 3, d = 4;
  Tensor cos_tab({t, d / 2}), sin_tab({t, d / 2});
  for (int64_t i = 0; i < cos_tab.size(); ++i) {
    double th = tr.uniform() * 6.28318;
    cos_tab[i] = std::cos(th);
    sin_tab[i] = std::sin(th);
  }
  auto x = randn(54, {2, 2, t, d});
  gradcheck(
      [&](const std::vector<NodePtr>& v) { return rope(v[0], cos_tab, sin_tab); },
      {x}, 55);
  // rotation preserves the norm of each pair
  auto y = rope(leaf(x, false), cos_tab, sin_tab);
  double nx = 0.0, ny = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) {
    nx += x[i] * x[i];
    ny += y->value[i] * y->value[i];
  }
  CHECK(nx == doctest::Approx(ny).epsilon(1e-12));
}

TEST_CASE("gradcheck patch ops and round-trip") {
  auto img = randn(56, {2, 3, 4, 4});
  gradcheck([](const std::vector<NodePtr>& v) { return patches_from_image(v[0], 2); },
            {img}, 57);
  auto tok = randn(58, {2, 4, 12});
  gradcheck(
      [](const std::vector<NodePtr>& v) { return image_from_patches(v[0], 2, 3, 4, 4); },
      {tok}, 59);

  auto n = leaf(img, false);
  auto rt = image_from_patches(patches_from_image(n, 2), 2, 3, 4, 4);
  for (int64_t i = 0; i < img.size(); ++i) CHECK(rt->value[i] == img[i]);
}

TEST_CASE("patch layout is raster order, channel-major inside a patch") {
  // 1x1x2x2 image with patch 2: single token [c0p00 c0p01 c0p10 c0p11].
  Tensor img = Tensor::from({1.0, 2.0, 3.0, 4.0}, {1, 1, 2, 2});
  auto tok = patches_from_image(leaf(img, false), 2);
  CHECK(tok->value.dim(1) == 1);
  for (int i = 0; i < 4; ++i) CHECK(tok->value[i] == img[i]);

  // two channels: channel blocks are contiguous
  Tensor img2 = Tensor::from({1, 2, 3, 4, 10, 20, 30, 40}, {1, 2, 2, 2});
  auto tok2 = patches_from_image(leaf(img2, false), 2);
  CHECK(tok2->value[3] == 4.0);
  CHECK(tok2->value[4] == 10.0);
}

TEST_CASE("gradcheck embed_rows with repeated ids") {
  auto table = randn(60, {5, 3});
  std::vector<int> ids = {1, 3, 1, 0};  // repeat forces scatter-add
  gradcheck([&](const std::vector<NodePtr>& v) { return embed_rows(v[0], ids); },
            {table}, 61);
}

TEST_CASE("backward handles reuse and diamond graphs") {
  // y = x*x + x  ->  dy/dx = 2x + 1
  Tensor xv = Tensor::from({1.5, -2.0, 0.25}, {3});
  auto x = leaf(xv, true);
  auto y = sum_all(add(mul(x, x), x));
  backward(y);
  for (int i = 0; i < 3; ++i) {
    CHECK(x->grad[i] == doctest::Approx(2.0 * xv[i] + 1.0).epsilon(1e-12));
  }
}

TEST_CASE("backward frees intermediate buffers but keeps leaves") {
  auto x = leaf(randn(62, {4, 4}), true);
  auto mid = silu(matmul(x, leaf(randn(63, {4, 4}), false)));
  auto loss = mean_all(mid);
  backward(loss);
  CHECK(x->grad.defined());
  CHECK(x->value.defined());
  CHECK(!mid->value.defined());  // tape buffer released during backward
  CHECK(!loss->value.defined());
}

TEST_CASE("no-grad mode records no tape") {
  NoGradGuard ng;
  auto x = leaf(randn(64, {2, 2}), true);
  CHECK(!x->requires_grad);  // guard disables grad even for new leaves
  auto y = mul(x, x);
  CHECK(!y->requires_grad);
  CHECK(y->parents.empty());
}

TEST_CASE("grad accumulates across two backward passes on fresh graphs") {
  auto x = leaf(randn(65, {3}), true);
  backward(sum_all(scale(x, 2.0)));
  backward(sum_all(scale(x, 3.0)));
  for (int i = 0; i < 3; ++i) CHECK(x->grad[i] == doctest::Approx(5.0));
}

TEST_CASE("shape mismatches are rejected") {
  auto a = leaf(randn(66, {2, 3}), false);
  auto b = leaf(randn(67, {3, 2}), false);
  CHECK_THROWS_AS(add(a, b), ConfigError);
  CHECK_THROWS_AS(matmul(a, leaf(randn(68, {4, 2}), false)), ConfigError);
  CHECK_THROWS_AS(slice_last(a, 2, 5), ConfigError);
  CHECK_THROWS_AS(backward(a), ConfigError);  // non-scalar root
}
