#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "gat/autograd.hpp"
#include "gat/data.hpp"
#include "gat/errors.hpp"
#include "gat/rng.hpp"

using namespace gat;
using ag::NodePtr;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/gat_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("synthetic dataset is normalized, quantized, and deterministic") {
  data::LatentDataset ds = data::gen_synthetic(4, 25, 3, 8, 11);
  CHECK(ds.count() == 100);
  CHECK(ds.channels() == 3);
  CHECK(ds.hw() == 8);
  CHECK(ds.num_classes == 4);
  CHECK(ds.source == "synthetic");
  CHECK(ds.chan_mean.size() == 3);

  std::vector<int> per_class(4, 0);
  for (int l : ds.labels) ++per_class[l];
  for (int c : per_class) CHECK(c == 25);

  // Per-channel standardization survives the float32 round trip.
  for (int ch = 0; ch < 3; ++ch) {
    double sum = 0.0, sq = 0.0;
    int64_t n = 0;
    for (const Tensor& s : ds.samples)
      for (int i = 0; i < 64; ++i) {
        double v = s.data()[ch * 64 + i];
        CHECK(v == static_cast<double>(static_cast<float>(v)));
        sum += v;
        sq += v * v;
        ++n;
      }
    double mean = sum / static_cast<double>(n);
    CHECK(std::abs(mean) < 1e-3);
    CHECK(std::sqrt(sq / static_cast<double>(n) - mean * mean) ==
          doctest::Approx(1.0).epsilon(1e-3));
  }

  data::LatentDataset again = data::gen_synthetic(4, 25, 3, 8, 11);
  for (int i = 0; i < ds.count(); ++i)
    for (int64_t j = 0; j < ds.samples[i].size(); ++j)
      REQUIRE(ds.samples[i].data()[j] == again.samples[i].data()[j]);

  data::LatentDataset other = data::gen_synthetic(4, 25, 3, 8, 12);
  double diff = 0.0;
  for (int64_t j = 0; j < ds.samples[0].size(); ++j)
    diff += std::abs(ds.samples[0].data()[j] - other.samples[0].data()[j]);
  CHECK(diff > 1e-3);

  CHECK_THROWS_AS(data::gen_synthetic(4, 0, 3, 8, 1), ConfigError);
}

TEST_CASE("classes are visually distinct in the mean image") {
  data::LatentDataset ds = data::gen_synthetic(3, 40, 2, 8, 2);
  // Mean image per class; classes must not collapse onto one pattern.
  std::vector<Tensor> means;
  for (int c = 0; c < 3; ++c) {
    Tensor m = Tensor::zeros({2 * 8 * 8});
    int cnt = 0;
    for (int i = 0; i < ds.count(); ++i)
      if (ds.labels[i] == c) {
        for (int64_t j = 0; j < m.size(); ++j) m.data()[j] += ds.samples[i].data()[j];
        ++cnt;
      }
    for (int64_t j = 0; j < m.size(); ++j) m.data()[j] /= cnt;
    means.push_back(m);
  }
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      double d = 0.0;
      for (int64_t j = 0; j < means[a].size(); ++j)
        d += (means[a].data()[j] - means[b].data()[j]) *
             (means[a].data()[j] - means[b].data()[j]);
      CHECK(std::sqrt(d) > 0.5);
    }
}

TEST_CASE("glt1 round trip is bit exact") {
  TempFile f("roundtrip.glt1");
  data::LatentDataset ds = data::gen_synthetic(5, 8, 4, 8, 3);
  data::save_latents(ds, f.path);
  data::LatentDataset back = data::load_latents(f.path);
  CHECK(back.count() == ds.count());
  CHECK(back.num_classes == 5);
  CHECK(back.labels == ds.labels);
  CHECK(back.source == "file");
  for (int i = 0; i < ds.count(); ++i)
    for (int64_t j = 0; j < ds.samples[i].size(); ++j)
      REQUIRE(back.samples[i].data()[j] == ds.samples[i].data()[j]);

  // Saving the loaded copy reproduces the file byte for byte.
  TempFile f2("roundtrip2.glt1");
  data::save_latents(back, f2.path);
  CHECK(slurp(f.path) == slurp(f2.path));
}

TEST_CASE("glt1 loader rejects malformed files with typed codes") {
  TempFile good("good.glt1");
  data::save_latents(data::gen_synthetic(2, 3, 2, 4, 1), good.path);
  std::string bytes = slurp(good.path);

  auto code_of = [](const std::string& path) {
    try {
      data::load_latents(path);
    } catch (const IoError& e) {
      return e.code();
    }
    return IoCode::open_failed;  // not reached on the failure paths below
  };

  CHECK(code_of("/tmp/gat_test_definitely_missing.glt1") == IoCode::open_failed);

  TempFile bad("bad_magic.glt1");
  std::string corrupt = bytes;
  corrupt[0] = 'X';
  spit(bad.path, corrupt);
  CHECK(code_of(bad.path) == IoCode::bad_magic);

  TempFile vers("bad_version.glt1");
  corrupt = bytes;
  corrupt[4] = static_cast<char>(corrupt[4] + 1);
  spit(vers.path, corrupt);
  CHECK(code_of(vers.path) == IoCode::version_mismatch);

  TempFile trunc("trunc.glt1");
  spit(trunc.path, bytes.substr(0, bytes.size() - 5));
  CHECK(code_of(trunc.path) == IoCode::truncated);

  TempFile shortf("short.glt1");
  spit(shortf.path, bytes.substr(0, 10));
  CHECK(code_of(shortf.path) == IoCode::truncated);
}

TEST_CASE("train eval split is a disjoint tail partition") {
  data::LatentDataset ds = data::gen_synthetic(2, 20, 2, 4, 5);
  std::vector<int> tr = ds.train_indices(0.2);
  std::vector<int> ev = ds.eval_indices(0.2);
  CHECK(ev.size() == 8);  // ceil(0.2 * 40)
  CHECK(tr.size() == 32);
  for (size_t i = 0; i < ev.size(); ++i) CHECK(ev[i] == 32 + static_cast<int>(i));
  for (size_t i = 0; i < tr.size(); ++i) CHECK(tr[i] == static_cast<int>(i));

  Tensor b = ds.batch({3, 17});
  CHECK(b.shape() == std::vector<int>{2, 2, 4, 4});
  for (int64_t j = 0; j < ds.samples[3].size(); ++j) {
    CHECK(b.data()[j] == ds.samples[3].data()[j]);
    CHECK(b.data()[ds.samples[3].size() + j] == ds.samples[17].data()[j]);
  }
  CHECK_THROWS_AS((void)ds.batch({}), ConfigError);
  CHECK_THROWS_AS((void)ds.batch({40}), ConfigError);
}

TEST_CASE("identity augmentation is bit transparent") {
  RngStream rs(9);
  Tensor x = rs.normal_tensor({3, 2, 8, 8});
  data::AugmentParams id = data::AugmentParams::identity(3, 2);
  NodePtr out = data::apply_augment(ag::constant(x), id);
  for (int64_t i = 0; i < x.size(); ++i) REQUIRE(out->value.data()[i] == x.data()[i]);
}

TEST_CASE("augment draws respect their documented ranges") {
  RngStream rs(10);
  data::AugmentParams p = data::draw_augment(rs, 64, 3, 8);
  CHECK(p.flip.size() == 64);
  CHECK(p.scale.shape() == std::vector<int>{64, 3});
  bool saw_flip = false, saw_noflip = false;
  for (int i = 0; i < 64; ++i) {
    CHECK(std::abs(p.dy[i]) <= 1);
    CHECK(std::abs(p.dx[i]) <= 1);
    saw_flip |= p.flip[i] == 1;
    saw_noflip |= p.flip[i] == 0;
    for (int c = 0; c < 3; ++c) {
      double s = p.scale.data()[i * 3 + c];
      CHECK(s >= 0.8);
      CHECK(s <= 1.2);
    }
  }
  CHECK(saw_flip);
  CHECK(saw_noflip);
}

TEST_CASE("flip augmentation mirrors columns and is a permutation in grad") {
  int b = 2, c = 2, hw = 4;
  RngStream rs(12);
  Tensor x = rs.normal_tensor({b, c, hw, hw});
  data::AugmentParams p = data::AugmentParams::identity(b, c);
  p.flip[1] = 1;

  NodePtr leaf = ag::leaf(x, true);
  NodePtr out = data::apply_augment(leaf, p);
  // Sample 0 untouched, sample 1 mirrored in the last axis.
  for (int ch = 0; ch < c; ++ch)
    for (int r = 0; r < hw; ++r)
      for (int col = 0; col < hw; ++col) {
        int64_t base0 = ((0 * c + ch) * hw + r) * hw;
        int64_t base1 = ((1 * c + ch) * hw + r) * hw;
        CHECK(out->value.data()[base0 + col] == x.data()[base0 + col]);
        CHECK(out->value.data()[base1 + col] == x.data()[base1 + hw - 1 - col]);
      }
  ag::backward(ag::sum_all(out));
  for (int64_t i = 0; i < x.size(); ++i) CHECK(leaf->grad.data()[i] == 1.0);
}

TEST_CASE("translation pads with zeros and scale multiplies channels") {
  int hw = 4;
  Tensor x = Tensor::full({1, 1, hw, hw}, 1.0);
  data::AugmentParams p = data::AugmentParams::identity(1, 1);
  p.dy[0] = 1;
  p.dx[0] = -1;
  NodePtr out = data::apply_augment(ag::constant(x), p);
  double sum = 0.0;
  for (int64_t i = 0; i < out->value.size(); ++i) sum += out->value.data()[i];
  CHECK(sum == 9.0);  // (hw-1)^2 surviving ones

  data::AugmentParams q = data::AugmentParams::identity(1, 1);
  q.scale.data()[0] = 0.5;
  NodePtr half = data::apply_augment(ag::constant(x), q);
  for (int64_t i = 0; i < half->value.size(); ++i)
    CHECK(half->value.data()[i] == 0.5);
}

TEST_CASE("diff augment draws and applies in one call") {
  RngStream rs(13);
  Tensor x = rs.normal_tensor({4, 2, 8, 8});
  NodePtr out = data::diff_augment(ag::constant(x), rs);
  CHECK(out->value.shape() == x.shape());
  CHECK(out->value.all_finite());
}
