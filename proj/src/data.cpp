#include "gat/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "gat/errors.hpp"

namespace gat::data {

using ag::NodePtr;

std::vector<int> LatentDataset::train_indices(double eval_fraction) const {
  int n_eval = static_cast<int>(std::ceil(eval_fraction * count()));
  std::vector<int> idx;
  for (int i = 0; i < count() - n_eval; ++i) idx.push_back(i);
  return idx;
}

std::vector<int> LatentDataset::eval_indices(double eval_fraction) const {
  int n_eval = static_cast<int>(std::ceil(eval_fraction * count()));
  std::vector<int> idx;
  for (int i = count() - n_eval; i < count(); ++i) idx.push_back(i);
  return idx;
}

Tensor LatentDataset::batch(const std::vector<int>& indices) const {
  if (indices.empty()) throw ConfigError("batch: empty index list");
  int b = static_cast<int>(indices.size());
  int c = channels(), h = hw();
  Tensor out({b, c, h, h});
  int64_t per = static_cast<int64_t>(c) * h * h;
  for (int i = 0; i < b; ++i) {
    int s = indices[static_cast<size_t>(i)];
    if (s < 0 || s >= count()) throw ConfigError("batch: index out of range");
    const double* src = samples[static_cast<size_t>(s)].data();
    double* dst = out.data() + i * per;
    for (int64_t j = 0; j < per; ++j) dst[j] = src[j];
  }
  return out;
}

LatentDataset gen_synthetic(int num_classes, int per_class, int channels, int hw,
                            uint64_t seed) {
  if (per_class < 1) throw ConfigError("gen_synthetic: per_class must be >= 1");
  if (num_classes < 1 || channels < 1 || hw < 1) {
    throw ConfigError("gen_synthetic: bad geometry");
  }
  LatentDataset ds;
  ds.num_classes = num_classes;
  ds.source = "synthetic";

  // Two oriented cosine components per class and channel, drawn once per
  // class; samples add amplitude jitter and broadband noise on top.
  for (int c = 0; c < num_classes; ++c) {
    RngStream crng(derive_seed(seed, "class-" + std::to_string(c)));
    std::vector<double> fy(static_cast<size_t>(channels) * 2), fx(fy.size()),
        ph(fy.size()), amp(fy.size());
    for (size_t i = 0; i < fy.size(); ++i) {
      double theta = crng.uniform() * 2.0 * std::numbers::pi;
      double cycles = 0.5 + 1.5 * crng.uniform();  // low-frequency
      fy[i] = cycles * std::sin(theta) / hw;
      fx[i] = cycles * std::cos(theta) / hw;
      ph[i] = crng.uniform() * 2.0 * std::numbers::pi;
      amp[i] = 0.6 + 0.8 * crng.uniform();
    }
    RngStream srng(derive_seed(seed, "samples-" + std::to_string(c)));
    for (int s = 0; s < per_class; ++s) {
      Tensor t({channels, hw, hw});
      double jitter = 1.0 + 0.15 * srng.normal();
      for (int ch = 0; ch < channels; ++ch) {
        for (int y = 0; y < hw; ++y) {
          for (int x = 0; x < hw; ++x) {
            double v = 0.0;
            for (int m = 0; m < 2; ++m) {
              size_t i = static_cast<size_t>(ch) * 2 + static_cast<size_t>(m);
              v += amp[i] * std::cos(2.0 * std::numbers::pi * (fy[i] * y + fx[i] * x) + ph[i]);
            }
            t[(static_cast<int64_t>(ch) * hw + y) * hw + x] =
                jitter * v + 0.35 * srng.normal();
          }
        }
      }
      ds.samples.push_back(std::move(t));
      ds.labels.push_back(c);
    }
  }

  // Normalize to zero mean, unit std per channel, then quantize through
  // float32 so GLT1 round trips reproduce these exact values.
  ds.chan_mean = Tensor::zeros({channels});
  ds.chan_std = Tensor::zeros({channels});
  int64_t n_per_chan = static_cast<int64_t>(ds.count()) * hw * hw;
  for (int ch = 0; ch < channels; ++ch) {
    double sum = 0.0, sq = 0.0;
    for (const auto& t : ds.samples) {
      const double* p = t.data() + static_cast<int64_t>(ch) * hw * hw;
      for (int64_t j = 0; j < static_cast<int64_t>(hw) * hw; ++j) {
        sum += p[j];
        sq += p[j] * p[j];
      }
    }
    double mean = sum / n_per_chan;
    double var = sq / n_per_chan - mean * mean;
    ds.chan_mean[ch] = mean;
    ds.chan_std[ch] = std::sqrt(var);
  }
  for (auto& t : ds.samples) {
    for (int ch = 0; ch < channels; ++ch) {
      double* p = t.data() + static_cast<int64_t>(ch) * hw * hw;
      for (int64_t j = 0; j < static_cast<int64_t>(hw) * hw; ++j) {
        p[j] = static_cast<double>(
            static_cast<float>((p[j] - ds.chan_mean[ch]) / ds.chan_std[ch]));
      }
    }
  }
  return ds;
}

namespace {

constexpr uint32_t kGlt1Version = 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const std::string& s, size_t off) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<uint32_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
  }
  return v;
}

void put_f32(std::string& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

float get_f32(const std::string& s, size_t off) {
  uint32_t bits = get_u32(s, off);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void save_latents(const LatentDataset& ds, const std::string& path) {
  if (ds.count() == 0) throw ConfigError("save_latents: empty dataset");
  int c = ds.channels(), h = ds.hw();
  std::string buf;
  buf.reserve(28 + static_cast<size_t>(ds.count()) * (static_cast<size_t>(c) * h * h * 4 + 4));
  buf += "GLT1";
  put_u32(buf, kGlt1Version);
  put_u32(buf, static_cast<uint32_t>(ds.count()));
  put_u32(buf, static_cast<uint32_t>(c));
  put_u32(buf, static_cast<uint32_t>(h));
  put_u32(buf, static_cast<uint32_t>(h));
  put_u32(buf, static_cast<uint32_t>(ds.num_classes));
  for (const auto& t : ds.samples) {
    for (int64_t j = 0; j < t.size(); ++j) put_f32(buf, static_cast<float>(t[j]));
  }
  for (int label : ds.labels) put_u32(buf, static_cast<uint32_t>(label));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoCode::open_failed, "cannot open for write: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError(IoCode::open_failed, "write failed: " + path);
}

LatentDataset load_latents(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoCode::open_failed, "cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 28) throw IoError(IoCode::truncated, "file shorter than GLT1 header: " + path);
  if (buf.compare(0, 4, "GLT1") != 0) throw IoError(IoCode::bad_magic, "not a GLT1 file: " + path);
  uint32_t version = get_u32(buf, 4);
  if (version != kGlt1Version) {
    throw IoError(IoCode::version_mismatch,
                  "GLT1 version " + std::to_string(version) + " unsupported");
  }
  uint32_t count = get_u32(buf, 8);
  uint32_t channels = get_u32(buf, 12);
  uint32_t height = get_u32(buf, 16);
  uint32_t width = get_u32(buf, 20);
  uint32_t num_classes = get_u32(buf, 24);
  if (count == 0 || channels == 0 || height == 0 || width == 0 || num_classes == 0) {
    throw IoError(IoCode::geometry_mismatch, "GLT1 header has zero dimensions");
  }
  if (height != width) {
    throw IoError(IoCode::geometry_mismatch, "GLT1 loader expects square latents");
  }
  size_t per = static_cast<size_t>(channels) * height * width;
  size_t expect = 28 + static_cast<size_t>(count) * (per * 4 + 4);
  if (buf.size() != expect) {
    throw IoError(IoCode::truncated, "GLT1 body length " + std::to_string(buf.size() - 28) +
                                         " != expected " + std::to_string(expect - 28));
  }
  LatentDataset ds;
  ds.num_classes = static_cast<int>(num_classes);
  ds.source = "file";
  size_t off = 28;
  for (uint32_t i = 0; i < count; ++i) {
    Tensor t({static_cast<int>(channels), static_cast<int>(height), static_cast<int>(width)});
    for (size_t j = 0; j < per; ++j, off += 4) {
      t[static_cast<int64_t>(j)] = static_cast<double>(get_f32(buf, off));
    }
    ds.samples.push_back(std::move(t));
  }
  for (uint32_t i = 0; i < count; ++i, off += 4) {
    uint32_t label = get_u32(buf, off);
    if (label >= num_classes) {
      throw IoError(IoCode::geometry_mismatch,
                    "label " + std::to_string(label) + " out of range");
    }
    ds.labels.push_back(static_cast<int>(label));
  }
  ds.chan_mean = Tensor::zeros({static_cast<int>(channels)});
  ds.chan_std = Tensor::full({static_cast<int>(channels)}, 1.0);
  return ds;
}

AugmentParams AugmentParams::identity(int batch, int channels) {
  AugmentParams p;
  p.flip.assign(static_cast<size_t>(batch), 0);
  p.dy.assign(static_cast<size_t>(batch), 0);
  p.dx.assign(static_cast<size_t>(batch), 0);
  p.scale = Tensor::full({batch, channels}, 1.0);
  return p;
}

AugmentParams draw_augment(RngStream& rng, int batch, int channels, int hw) {
  AugmentParams p;
  int m = hw / 8;
  p.scale = Tensor({batch, channels});
  for (int b = 0; b < batch; ++b) {
    p.flip.push_back(rng.uniform() < 0.5 ? 1 : 0);
    p.dy.push_back(m > 0 ? rng.below(2 * m + 1) - m : 0);
    p.dx.push_back(m > 0 ? rng.below(2 * m + 1) - m : 0);
    for (int c = 0; c < channels; ++c) {
      p.scale[static_cast<int64_t>(b) * channels + c] = 0.8 + 0.4 * rng.uniform();
    }
  }
  return p;
}

ag::NodePtr apply_augment(const ag::NodePtr& x, const AugmentParams& p) {
  if (x->value.ndim() != 4) throw ConfigError("augment: expected [B,C,H,W]");
  int b = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  if (static_cast<int>(p.flip.size()) != b || p.scale.dim(0) != b || p.scale.dim(1) != c) {
    throw ConfigError("augment: parameter batch mismatch");
  }
  Tensor out = Tensor::zeros(x->value.shape());
  const double* px = x->value.data();
  double* po = out.data();
  Tensor scale = p.scale;
  auto flip = p.flip;
  auto dy = p.dy;
  auto dx = p.dx;
  for (int bi = 0; bi < b; ++bi) {
    for (int ci = 0; ci < c; ++ci) {
      double s = scale[static_cast<int64_t>(bi) * c + ci];
      for (int y = 0; y < h; ++y) {
        int sy = y - dy[static_cast<size_t>(bi)];
        if (sy < 0 || sy >= h) continue;
        for (int xo = 0; xo < w; ++xo) {
          int sx = xo - dx[static_cast<size_t>(bi)];
          if (sx < 0 || sx >= w) continue;
          if (flip[static_cast<size_t>(bi)]) sx = w - 1 - sx;
          po[((static_cast<int64_t>(bi) * c + ci) * h + y) * w + xo] =
              s * px[((static_cast<int64_t>(bi) * c + ci) * h + sy) * w + sx];
        }
      }
    }
  }
  return ag::make_op(std::move(out), {x}, [x, scale, flip, dy, dx, b, c, h, w](ag::Node& n) {
    if (!x->requires_grad) return;
    double* d = x->ensure_grad().data();
    const double* g = n.grad.data();
    for (int bi = 0; bi < b; ++bi) {
      for (int ci = 0; ci < c; ++ci) {
        double s = scale[static_cast<int64_t>(bi) * c + ci];
        for (int y = 0; y < h; ++y) {
          int sy = y - dy[static_cast<size_t>(bi)];
          if (sy < 0 || sy >= h) continue;
          for (int xo = 0; xo < w; ++xo) {
            int sx = xo - dx[static_cast<size_t>(bi)];
            if (sx < 0 || sx >= w) continue;
            if (flip[static_cast<size_t>(bi)]) sx = w - 1 - sx;
            d[((static_cast<int64_t>(bi) * c + ci) * h + sy) * w + sx] +=
                s * g[((static_cast<int64_t>(bi) * c + ci) * h + y) * w + xo];
          }
        }
      }
    }
  });
}

ag::NodePtr diff_augment(const ag::NodePtr& x, RngStream& rng) {
  return apply_augment(x, draw_augment(rng, x->value.dim(0), x->value.dim(1), x->value.dim(2)));
}

}  // namespace gat::data
