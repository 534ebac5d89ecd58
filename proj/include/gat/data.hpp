#pragma once

#include <string>
#include <vector>

#include "gat/autograd.hpp"
#include "gat/rng.hpp"
#include "gat/tensor.hpp"

namespace gat::data {

struct LatentDataset {
  std::vector<Tensor> samples;  // each [channels, hw, hw]
  std::vector<int> labels;
  Tensor chan_mean, chan_std;  // normalization constants used at generation
  int num_classes = 0;
  std::string source;  // "synthetic" | "file"

  int count() const { return static_cast<int>(samples.size()); }
  int channels() const { return samples.empty() ? 0 : samples[0].dim(0); }
  int hw() const { return samples.empty() ? 0 : samples[0].dim(1); }
  // Deterministic tail split: last ceil(fraction*count) samples are eval.
  std::vector<int> train_indices(double eval_fraction) const;
  std::vector<int> eval_indices(double eval_fraction) const;
  Tensor batch(const std::vector<int>& indices) const;  // [B, C, hw, hw]
};

// Class-conditional oriented low-frequency patterns plus per-sample jitter,
// normalized per channel and quantized through float32 so file round trips
// are bit-exact. Deterministic in (arguments, seed).
LatentDataset gen_synthetic(int num_classes, int per_class, int channels, int hw,
                            uint64_t seed);

// GLT1 little-endian container: magic "GLT1", version, count, channels,
// height, width, num_classes (u32 each), then count*(c*h*w) float32 values
// and count u32 labels.
void save_latents(const LatentDataset& ds, const std::string& path);
LatentDataset load_latents(const std::string& path);

// Per-sample augmentation parameters, shared across the K levels of a stack.
struct AugmentParams {
  std::vector<uint8_t> flip;  // horizontal flip per sample
  std::vector<int> dy, dx;    // integer translation, zero padding
  Tensor scale;               // [B, C] per-channel scale
  static AugmentParams identity(int batch, int channels);
};

// flip prob 0.5, translation up to +/- hw/8, channel scale in [0.8, 1.2].
AugmentParams draw_augment(RngStream& rng, int batch, int channels, int hw);
// Differentiable in x (a linear gather); params are constants.
ag::NodePtr apply_augment(const ag::NodePtr& x, const AugmentParams& p);
ag::NodePtr diff_augment(const ag::NodePtr& x, RngStream& rng);

}  // namespace gat::data
