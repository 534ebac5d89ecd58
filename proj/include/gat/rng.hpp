#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>

#include "gat/tensor.hpp"

namespace gat {

// Deterministic random stream: mt19937_64 plus a Box-Muller normal with an
// explicit spare so the full state round-trips through checkpoints. The
// standard distributions are avoided because their draw sequences are
// implementation-defined.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(uint64_t seed);

  uint64_t next_u64() { return eng_(); }
  double uniform();            // [0, 1)
  double normal();             // N(0, 1)
  int below(int n);            // uniform in [0, n)
  void fill_normal(Tensor& t, double mean = 0.0, double std = 1.0);
  Tensor normal_tensor(std::vector<int> shape, double mean = 0.0,
                       double std = 1.0);

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

uint64_t splitmix64(uint64_t x);
uint64_t fnv1a64(const std::string& s);
// Seed for a named substream of a run seed.
uint64_t derive_seed(uint64_t seed, const std::string& name);

}  // namespace gat
