#include "gat/rng.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "gat/errors.hpp"

namespace gat {

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t derive_seed(uint64_t seed, const std::string& name) {
  return splitmix64(seed ^ splitmix64(fnv1a64(name)));
}

RngStream::RngStream(uint64_t seed) : eng_(seed) {}

double RngStream::uniform() {
  // 53-bit mantissa construction; bit-identical across platforms.
  return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

int RngStream::below(int n) {
  if (n <= 0) throw ConfigError("RngStream::below requires n > 0");
  uint64_t un = static_cast<uint64_t>(n);
  uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t v;
  do {
    v = eng_();
  } while (v >= limit);
  return static_cast<int>(v % un);
}

void RngStream::fill_normal(Tensor& t, double mean, double std) {
  double* p = t.data();
  for (int64_t i = 0; i < t.size(); ++i) p[i] = mean + std * normal();
}

Tensor RngStream::normal_tensor(std::vector<int> shape, double mean, double std) {
  Tensor t(std::move(shape));
  fill_normal(t, mean, std);
  return t;
}

std::string RngStream::state() const {
  std::ostringstream os;
  os << eng_ << " " << (has_spare_ ? 1 : 0) << " ";
  // Spare stored as raw bits so the round trip is exact.
  uint64_t bits;
  static_assert(sizeof(bits) == sizeof(spare_));
  std::memcpy(&bits, &spare_, sizeof(bits));
  os << bits;
  return os.str();
}

void RngStream::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> eng_;
  int spare_flag = 0;
  uint64_t bits = 0;
  is >> spare_flag >> bits;
  if (is.fail()) throw IoError(IoCode::truncated, "bad rng state string");
  has_spare_ = spare_flag != 0;
  std::memcpy(&spare_, &bits, sizeof(spare_));
}

}  // namespace gat
