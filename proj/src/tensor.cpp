#include "gat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>
#include <utility>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "gat/errors.hpp"

namespace gat {

namespace {

// Activation buffers run to a few MB and are freed after every graph; with
// default thresholds glibc serves them via mmap/munmap, so each allocation
// page-faults from scratch. Keep them on the heap and skip trimming.
struct MallocTuning {
  MallocTuning() {
#if defined(__GLIBC__)
    // 32 MiB is the largest threshold glibc accepts (HEAP_MAX_SIZE / 2).
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    // Backward frees a whole graph at once; without this the coalesced top
    // chunk gets trimmed back to the kernel and re-faulted every step.
    mallopt(M_TRIM_THRESHOLD, -1);
#endif
  }
};
const MallocTuning g_malloc_tuning;

// One fixed 64-byte alignment for every buffer. Eigen's vectorized kernels
// split head/body/tail by pointer alignment, so letting malloc pick the
// offset makes bit-level results depend on heap history; two identically
// seeded models could then disagree in the last ulp.
std::shared_ptr<double[]> alloc_doubles(int64_t n) {
  size_t bytes = (static_cast<size_t>(n) * sizeof(double) + 63) / 64 * 64;
  void* p = std::aligned_alloc(64, bytes);
  if (!p) throw std::bad_alloc();
  return std::shared_ptr<double[]>(static_cast<double*>(p),
                                   [](double* q) { std::free(q); });
}

}  // namespace

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape, Uninit) : shape_(std::move(shape)) {
  for (int d : shape_) {
    if (d <= 0) throw ConfigError("tensor dims must be positive, got " + shape_str(shape_));
  }
  size_ = shape_numel(shape_);
  data_ = alloc_doubles(size_);
}

Tensor::Tensor(std::vector<int> shape) : Tensor(std::move(shape), Uninit{}) {
  std::memset(data_.get(), 0, static_cast<size_t>(size_) * sizeof(double));
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::uninit(std::vector<int> shape) { return Tensor(std::move(shape), Uninit{}); }

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t(std::move(shape), Uninit{});
  t.fill(value);
  return t;
}

Tensor Tensor::from(std::vector<double> values, std::vector<int> shape) {
  if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
    throw ConfigError("value count does not match shape " + shape_str(shape));
  }
  Tensor t(std::move(shape), Uninit{});
  std::memcpy(t.data_.get(), values.data(), values.size() * sizeof(double));
  return t;
}

Tensor Tensor::scalar(double value) { return from({value}, {1}); }

int Tensor::dim(int i) const {
  int n = ndim();
  if (i < 0) i += n;
  if (i < 0 || i >= n) throw ConfigError("tensor dim index out of range");
  return shape_[static_cast<size_t>(i)];
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_numel(shape) != size_) {
    throw ConfigError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                      " changes element count");
  }
  Tensor t;
  t.data_ = data_;
  t.shape_ = std::move(shape);
  t.size_ = size_;
  return t;
}

Tensor Tensor::clone() const {
  Tensor t;
  if (data_) {
    t.data_ = alloc_doubles(size_);
    std::memcpy(t.data_.get(), data_.get(), static_cast<size_t>(size_) * sizeof(double));
  }
  t.shape_ = shape_;
  t.size_ = size_;
  return t;
}

void Tensor::fill(double value) {
  std::fill_n(data_.get(), static_cast<size_t>(size_), value);
}

bool Tensor::all_finite() const {
  const double* p = data();
  for (int64_t i = 0; i < size_; ++i) {
    if (!std::isfinite(p[i])) return false;
  }
  return true;
}

double Tensor::item() const {
  if (size_ != 1) throw ConfigError("item() on tensor of size != 1");
  return data_.get()[0];
}

}  // namespace gat
