#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace gat {

// Dense row-major tensor of doubles. Storage is shared on copy; use clone()
// for a deep copy. Reshapes alias the same buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape);
  // Uninitialized buffer; only for outputs where every element gets written.
  static Tensor uninit(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor from(std::vector<double> values, std::vector<int> shape);
  static Tensor scalar(double value);

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const;  // negative i counts from the back
  int64_t size() const { return size_; }
  bool defined() const { return static_cast<bool>(data_); }

  double* data() { return data_.get(); }
  const double* data() const { return data_.get(); }
  double& operator[](int64_t i) { return data_.get()[i]; }
  double operator[](int64_t i) const { return data_.get()[i]; }

  // Leading dims collapsed, i.e. a [..., C] tensor viewed as [rows, C].
  int64_t rows() const { return ndim() == 0 ? 0 : size_ / shape_.back(); }
  int cols() const { return ndim() == 0 ? 0 : shape_.back(); }

  Tensor reshaped(std::vector<int> shape) const;
  Tensor clone() const;
  void fill(double value);
  void release() { data_.reset(); shape_.clear(); size_ = 0; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double item() const;  // requires size() == 1

 private:
  struct Uninit {};
  Tensor(std::vector<int> shape, Uninit);

  std::shared_ptr<double[]> data_;
  std::vector<int> shape_;
  int64_t size_ = 0;
};

std::string shape_str(const std::vector<int>& shape);
int64_t shape_numel(const std::vector<int>& shape);

}  // namespace gat
