#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "wearfuse/errors.hpp"

namespace wearfuse {

using Shape = std::vector<std::size_t>;

// Dense row-major tensor of 64-bit floats. Rank 0 (scalar), 1 (vector) and
// 2 (matrix) are the ranks the pipeline uses.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor vec(std::vector<double> v);
  static Tensor mat(std::size_t rows, std::size_t cols, std::vector<double> v);
  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double v);

  std::size_t rank() const { return shape_.size(); }
  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  // Rank-2 accessors; rank-1 tensors count as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec_data() { return data_; }
  const std::vector<double>& vec_data() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at2(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at2(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;

  std::string shape_str() const;
  static std::string shape_str(const Shape& s);

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace wearfuse
