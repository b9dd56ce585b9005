#include "wearfuse/tensor.hpp"

#include <cmath>

namespace wearfuse {

namespace {
std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor: element count " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
}

Tensor Tensor::scalar(double v) { return Tensor{Shape{}, std::vector<double>{v}}; }

Tensor Tensor::vec(std::vector<double> v) {
  Shape s{v.size()};
  return Tensor{std::move(s), std::move(v)};
}

Tensor Tensor::mat(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor{Shape{rows, cols}, std::move(v)};
}

Tensor Tensor::zeros(const Shape& shape) { return Tensor{shape}; }

Tensor Tensor::full(const Shape& shape, double v) {
  Tensor t{shape};
  for (auto& x : t.data_) x = v;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() == 2) return shape_[0];
  if (rank() <= 1) return 1;
  throw ShapeError("rows(): rank > 2 tensor " + shape_str());
}

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape_[1];
  if (rank() == 1) return shape_[0];
  if (rank() == 0) return 1;
  throw ShapeError("cols(): rank > 2 tensor " + shape_str());
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

}  // namespace wearfuse
