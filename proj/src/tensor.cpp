#include "ttn/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "ttn/error.hpp"

namespace ttn {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto d : shape_) require(d > 0, ErrorCode::ShapeMismatch, "zero-sized dimension in " + shape_str(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) require(d > 0, ErrorCode::ShapeMismatch, "zero-sized dimension in " + shape_str(shape_));
  require(shape_size(shape_) == data_.size(), ErrorCode::ShapeMismatch,
          "data length " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> idx) const {
  require(idx.size() == shape_.size(), ErrorCode::ShapeMismatch, "index rank mismatch");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : idx) {
    require(i < shape_[axis], ErrorCode::IndexOutOfRange, "tensor index out of range");
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
double Tensor::at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

std::size_t Tensor::item_size() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }

std::span<double> Tensor::item(std::size_t i) {
  const auto n = item_size();
  return std::span<double>(data_).subspan(i * n, n);
}

std::span<const double> Tensor::item(std::size_t i) const {
  const auto n = item_size();
  return std::span<const double>(data_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace ttn
