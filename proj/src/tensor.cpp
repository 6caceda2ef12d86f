#include "neuroalign/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "neuroalign/error.hpp"

namespace neuroalign {

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (values_.size() != element_count(shape_)) {
    throw InvalidArgument("tensor value count " + std::to_string(values_.size()) +
                          " does not match shape " + shape_to_string(shape_));
  }
}

std::size_t Tensor::stride0() const noexcept {
  if (shape_.empty() || shape_[0] == 0) return 0;
  return values_.size() / shape_[0];
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

void Tensor::reshape(Shape shape) {
  if (element_count(shape) != values_.size()) {
    throw InvalidArgument("cannot reshape " + shape_to_string(shape_) + " to " +
                          shape_to_string(shape));
  }
  shape_ = std::move(shape);
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor out = *this;
  out.reshape(std::move(shape));
  return out;
}

Tensor Tensor::slice0(std::size_t begin, std::size_t end) const {
  if (shape_.empty() || begin > end || end > shape_[0]) {
    throw InvalidArgument("slice0 out of range");
  }
  Shape shape = shape_;
  shape[0] = end - begin;
  const std::size_t stride = stride0();
  std::vector<double> values(values_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                             values_.begin() + static_cast<std::ptrdiff_t>(end * stride));
  return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::gather0(std::span<const std::size_t> indices) const {
  if (shape_.empty()) throw InvalidArgument("gather0 on a scalar tensor");
  Shape shape = shape_;
  shape[0] = indices.size();
  const std::size_t stride = stride0();
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= shape_[0]) throw InvalidArgument("gather0 index out of range");
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(indices[i] * stride), stride,
                out.values_.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw InvalidArgument("tensor add shape mismatch " + shape_to_string(shape_) + " vs " +
                          shape_to_string(other.shape_));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

RowMatrix Tensor::as_matrix() const {
  if (shape_.empty()) throw InvalidArgument("as_matrix on a scalar tensor");
  const auto rows = static_cast<Eigen::Index>(shape_[0]);
  const auto cols = static_cast<Eigen::Index>(stride0());
  return Eigen::Map<const RowMatrix>(values_.data(), rows, cols);
}

Tensor Tensor::from_matrix(const RowMatrix& m) {
  Tensor out({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  Eigen::Map<RowMatrix>(out.data(), m.rows(), m.cols()) = m;
  return out;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace neuroalign
