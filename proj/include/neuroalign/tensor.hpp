#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace neuroalign {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

// Dense row-major n-d array of doubles. Image batches and activations use
// NCHW order. Storage is aligned to Eigen's maximum alignment so vectorized
// kernels take the same path regardless of where the buffer lands.
class Tensor {
 public:
  using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  // Element count of one slice along axis 0.
  std::size_t stride0() const noexcept;

  void fill(double value);
  void reshape(Shape shape);
  Tensor reshaped(Shape shape) const;

  // Rows [begin, end) along axis 0.
  Tensor slice0(std::size_t begin, std::size_t end) const;
  // Gathers the given indices along axis 0.
  Tensor gather0(std::span<const std::size_t> indices) const;

  Tensor& operator+=(const Tensor& other);

  bool operator==(const Tensor& other) const = default;

  // Views axis 0 as rows and everything else as columns.
  RowMatrix as_matrix() const;
  static Tensor from_matrix(const RowMatrix& m);

 private:
  Shape shape_;
  Storage values_;
};

bool all_finite(std::span<const double> values);

}  // namespace neuroalign
