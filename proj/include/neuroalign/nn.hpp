#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "neuroalign/random.hpp"
#include "neuroalign/tensor.hpp"

namespace neuroalign::nn {

struct Parameter {
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  explicit Parameter(Shape shape) : value(shape), grad(std::move(shape)) {}
  void zero_grad() { grad.fill(0.0); }
};

struct NamedParameter {
  std::string name;
  Parameter* parameter;
};

// Non-trainable state saved in checkpoints (batch-norm running statistics).
struct NamedBuffer {
  std::string name;
  Tensor* buffer;
};

// Convolution without bias over NCHW input; stride may be overridden per call
// because recurrent blocks reuse one kernel at different strides.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride = 1, std::size_t padding = 0);

  // Normal(0, sqrt(2 / (k * k * out_channels))).
  void init(Rng& rng);

  Tensor forward(const Tensor& x) const { return forward(x, stride_); }
  Tensor forward(const Tensor& x, std::size_t stride) const;
  // Accumulates into weight.grad and returns dL/dx.
  Tensor backward(const Tensor& x, const Tensor& dy, std::size_t stride);
  Tensor backward(const Tensor& x, const Tensor& dy) { return backward(x, dy, stride_); }

  std::size_t out_size(std::size_t in, std::size_t stride) const {
    return (in + 2 * padding_ - kernel_) / stride + 1;
  }

  Parameter weight;  // [out, in, k, k]

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }

 private:
  std::size_t in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, padding_ = 0;
};

struct BatchNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  // biased
  std::size_t count = 0;          // elements per channel
  bool training = true;
};

class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels, double momentum = 0.1, double eps = 1e-5);

  // training: normalize with batch statistics; otherwise use running
  // statistics. Running statistics only change via update_running().
  Tensor forward(const Tensor& x, bool training, BatchNormCache* cache) const;
  Tensor backward(const BatchNormCache& cache, const Tensor& dy);
  void update_running(const BatchNormCache& cache);

  void set_momentum(double momentum) { momentum_ = momentum; }
  double momentum() const { return momentum_; }

  Parameter weight;  // gamma
  Parameter bias;    // beta
  Tensor running_mean;
  Tensor running_var;

  double eps() const { return eps_; }

 private:
  std::size_t channels_ = 0;
  double momentum_ = 0.1;
  double eps_ = 1e-5;
};

class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features);

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weight and bias.
  void init(Rng& rng);

  RowMatrix forward(const RowMatrix& x) const;
  RowMatrix backward(const RowMatrix& x, const RowMatrix& dy);

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

  Parameter weight;  // [out, in]
  Parameter bias;    // [out]

 private:
  std::size_t in_ = 0, out_ = 0;
};

Tensor relu(const Tensor& x);
// dy masked by (y > 0), where y is the ReLU output.
Tensor relu_backward(const Tensor& y, const Tensor& dy);

struct MaxPoolCache {
  Shape input_shape;
  std::vector<std::size_t> argmax;
};

Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding,
                  MaxPoolCache* cache);
Tensor max_pool2d_backward(const MaxPoolCache& cache, const Tensor& dy);

// Global average over H, W: [N, C, H, W] -> N x C.
RowMatrix global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Shape& input_shape, const RowMatrix& dy);

// [N, C, H, W] -> N x (C*H*W), channel-major.
RowMatrix flatten(const Tensor& x);

}  // namespace neuroalign::nn
