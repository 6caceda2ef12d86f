#include "neuroalign/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "neuroalign/error.hpp"

namespace neuroalign::nn {

namespace {

using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require_nchw(const Tensor& x, std::size_t channels, const char* who) {
  if (x.rank() != 4 || x.dim(1) != channels) {
    throw InvalidArgument(std::string(who) + ": expected [N, " + std::to_string(channels) +
                          ", H, W] input, got " + shape_to_string(x.shape()));
  }
}

}  // namespace

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t padding)
    : weight({out_channels, in_channels, kernel, kernel}),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding) {}

void Conv2d::init(Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(kernel_ * kernel_ * out_));
  std::normal_distribution<double> dist(0.0, std);
  for (double& w : weight.value.values()) w = dist(rng);
}

namespace {

// cols is (C*k*k) x (N*P), row-major.
void im2col(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad, std::size_t ho,
            std::size_t wo, RowMatrix& cols) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t p = ho * wo;
  cols.resize(static_cast<Eigen::Index>(c * k * k), static_cast<Eigen::Index>(n * p));
  if (k == 1 && stride == 1 && pad == 0) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::copy_n(x.data() + (b * c + ch) * p, p,
                    cols.data() + static_cast<std::ptrdiff_t>(ch * n * p + b * p));
      }
    }
    return;
  }
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* src = x.data() + (b * c + ch) * h * w;
      for (std::size_t ki = 0; ki < k; ++ki) {
        for (std::size_t kj = 0; kj < k; ++kj) {
          const std::size_t row = (ch * k + ki) * k + kj;
          double* dst = cols.data() + static_cast<std::ptrdiff_t>(row * n * p + b * p);
          for (std::size_t oh = 0; oh < ho; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                            static_cast<std::ptrdiff_t>(pad);
            double* d = dst + oh * wo;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) {
              std::fill_n(d, wo, 0.0);
              continue;
            }
            const double* srow = src + static_cast<std::size_t>(ih) * w;
            for (std::size_t ow = 0; ow < wo; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                              static_cast<std::ptrdiff_t>(pad);
              d[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) ? 0.0
                                                                       : srow[static_cast<std::size_t>(iw)];
            }
          }
        }
      }
    }
  }
}

void col2im(const RowMatrix& cols, std::size_t k, std::size_t stride, std::size_t pad,
            std::size_t ho, std::size_t wo, Tensor& dx) {
  const std::size_t n = dx.dim(0), c = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
  const std::size_t p = ho * wo;
  if (k == 1 && stride == 1 && pad == 0) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* src = cols.data() + static_cast<std::ptrdiff_t>(ch * n * p + b * p);
        double* dst = dx.data() + (b * c + ch) * p;
        for (std::size_t i = 0; i < p; ++i) dst[i] += src[i];
      }
    }
    return;
  }
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double* dst = dx.data() + (b * c + ch) * h * w;
      for (std::size_t ki = 0; ki < k; ++ki) {
        for (std::size_t kj = 0; kj < k; ++kj) {
          const std::size_t row = (ch * k + ki) * k + kj;
          const double* src = cols.data() + static_cast<std::ptrdiff_t>(row * n * p + b * p);
          for (std::size_t oh = 0; oh < ho; ++oh) {
            const auto ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                            static_cast<std::ptrdiff_t>(pad);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
            double* drow = dst + static_cast<std::size_t>(ih) * w;
            const double* s = src + oh * wo;
            for (std::size_t ow = 0; ow < wo; ++ow) {
              const auto iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                              static_cast<std::ptrdiff_t>(pad);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
              drow[static_cast<std::size_t>(iw)] += s[ow];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, std::size_t stride) const {
  require_nchw(x, in_, "Conv2d::forward");
  const std::size_t n = x.dim(0);
  const std::size_t ho = out_size(x.dim(2), stride), wo = out_size(x.dim(3), stride);
  const std::size_t p = ho * wo;
  RowMatrix cols;
  im2col(x, kernel_, stride, padding_, ho, wo, cols);
  ConstMap wm(weight.value.data(), static_cast<Eigen::Index>(out_),
              static_cast<Eigen::Index>(in_ * kernel_ * kernel_));
  RowMatrix y_mat(static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(n * p));
  y_mat.noalias() = wm * cols;
  Tensor y({n, out_, ho, wo});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < out_; ++co) {
      std::copy_n(y_mat.data() + static_cast<std::ptrdiff_t>(co * n * p + b * p), p,
                  y.data() + (b * out_ + co) * p);
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& dy, std::size_t stride) {
  require_nchw(x, in_, "Conv2d::backward");
  const std::size_t n = x.dim(0);
  const std::size_t ho = out_size(x.dim(2), stride), wo = out_size(x.dim(3), stride);
  const std::size_t p = ho * wo;
  if (dy.shape() != Shape{n, out_, ho, wo}) {
    throw InvalidArgument("Conv2d::backward: gradient shape mismatch");
  }
  RowMatrix dy_mat(static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(n * p));
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < out_; ++co) {
      std::copy_n(dy.data() + (b * out_ + co) * p, p,
                  dy_mat.data() + static_cast<std::ptrdiff_t>(co * n * p + b * p));
    }
  }
  RowMatrix cols;
  im2col(x, kernel_, stride, padding_, ho, wo, cols);
  const auto kdim = static_cast<Eigen::Index>(in_ * kernel_ * kernel_);
  MutMap dw(weight.grad.data(), static_cast<Eigen::Index>(out_), kdim);
  dw.noalias() += dy_mat * cols.transpose();
  ConstMap wm(weight.value.data(), static_cast<Eigen::Index>(out_), kdim);
  RowMatrix dcols(kdim, static_cast<Eigen::Index>(n * p));
  dcols.noalias() = wm.transpose() * dy_mat;
  Tensor dx(x.shape());
  col2im(dcols, kernel_, stride, padding_, ho, wo, dx);
  return dx;
}

BatchNorm2d::BatchNorm2d(std::size_t channels, double momentum, double eps)
    : weight({channels}),
      bias({channels}),
      running_mean({channels}, 0.0),
      running_var({channels}, 1.0),
      channels_(channels),
      momentum_(momentum),
      eps_(eps) {
  weight.value.fill(1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training, BatchNormCache* cache) const {
  require_nchw(x, channels_, "BatchNorm2d::forward");
  const std::size_t n = x.dim(0), c = channels_, hw = x.dim(2) * x.dim(3);
  const std::size_t m = n * hw;
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (training) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* src = x.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += src[i];
      }
      mean[ch] = s / static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* src = x.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) ss += (src[i] - mean[ch]) * (src[i] - mean[ch]);
      }
      var[ch] = ss / static_cast<double>(m);
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      var[ch] = running_var[ch];
    }
  }
  Tensor y(x.shape());
  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps_);
  Tensor xhat;
  if (cache) xhat = Tensor(x.shape());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double g = weight.value[ch], be = bias.value[ch];
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xh = (x[off + i] - mean[ch]) * inv_std[ch];
        if (cache) xhat[off + i] = xh;
        y[off + i] = g * xh + be;
      }
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->training = training;
    cache->count = m;
    if (training) {
      cache->batch_mean = std::move(mean);
      cache->batch_var = std::move(var);
    }
  }
  return y;
}

void BatchNorm2d::update_running(const BatchNormCache& cache) {
  if (!cache.training) return;
  const std::size_t m = cache.count;
  for (std::size_t ch = 0; ch < channels_; ++ch) {
    const double unbiased = m > 1 ? cache.batch_var[ch] * static_cast<double>(m) /
                                        static_cast<double>(m - 1)
                                  : cache.batch_var[ch];
    running_mean[ch] = (1.0 - momentum_) * running_mean[ch] + momentum_ * cache.batch_mean[ch];
    running_var[ch] = (1.0 - momentum_) * running_var[ch] + momentum_ * unbiased;
  }
}

Tensor BatchNorm2d::backward(const BatchNormCache& cache, const Tensor& dy) {
  const Tensor& xhat = cache.xhat;
  if (dy.shape() != xhat.shape()) throw InvalidArgument("BatchNorm2d::backward: shape mismatch");
  const std::size_t n = dy.dim(0), c = channels_, hw = dy.dim(2) * dy.dim(3);
  const double m = static_cast<double>(n * hw);
  Tensor dx(dy.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += dy[off + i];
        sum_dy_xhat += dy[off + i] * xhat[off + i];
      }
    }
    weight.grad[ch] += sum_dy_xhat;
    bias.grad[ch] += sum_dy;
    const double g = weight.value[ch];
    const double is = cache.inv_std[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      if (cache.training) {
        // dxhat = g * dy; dx = is/m * (m*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
        for (std::size_t i = 0; i < hw; ++i) {
          dx[off + i] = g * is / m * (m * dy[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat);
        }
      } else {
        for (std::size_t i = 0; i < hw; ++i) dx[off + i] = g * is * dy[off + i];
      }
    }
  }
  return dx;
}

Linear::Linear(std::size_t in_features, std::size_t out_features)
    : weight({out_features, in_features}), bias({out_features}), in_(in_features), out_(out_features) {}

void Linear::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& w : weight.value.values()) w = dist(rng);
  for (double& b : bias.value.values()) b = dist(rng);
}

RowMatrix Linear::forward(const RowMatrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != in_) {
    throw InvalidArgument("Linear::forward: expected " + std::to_string(in_) +
                          " input features, got " + std::to_string(x.cols()));
  }
  ConstMap w(weight.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  Eigen::Map<const Eigen::RowVectorXd> b(bias.value.data(), static_cast<Eigen::Index>(out_));
  RowMatrix y(x.rows(), static_cast<Eigen::Index>(out_));
  y.noalias() = x * w.transpose();
  y.rowwise() += b;
  return y;
}

RowMatrix Linear::backward(const RowMatrix& x, const RowMatrix& dy) {
  MutMap dw(weight.grad.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  dw.noalias() += dy.transpose() * x;
  Eigen::Map<Eigen::RowVectorXd> db(bias.grad.data(), static_cast<Eigen::Index>(out_));
  db += dy.colwise().sum();
  ConstMap w(weight.value.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  RowMatrix dx(dy.rows(), static_cast<Eigen::Index>(in_));
  dx.noalias() = dy * w;
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(y[i] > 0.0)) dx[i] = 0.0;
  }
  return dx;
}

Tensor max_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding,
                  MaxPoolCache* cache) {
  if (x.rank() != 4) throw InvalidArgument("max_pool2d: expected NCHW input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = (h + 2 * padding - kernel) / stride + 1;
  const std::size_t wo = (w + 2 * padding - kernel) / stride + 1;
  Tensor y({n, c, ho, wo});
  if (cache) {
    cache->input_shape = x.shape();
    cache->argmax.assign(y.size(), 0);
  }
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = x.data() + plane * h * w;
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t ki = 0; ki < kernel; ++ki) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * stride + ki) -
                          static_cast<std::ptrdiff_t>(padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kj = 0; kj < kernel; ++kj) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + kj) -
                            static_cast<std::ptrdiff_t>(padding);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t idx = static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw);
            if (src[idx] > best) {
              best = src[idx];
              arg = idx;
            }
          }
        }
        const std::size_t out_idx = (plane * ho + oh) * wo + ow;
        y[out_idx] = best;
        if (cache) cache->argmax[out_idx] = plane * h * w + arg;
      }
    }
  }
  return y;
}

Tensor max_pool2d_backward(const MaxPoolCache& cache, const Tensor& dy) {
  Tensor dx(cache.input_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[cache.argmax[i]] += dy[i];
  return dx;
}

RowMatrix global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw InvalidArgument("global_avg_pool: expected NCHW input");
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* src = x.data() + (b * c + ch) * hw;
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += src[i];
      out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(ch)) = s / static_cast<double>(hw);
    }
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const RowMatrix& dy) {
  Tensor dx(input_shape);
  const std::size_t n = input_shape[0], c = input_shape[1], hw = input_shape[2] * input_shape[3];
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double g =
          dy(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(ch)) / static_cast<double>(hw);
      double* dst = dx.data() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) dst[i] = g;
    }
  }
  return dx;
}

RowMatrix flatten(const Tensor& x) { return x.as_matrix(); }

}  // namespace neuroalign::nn
