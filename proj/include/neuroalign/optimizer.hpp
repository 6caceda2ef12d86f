#pragma once

#include <cstddef>
#include <vector>

#include "json.hpp"

#include "neuroalign/nn.hpp"

namespace neuroalign {

struct AdamOptions {
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  nlohmann::json to_json() const;
};

// Adam with bias correction, constant learning rate and no weight decay.
// Moment buffers are matched to parameters by position; pass the same list,
// in the same order, on every step.
class Adam {
 public:
  explicit Adam(AdamOptions options) : options_(options) {}

  void step(const std::vector<nn::NamedParameter>& params);
  std::size_t steps_taken() const { return t_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace neuroalign
