#include "neuroalign/optimizer.hpp"

#include <cmath>

#include "neuroalign/error.hpp"

namespace neuroalign {

nlohmann::json AdamOptions::to_json() const {
  return {{"learning_rate", learning_rate}, {"beta1", beta1}, {"beta2", beta2}, {"epsilon", epsilon}};
}

void Adam::step(const std::vector<nn::NamedParameter>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.parameter->value.shape());
      v_.emplace_back(p.parameter->value.shape());
    }
  }
  if (m_.size() != params.size()) throw InvalidArgument("Adam::step: parameter list changed size");
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double lr = options_.learning_rate;
  for (std::size_t k = 0; k < params.size(); ++k) {
    nn::Parameter& p = *params[k].parameter;
    if (!p.trainable) continue;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.epsilon);
    }
  }
}

}  // namespace neuroalign
