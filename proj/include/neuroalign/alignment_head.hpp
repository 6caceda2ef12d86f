#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "json.hpp"

#include "neuroalign/backbone.hpp"
#include "neuroalign/nn.hpp"

namespace neuroalign {

struct EncoderHeadConfig {
  std::size_t per_layer_dim = 128;
  std::size_t target_dim = 1024;

  std::size_t concat_dim() const { return kNumStages * per_layer_dim; }
  void validate() const;
  nlohmann::json to_json() const;
  static EncoderHeadConfig from_json(const nlohmann::json& j);
};

struct HeadTape {
  std::array<RowMatrix, kNumStages> flat;     // flattened stage activations
  std::array<RowMatrix, kNumStages> encoded;  // post-ReLU per-stage encodings
  RowMatrix concat;
  std::array<Shape, kNumStages> stage_shapes;
};

// Generates neural responses from the four stage activations: per-stage
// Linear + ReLU to per_layer_dim, concatenation in V1, V2, V4, IT order, then
// a linear map to target_dim. Activations are flattened channel-major (C, H, W).
class AlignmentHead {
 public:
  AlignmentHead() = default;

  static AlignmentHead build(const EncoderHeadConfig& config,
                             const std::array<std::size_t, kNumStages>& stage_flat_dims,
                             std::uint64_t seed);

  const EncoderHeadConfig& config() const { return config_; }
  const std::array<std::size_t, kNumStages>& stage_flat_dims() const { return stage_dims_; }

  // Throws InvalidArgument if an activation's flattened size differs from the
  // size the head was built for.
  RowMatrix encode(const LayerActivations& acts, HeadTape* tape = nullptr) const;
  // Accumulates parameter gradients; returns dL/d(stage activations).
  std::array<Tensor, kNumStages> backward(const HeadTape& tape, const RowMatrix& d_generated);

  std::vector<nn::NamedParameter> parameters();
  void zero_grad();

  std::array<nn::Linear, kNumStages> encoders;
  nn::Linear output;

 private:
  EncoderHeadConfig config_;
  std::array<std::size_t, kNumStages> stage_dims_{};
};

}  // namespace neuroalign
