#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "neuroalign/nn.hpp"
#include "neuroalign/tensor.hpp"

namespace neuroalign {

enum class Variant { full, tiny };

std::string to_string(Variant variant);
Variant parse_variant(const std::string& name);

inline constexpr std::size_t kNumStages = 4;
inline constexpr std::array<const char*, kNumStages> kStageNames = {"V1", "V2", "V4", "IT"};

struct BackboneSpec {
  Variant variant = Variant::tiny;
  std::array<std::size_t, kNumStages> stage_channels{16, 32, 64, 128};
  std::array<std::size_t, kNumStages> recurrence_counts{1, 2, 4, 2};
  std::size_t n_classes = 10;
  std::size_t input_height = 32;
  std::size_t input_width = 32;
  std::size_t bottleneck_scale = 4;
  std::array<double, 3> norm_mean{0.5, 0.5, 0.5};
  std::array<double, 3> norm_std{0.25, 0.25, 0.25};

  // CORnet-S: channels (64, 128, 256, 512), 224x224 input, 1000 classes.
  static BackboneSpec full();
  // Desk-scale variant: channels (16, 32, 64, 128), 32x32 input, 10 classes.
  static BackboneSpec tiny();

  void validate() const;
  nlohmann::json to_json() const;
  static BackboneSpec from_json(const nlohmann::json& j);
};

struct LayerActivations {
  std::array<Tensor, kNumStages> stages;  // V1, V2, V4, IT; each [N, C, H, W]
  RowMatrix logits;                       // N x n_classes

  const Tensor& v1() const { return stages[0]; }
  const Tensor& v2() const { return stages[1]; }
  const Tensor& v4() const { return stages[2]; }
  const Tensor& it() const { return stages[3]; }
  std::size_t batch() const { return stages[0].empty() ? 0 : stages[0].dim(0); }
};

// Upstream gradients for a backward pass; empty members count as zero.
struct LayerGradients {
  std::array<Tensor, kNumStages> stages;
  RowMatrix logits;
};

struct V1Tape {
  Tensor input;
  nn::BatchNormCache norm1;
  Tensor relu1;
  nn::MaxPoolCache pool_cache;
  Tensor pooled;
  nn::BatchNormCache norm2;
  Tensor out;
};

struct BlockStepTape {
  Tensor x;
  nn::BatchNormCache norm_skip;
  nn::BatchNormCache norm1;
  Tensor relu1;
  nn::BatchNormCache norm2;
  Tensor relu2;
  nn::BatchNormCache norm3;
  Tensor out;
  std::size_t stride = 1;
};

struct BlockTape {
  Tensor input;
  std::vector<BlockStepTape> steps;
};

struct BackboneTape {
  V1Tape v1;
  std::array<BlockTape, 3> blocks;
  RowMatrix pooled;
  Shape it_shape;
};

struct ForwardOptions {
  bool bn_training = true;   // batch statistics vs running statistics
  bool update_bn_stats = true;
};

// Recurrent bottleneck block: 1x1 input conv, then `times` passes of
// 1x1 -> 3x3 (stride 2 on the first pass) -> 1x1 with a residual skip. The
// convolutions are shared across passes; batch norms are per pass.
class CorBlock {
 public:
  CorBlock() = default;
  CorBlock(std::size_t in_channels, std::size_t out_channels, std::size_t times,
           std::size_t scale);

  void init(Rng& rng);
  Tensor forward(const Tensor& input, bool bn_training, BlockTape* tape) const;
  Tensor backward(const BlockTape& tape, const Tensor& dy);
  void update_running(const BlockTape& tape);
  void append_parameters(const std::string& prefix, std::vector<nn::NamedParameter>& out);
  void append_buffers(const std::string& prefix, std::vector<nn::NamedBuffer>& out);
  std::vector<nn::BatchNorm2d*> norms();

  std::size_t times() const { return times_; }

  nn::Conv2d conv_input, skip, conv1, conv2, conv3;
  nn::BatchNorm2d norm_skip;
  std::vector<nn::BatchNorm2d> norm1, norm2, norm3;

 private:
  std::size_t times_ = 1;
};

class Backbone {
 public:
  Backbone() = default;

  // Throws InvalidArgument for an invalid spec.
  static Backbone build(const BackboneSpec& spec, std::uint64_t seed);

  const BackboneSpec& spec() const { return spec_; }

  // Inference: running batch-norm statistics, no tape.
  LayerActivations forward(const Tensor& images) const;
  LayerActivations forward_train(const Tensor& images, const ForwardOptions& options,
                                 BackboneTape* tape);
  // Accumulates parameter gradients.
  void backward(const BackboneTape& tape, const LayerGradients& grads);

  std::vector<nn::NamedParameter> parameters();
  std::vector<nn::NamedBuffer> buffers();
  void zero_grad();

  // Shape of each stage activation for one image: (C, H, W).
  std::array<Shape, kNumStages> stage_shapes() const;
  std::array<std::size_t, kNumStages> stage_flat_dims() const;

  // Sets every batch-norm running statistic to the average over batches of
  // the batch statistics of `images`.
  void calibrate_batchnorm(const Tensor& images, std::size_t batch_size);

  nn::Linear& decoder() { return decoder_; }
  const nn::Linear& decoder() const { return decoder_; }

 private:
  Tensor normalize(const Tensor& images) const;
  Tensor v1_forward(const Tensor& x, bool bn_training, V1Tape* tape) const;
  void v1_backward(const V1Tape& tape, const Tensor& dy);
  std::vector<nn::BatchNorm2d*> all_norms();

  BackboneSpec spec_;
  nn::Conv2d v1_conv1_, v1_conv2_;
  nn::BatchNorm2d v1_norm1_, v1_norm2_;
  std::array<CorBlock, 3> blocks_;
  nn::Linear decoder_;
};

// Forward over a large image set in fixed-size batches.
LayerActivations forward_batched(const Backbone& backbone, const Tensor& images,
                                 std::size_t batch_size);

// argmax of the frozen backbone's logits (lowest index on ties).
std::vector<int> teacher_labels(const Backbone& frozen, const Tensor& images,
                                std::size_t batch_size = 64);

}  // namespace neuroalign
