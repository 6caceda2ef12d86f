#include "neuroalign/alignment_head.hpp"

#include "neuroalign/error.hpp"

namespace neuroalign {

using nlohmann::json;

void EncoderHeadConfig::validate() const {
  if (per_layer_dim < 1) throw InvalidArgument("head config: per_layer_dim must be >= 1");
  if (target_dim < 1) throw InvalidArgument("head config: target_dim must be >= 1");
}

json EncoderHeadConfig::to_json() const {
  return {{"per_layer_dim", per_layer_dim}, {"concat_dim", concat_dim()}, {"target_dim", target_dim}};
}

EncoderHeadConfig EncoderHeadConfig::from_json(const json& j) {
  EncoderHeadConfig c;
  c.per_layer_dim = j.value("per_layer_dim", c.per_layer_dim);
  c.target_dim = j.value("target_dim", c.target_dim);
  if (j.contains("concat_dim") && j["concat_dim"].get<std::size_t>() != c.concat_dim()) {
    throw InvalidArgument("head config: concat_dim must equal 4 x per_layer_dim");
  }
  c.validate();
  return c;
}

AlignmentHead AlignmentHead::build(const EncoderHeadConfig& config,
                                   const std::array<std::size_t, kNumStages>& stage_flat_dims,
                                   std::uint64_t seed) {
  config.validate();
  AlignmentHead head;
  head.config_ = config;
  head.stage_dims_ = stage_flat_dims;
  Rng rng(seed);
  for (std::size_t s = 0; s < kNumStages; ++s) {
    head.encoders[s] = nn::Linear(stage_flat_dims[s], config.per_layer_dim);
    head.encoders[s].init(rng);
  }
  head.output = nn::Linear(config.concat_dim(), config.target_dim);
  head.output.init(rng);
  return head;
}

RowMatrix AlignmentHead::encode(const LayerActivations& acts, HeadTape* tape) const {
  const std::size_t n = acts.batch();
  const auto per = static_cast<Eigen::Index>(config_.per_layer_dim);
  RowMatrix concat(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config_.concat_dim()));
  for (std::size_t s = 0; s < kNumStages; ++s) {
    const Tensor& a = acts.stages[s];
    if (a.rank() != 4 || a.dim(0) != n || a.stride0() != stage_dims_[s]) {
      throw InvalidArgument(std::string("alignment head: stage ") + kStageNames[s] +
                            " activation " + shape_to_string(a.shape()) +
                            " does not match the head's input size " +
                            std::to_string(stage_dims_[s]));
    }
    RowMatrix flat = nn::flatten(a);
    RowMatrix enc = encoders[s].forward(flat).cwiseMax(0.0);
    concat.middleCols(static_cast<Eigen::Index>(s) * per, per) = enc;
    if (tape) {
      tape->flat[s] = std::move(flat);
      tape->encoded[s] = std::move(enc);
      tape->stage_shapes[s] = a.shape();
    }
  }
  RowMatrix out = output.forward(concat);
  if (tape) tape->concat = std::move(concat);
  return out;
}

std::array<Tensor, kNumStages> AlignmentHead::backward(const HeadTape& tape,
                                                       const RowMatrix& d_generated) {
  const RowMatrix d_concat = output.backward(tape.concat, d_generated);
  const auto per = static_cast<Eigen::Index>(config_.per_layer_dim);
  std::array<Tensor, kNumStages> grads;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    RowMatrix d_enc = d_concat.middleCols(static_cast<Eigen::Index>(s) * per, per);
    d_enc = (tape.encoded[s].array() > 0.0).select(d_enc, 0.0);
    const RowMatrix d_flat = encoders[s].backward(tape.flat[s], d_enc);
    grads[s] = Tensor::from_matrix(d_flat).reshaped(tape.stage_shapes[s]);
  }
  return grads;
}

std::vector<nn::NamedParameter> AlignmentHead::parameters() {
  std::vector<nn::NamedParameter> out;
  static constexpr std::array<const char*, kNumStages> kEnc = {"enc_v1", "enc_v2", "enc_v4", "enc_it"};
  for (std::size_t s = 0; s < kNumStages; ++s) {
    out.push_back({std::string("head.") + kEnc[s] + ".weight", &encoders[s].weight});
    out.push_back({std::string("head.") + kEnc[s] + ".bias", &encoders[s].bias});
  }
  out.push_back({"head.output.weight", &output.weight});
  out.push_back({"head.output.bias", &output.bias});
  return out;
}

void AlignmentHead::zero_grad() {
  for (auto& p : parameters()) p.parameter->zero_grad();
}

}  // namespace neuroalign
