#include "neuroalign/backbone.hpp"

#include <algorithm>

#include "neuroalign/error.hpp"

namespace neuroalign {

using nlohmann::json;

std::string to_string(Variant variant) { return variant == Variant::full ? "full" : "tiny"; }

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "tiny") return Variant::tiny;
  throw InvalidArgument("unsupported backbone variant '" + name + "'");
}

BackboneSpec BackboneSpec::full() {
  BackboneSpec s;
  s.variant = Variant::full;
  s.stage_channels = {64, 128, 256, 512};
  s.recurrence_counts = {1, 2, 4, 2};
  s.n_classes = 1000;
  s.input_height = 224;
  s.input_width = 224;
  s.norm_mean = {0.485, 0.456, 0.406};
  s.norm_std = {0.229, 0.224, 0.225};
  return s;
}

BackboneSpec BackboneSpec::tiny() { return BackboneSpec{}; }

void BackboneSpec::validate() const {
  if (n_classes < 2) throw InvalidArgument("backbone spec: n_classes must be >= 2");
  if (variant == Variant::full &&
      recurrence_counts != std::array<std::size_t, kNumStages>{1, 2, 4, 2}) {
    throw InvalidArgument("backbone spec: full variant requires recurrence counts (1, 2, 4, 2)");
  }
  if (recurrence_counts[0] != 1) throw InvalidArgument("backbone spec: V1 is not recurrent");
  for (std::size_t i = 0; i < kNumStages; ++i) {
    if (stage_channels[i] == 0) throw InvalidArgument("backbone spec: stage channels must be > 0");
    if (recurrence_counts[i] == 0) throw InvalidArgument("backbone spec: recurrence counts must be > 0");
  }
  if (bottleneck_scale == 0) throw InvalidArgument("backbone spec: bottleneck_scale must be > 0");
  // V1 downsamples by 4, each later stage by 2.
  if (input_height < 32 || input_width < 32) {
    throw InvalidArgument("backbone spec: input must be at least 32x32");
  }
  for (double s : norm_std) {
    if (!(s > 0.0)) throw InvalidArgument("backbone spec: norm_std entries must be positive");
  }
}

json BackboneSpec::to_json() const {
  return {{"variant", to_string(variant)},
          {"stage_channels", stage_channels},
          {"recurrence_counts", recurrence_counts},
          {"n_classes", n_classes},
          {"input_size", {input_height, input_width}},
          {"bottleneck_scale", bottleneck_scale},
          {"norm_mean", norm_mean},
          {"norm_std", norm_std}};
}

BackboneSpec BackboneSpec::from_json(const json& j) {
  BackboneSpec s = parse_variant(j.value("variant", "tiny")) == Variant::full ? full() : tiny();
  if (j.contains("stage_channels")) s.stage_channels = j["stage_channels"].get<std::array<std::size_t, 4>>();
  if (j.contains("recurrence_counts")) {
    s.recurrence_counts = j["recurrence_counts"].get<std::array<std::size_t, 4>>();
  }
  if (j.contains("n_classes")) s.n_classes = j["n_classes"].get<std::size_t>();
  if (j.contains("input_size")) {
    const auto size = j["input_size"].get<std::array<std::size_t, 2>>();
    s.input_height = size[0];
    s.input_width = size[1];
  }
  if (j.contains("bottleneck_scale")) s.bottleneck_scale = j["bottleneck_scale"].get<std::size_t>();
  if (j.contains("norm_mean")) s.norm_mean = j["norm_mean"].get<std::array<double, 3>>();
  if (j.contains("norm_std")) s.norm_std = j["norm_std"].get<std::array<double, 3>>();
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------

CorBlock::CorBlock(std::size_t in_channels, std::size_t out_channels, std::size_t times,
                   std::size_t scale)
    : conv_input(in_channels, out_channels, 1),
      skip(out_channels, out_channels, 1, 2),
      conv1(out_channels, out_channels * scale, 1),
      conv2(out_channels * scale, out_channels * scale, 3, 2, 1),
      conv3(out_channels * scale, out_channels, 1),
      norm_skip(out_channels),
      times_(times) {
  for (std::size_t t = 0; t < times; ++t) {
    norm1.emplace_back(out_channels * scale);
    norm2.emplace_back(out_channels * scale);
    norm3.emplace_back(out_channels);
  }
}

void CorBlock::init(Rng& rng) {
  conv_input.init(rng);
  skip.init(rng);
  conv1.init(rng);
  conv2.init(rng);
  conv3.init(rng);
}

Tensor CorBlock::forward(const Tensor& input, bool bn_training, BlockTape* tape) const {
  const Tensor xin = conv_input.forward(input);
  if (tape) {
    tape->input = input;
    tape->steps.assign(times_, {});
  }
  Tensor x = xin;
  for (std::size_t t = 0; t < times_; ++t) {
    BlockStepTape* st = tape ? &tape->steps[t] : nullptr;
    const std::size_t stride = t == 0 ? 2 : 1;
    Tensor skip_out;
    if (t == 0) {
      skip_out = norm_skip.forward(skip.forward(x), bn_training, st ? &st->norm_skip : nullptr);
    } else {
      skip_out = x;
    }
    Tensor r1 = nn::relu(norm1[t].forward(conv1.forward(x), bn_training, st ? &st->norm1 : nullptr));
    Tensor r2 = nn::relu(
        norm2[t].forward(conv2.forward(r1, stride), bn_training, st ? &st->norm2 : nullptr));
    Tensor s = norm3[t].forward(conv3.forward(r2), bn_training, st ? &st->norm3 : nullptr);
    s += skip_out;
    Tensor out = nn::relu(s);
    if (st) {
      st->x = std::move(x);
      st->relu1 = std::move(r1);
      st->relu2 = std::move(r2);
      st->out = out;
      st->stride = stride;
    }
    x = std::move(out);
  }
  return x;
}

Tensor CorBlock::backward(const BlockTape& tape, const Tensor& dy) {
  Tensor d_out = dy;
  for (std::size_t t = times_; t-- > 0;) {
    const BlockStepTape& st = tape.steps[t];
    const Tensor ds = nn::relu_backward(st.out, d_out);
    const Tensor d_c3 = norm3[t].backward(st.norm3, ds);
    const Tensor d_r2 = conv3.backward(st.relu2, d_c3);
    const Tensor d_c2 = norm2[t].backward(st.norm2, nn::relu_backward(st.relu2, d_r2));
    const Tensor d_r1 = conv2.backward(st.relu1, d_c2, st.stride);
    const Tensor d_c1 = norm1[t].backward(st.norm1, nn::relu_backward(st.relu1, d_r1));
    Tensor d_x = conv1.backward(st.x, d_c1);
    if (t == 0) {
      d_x += skip.backward(st.x, norm_skip.backward(st.norm_skip, ds));
    } else {
      d_x += ds;
    }
    d_out = std::move(d_x);
  }
  return conv_input.backward(tape.input, d_out);
}

void CorBlock::update_running(const BlockTape& tape) {
  for (std::size_t t = 0; t < times_; ++t) {
    const BlockStepTape& st = tape.steps[t];
    if (t == 0) norm_skip.update_running(st.norm_skip);
    norm1[t].update_running(st.norm1);
    norm2[t].update_running(st.norm2);
    norm3[t].update_running(st.norm3);
  }
}

namespace {

void add_norm(const std::string& name, nn::BatchNorm2d& bn, std::vector<nn::NamedParameter>& out) {
  out.push_back({name + ".weight", &bn.weight});
  out.push_back({name + ".bias", &bn.bias});
}

void add_norm_buffers(const std::string& name, nn::BatchNorm2d& bn,
                      std::vector<nn::NamedBuffer>& out) {
  out.push_back({name + ".running_mean", &bn.running_mean});
  out.push_back({name + ".running_var", &bn.running_var});
}

}  // namespace

void CorBlock::append_parameters(const std::string& prefix, std::vector<nn::NamedParameter>& out) {
  out.push_back({prefix + ".conv_input.weight", &conv_input.weight});
  out.push_back({prefix + ".skip.weight", &skip.weight});
  add_norm(prefix + ".norm_skip", norm_skip, out);
  out.push_back({prefix + ".conv1.weight", &conv1.weight});
  out.push_back({prefix + ".conv2.weight", &conv2.weight});
  out.push_back({prefix + ".conv3.weight", &conv3.weight});
  for (std::size_t t = 0; t < times_; ++t) {
    add_norm(prefix + ".norm1_" + std::to_string(t), norm1[t], out);
    add_norm(prefix + ".norm2_" + std::to_string(t), norm2[t], out);
    add_norm(prefix + ".norm3_" + std::to_string(t), norm3[t], out);
  }
}

void CorBlock::append_buffers(const std::string& prefix, std::vector<nn::NamedBuffer>& out) {
  add_norm_buffers(prefix + ".norm_skip", norm_skip, out);
  for (std::size_t t = 0; t < times_; ++t) {
    add_norm_buffers(prefix + ".norm1_" + std::to_string(t), norm1[t], out);
    add_norm_buffers(prefix + ".norm2_" + std::to_string(t), norm2[t], out);
    add_norm_buffers(prefix + ".norm3_" + std::to_string(t), norm3[t], out);
  }
}

std::vector<nn::BatchNorm2d*> CorBlock::norms() {
  std::vector<nn::BatchNorm2d*> out{&norm_skip};
  for (std::size_t t = 0; t < times_; ++t) {
    out.push_back(&norm1[t]);
    out.push_back(&norm2[t]);
    out.push_back(&norm3[t]);
  }
  return out;
}

// ---------------------------------------------------------------------------

Backbone Backbone::build(const BackboneSpec& spec, std::uint64_t seed) {
  spec.validate();
  Backbone b;
  b.spec_ = spec;
  const auto& ch = spec.stage_channels;
  b.v1_conv1_ = nn::Conv2d(3, ch[0], 7, 2, 3);
  b.v1_norm1_ = nn::BatchNorm2d(ch[0]);
  b.v1_conv2_ = nn::Conv2d(ch[0], ch[0], 3, 1, 1);
  b.v1_norm2_ = nn::BatchNorm2d(ch[0]);
  for (std::size_t i = 0; i < 3; ++i) {
    b.blocks_[i] = CorBlock(ch[i], ch[i + 1], spec.recurrence_counts[i + 1], spec.bottleneck_scale);
  }
  b.decoder_ = nn::Linear(ch[3], spec.n_classes);

  Rng rng(seed);
  b.v1_conv1_.init(rng);
  b.v1_conv2_.init(rng);
  for (auto& block : b.blocks_) block.init(rng);
  b.decoder_.init(rng);
  return b;
}

Tensor Backbone::normalize(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != spec_.input_height ||
      images.dim(3) != spec_.input_width) {
    throw InvalidArgument("backbone expects images [N, 3, " + std::to_string(spec_.input_height) +
                          ", " + std::to_string(spec_.input_width) + "], got " +
                          shape_to_string(images.shape()));
  }
  Tensor x = images;
  const std::size_t n = images.dim(0), hw = spec_.input_height * spec_.input_width;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t c = 0; c < 3; ++c) {
      double* p = x.data() + (b * 3 + c) * hw;
      const double m = spec_.norm_mean[c], s = spec_.norm_std[c];
      for (std::size_t i = 0; i < hw; ++i) p[i] = (p[i] - m) / s;
    }
  }
  return x;
}

Tensor Backbone::v1_forward(const Tensor& x, bool bn_training, V1Tape* tape) const {
  Tensor r1 = nn::relu(v1_norm1_.forward(v1_conv1_.forward(x), bn_training, tape ? &tape->norm1 : nullptr));
  Tensor pooled = nn::max_pool2d(r1, 3, 2, 1, tape ? &tape->pool_cache : nullptr);
  Tensor out = nn::relu(
      v1_norm2_.forward(v1_conv2_.forward(pooled), bn_training, tape ? &tape->norm2 : nullptr));
  if (tape) {
    tape->input = x;
    tape->relu1 = std::move(r1);
    tape->pooled = std::move(pooled);
    tape->out = out;
  }
  return out;
}

void Backbone::v1_backward(const V1Tape& tape, const Tensor& dy) {
  const Tensor d_c2 = v1_norm2_.backward(tape.norm2, nn::relu_backward(tape.out, dy));
  const Tensor d_pooled = v1_conv2_.backward(tape.pooled, d_c2);
  const Tensor d_r1 = nn::max_pool2d_backward(tape.pool_cache, d_pooled);
  const Tensor d_c1 = v1_norm1_.backward(tape.norm1, nn::relu_backward(tape.relu1, d_r1));
  v1_conv1_.backward(tape.input, d_c1);
}

LayerActivations Backbone::forward(const Tensor& images) const {
  LayerActivations acts;
  acts.stages[0] = v1_forward(normalize(images), false, nullptr);
  for (std::size_t i = 0; i < 3; ++i) acts.stages[i + 1] = blocks_[i].forward(acts.stages[i], false, nullptr);
  acts.logits = decoder_.forward(nn::global_avg_pool(acts.stages[3]));
  return acts;
}

LayerActivations Backbone::forward_train(const Tensor& images, const ForwardOptions& options,
                                         BackboneTape* tape) {
  BackboneTape local;
  BackboneTape& t = tape ? *tape : local;
  LayerActivations acts;
  acts.stages[0] = v1_forward(normalize(images), options.bn_training, &t.v1);
  for (std::size_t i = 0; i < 3; ++i) {
    acts.stages[i + 1] = blocks_[i].forward(acts.stages[i], options.bn_training, &t.blocks[i]);
  }
  t.pooled = nn::global_avg_pool(acts.stages[3]);
  t.it_shape = acts.stages[3].shape();
  acts.logits = decoder_.forward(t.pooled);
  if (options.bn_training && options.update_bn_stats) {
    v1_norm1_.update_running(t.v1.norm1);
    v1_norm2_.update_running(t.v1.norm2);
    for (std::size_t i = 0; i < 3; ++i) blocks_[i].update_running(t.blocks[i]);
  }
  return acts;
}

void Backbone::backward(const BackboneTape& tape, const LayerGradients& grads) {
  Tensor d(tape.it_shape);
  if (grads.logits.size() > 0) {
    d = nn::global_avg_pool_backward(tape.it_shape, decoder_.backward(tape.pooled, grads.logits));
  }
  for (std::size_t s = kNumStages; s-- > 0;) {
    if (!grads.stages[s].empty()) d += grads.stages[s];
    if (s == 0) break;
    d = blocks_[s - 1].backward(tape.blocks[s - 1], d);
  }
  v1_backward(tape.v1, d);
}

std::vector<nn::NamedParameter> Backbone::parameters() {
  std::vector<nn::NamedParameter> out;
  out.push_back({"v1.conv1.weight", &v1_conv1_.weight});
  add_norm("v1.norm1", v1_norm1_, out);
  out.push_back({"v1.conv2.weight", &v1_conv2_.weight});
  add_norm("v1.norm2", v1_norm2_, out);
  static constexpr std::array<const char*, 3> kBlockNames = {"v2", "v4", "it"};
  for (std::size_t i = 0; i < 3; ++i) blocks_[i].append_parameters(kBlockNames[i], out);
  out.push_back({"decoder.linear.weight", &decoder_.weight});
  out.push_back({"decoder.linear.bias", &decoder_.bias});
  return out;
}

std::vector<nn::NamedBuffer> Backbone::buffers() {
  std::vector<nn::NamedBuffer> out;
  add_norm_buffers("v1.norm1", v1_norm1_, out);
  add_norm_buffers("v1.norm2", v1_norm2_, out);
  static constexpr std::array<const char*, 3> kBlockNames = {"v2", "v4", "it"};
  for (std::size_t i = 0; i < 3; ++i) blocks_[i].append_buffers(kBlockNames[i], out);
  return out;
}

void Backbone::zero_grad() {
  for (auto& p : parameters()) p.parameter->zero_grad();
}

std::array<Shape, kNumStages> Backbone::stage_shapes() const {
  const auto& ch = spec_.stage_channels;
  auto conv_out = [](std::size_t in, std::size_t k, std::size_t s, std::size_t p) {
    return (in + 2 * p - k) / s + 1;
  };
  std::size_t h = conv_out(conv_out(spec_.input_height, 7, 2, 3), 3, 2, 1);
  std::size_t w = conv_out(conv_out(spec_.input_width, 7, 2, 3), 3, 2, 1);
  std::array<Shape, kNumStages> shapes;
  shapes[0] = {ch[0], h, w};
  for (std::size_t i = 1; i < kNumStages; ++i) {
    h = conv_out(h, 3, 2, 1);
    w = conv_out(w, 3, 2, 1);
    shapes[i] = {ch[i], h, w};
  }
  return shapes;
}

std::array<std::size_t, kNumStages> Backbone::stage_flat_dims() const {
  std::array<std::size_t, kNumStages> dims{};
  const auto shapes = stage_shapes();
  for (std::size_t i = 0; i < kNumStages; ++i) dims[i] = shapes[i][0] * shapes[i][1] * shapes[i][2];
  return dims;
}

std::vector<nn::BatchNorm2d*> Backbone::all_norms() {
  std::vector<nn::BatchNorm2d*> out{&v1_norm1_, &v1_norm2_};
  for (auto& block : blocks_) {
    for (auto* bn : block.norms()) out.push_back(bn);
  }
  return out;
}

void Backbone::calibrate_batchnorm(const Tensor& images, std::size_t batch_size) {
  if (images.empty()) return;
  if (batch_size < 2) throw InvalidArgument("calibrate_batchnorm: batch_size must be >= 2");
  auto norms = all_norms();
  std::vector<double> saved;
  for (auto* bn : norms) saved.push_back(bn->momentum());
  const std::size_t n = images.dim(0);
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < n; start += batch_size, ++batch_index) {
    const std::size_t end = std::min(n, start + batch_size);
    if (end - start < 2 && batch_index > 0) break;
    // Momentum 1/(b+1) makes the running value the plain mean over batches.
    for (auto* bn : norms) bn->set_momentum(1.0 / static_cast<double>(batch_index + 1));
    BackboneTape tape;
    forward_train(images.slice0(start, end), ForwardOptions{true, true}, &tape);
  }
  for (std::size_t i = 0; i < norms.size(); ++i) norms[i]->set_momentum(saved[i]);
}

LayerActivations forward_batched(const Backbone& backbone, const Tensor& images,
                                 std::size_t batch_size) {
  if (batch_size == 0) throw InvalidArgument("forward_batched: batch_size must be > 0");
  const std::size_t n = images.rank() == 4 ? images.dim(0) : 0;
  if (n == 0) throw InvalidArgument("forward_batched: empty image batch");
  if (n <= batch_size) return backbone.forward(images);
  LayerActivations out;
  const auto shapes = backbone.stage_shapes();
  for (std::size_t s = 0; s < kNumStages; ++s) {
    out.stages[s] = Tensor({n, shapes[s][0], shapes[s][1], shapes[s][2]});
  }
  out.logits.resize(static_cast<Eigen::Index>(n),
                    static_cast<Eigen::Index>(backbone.spec().n_classes));
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    const LayerActivations part = backbone.forward(images.slice0(start, end));
    for (std::size_t s = 0; s < kNumStages; ++s) {
      std::copy(part.stages[s].values().begin(), part.stages[s].values().end(),
                out.stages[s].data() + start * out.stages[s].stride0());
    }
    out.logits.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) =
        part.logits;
  }
  return out;
}

std::vector<int> teacher_labels(const Backbone& frozen, const Tensor& images, std::size_t batch_size) {
  const LayerActivations acts = forward_batched(frozen, images, batch_size);
  std::vector<int> labels(static_cast<std::size_t>(acts.logits.rows()));
  for (Eigen::Index i = 0; i < acts.logits.rows(); ++i) {
    Eigen::Index arg = 0;
    acts.logits.row(i).maxCoeff(&arg);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return labels;
}

}  // namespace neuroalign
