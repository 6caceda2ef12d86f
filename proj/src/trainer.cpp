#include "neuroalign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "neuroalign/checkpoint.hpp"
#include "neuroalign/error.hpp"
#include "neuroalign/random.hpp"

namespace neuroalign {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(LabelSource source) {
  return source == LabelSource::teacher ? "teacher" : "manifest";
}

LabelSource parse_label_source(const std::string& name) {
  if (name == "teacher") return LabelSource::teacher;
  if (name == "manifest") return LabelSource::manifest;
  throw ConfigError("label_source: expected 'teacher' or 'manifest', got '" + name + "'");
}

std::string to_string(BnStatsMode mode) { return mode == BnStatsMode::update ? "update" : "frozen"; }

BnStatsMode parse_bn_stats_mode(const std::string& name) {
  if (name == "update") return BnStatsMode::update;
  if (name == "frozen") return BnStatsMode::frozen;
  throw ConfigError("bn_stats: expected 'update' or 'frozen', got '" + name + "'");
}

namespace {

const std::set<std::string> kFreezable = {"V1", "V2", "V4", "IT", "decoder"};

std::string param_stage(const std::string& name) {
  if (name.rfind("v1.", 0) == 0) return "V1";
  if (name.rfind("v2.", 0) == 0) return "V2";
  if (name.rfind("v4.", 0) == 0) return "V4";
  if (name.rfind("it.", 0) == 0) return "IT";
  if (name.rfind("decoder.", 0) == 0) return "decoder";
  return "";
}

void require_positive(double v, const char* field) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string(field) + ": must be positive and finite");
  }
}

}  // namespace

void AlignmentConfig::validate() const {
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta: must be >= 0 and finite");
  require_positive(learning_rate, "learning_rate");
  if (epochs < 1) throw ConfigError("epochs: must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size: must be >= 2 for the contrastive term");
  if (optimizer != "adam") throw ConfigError("optimizer: only 'adam' is supported, got '" + optimizer + "'");
  if (rank_mode == RankMode::spearman) {
    throw ConfigError("rank_mode: exact spearman has no gradient; use 'pearson' or 'soft'");
  }
  require_positive(soft_rank_temperature, "soft_rank_temperature");
  if (pca_k < 3) throw ConfigError("pca_k: must be >= 3");
  if (per_layer_dim < 1) throw ConfigError("per_layer_dim: must be >= 1");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1: must be in (0, 1)");
  if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2: must be in (0, 1)");
  require_positive(adam_epsilon, "adam_epsilon");
  for (const auto& s : frozen_stages) {
    if (!kFreezable.count(s)) {
      throw ConfigError("frozen_stages: unknown stage '" + s + "' (expected V1, V2, V4, IT or decoder)");
    }
  }
}

json AlignmentConfig::to_json() const {
  return {{"beta", beta},
          {"learning_rate", learning_rate},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"optimizer", optimizer},
          {"rank_mode", rank_mode == RankMode::soft_rank ? "soft" : to_string(rank_mode)},
          {"soft_rank_temperature", soft_rank_temperature},
          {"pca_k", pca_k},
          {"per_layer_dim", per_layer_dim},
          {"zscore", zscore},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_epsilon", adam_epsilon},
          {"bn_stats", to_string(bn_stats)},
          {"frozen_stages", frozen_stages},
          {"label_source", to_string(label_source)}};
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(key) + ": wrong type (" + j.at(key).type_name() + ")");
  }
}

template <typename T>
void read_unsigned(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
    throw ConfigError(std::string(key) + ": expected a non-negative integer");
  }
  out = v.get<T>();
}

}  // namespace

AlignmentConfig AlignmentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("alignment config: expected a JSON object");
  static const std::set<std::string> known = {
      "beta", "learning_rate", "epochs", "batch_size", "seed", "optimizer", "rank_mode",
      "soft_rank_temperature", "pca_k", "per_layer_dim", "zscore", "adam_beta1", "adam_beta2",
      "adam_epsilon", "bn_stats", "frozen_stages", "label_source"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError(key + ": unknown field");
  }
  AlignmentConfig c;
  read_field(j, "beta", c.beta);
  read_field(j, "learning_rate", c.learning_rate);
  read_unsigned(j, "epochs", c.epochs);
  read_unsigned(j, "batch_size", c.batch_size);
  read_unsigned(j, "seed", c.seed);
  read_field(j, "optimizer", c.optimizer);
  if (j.contains("rank_mode")) {
    std::string m;
    read_field(j, "rank_mode", m);
    try {
      c.rank_mode = parse_rank_mode(m);
    } catch (const Error&) {
      throw ConfigError("rank_mode: expected 'pearson' or 'soft', got '" + m + "'");
    }
  }
  read_field(j, "soft_rank_temperature", c.soft_rank_temperature);
  read_unsigned(j, "pca_k", c.pca_k);
  read_unsigned(j, "per_layer_dim", c.per_layer_dim);
  read_field(j, "zscore", c.zscore);
  read_field(j, "adam_beta1", c.adam_beta1);
  read_field(j, "adam_beta2", c.adam_beta2);
  read_field(j, "adam_epsilon", c.adam_epsilon);
  if (j.contains("bn_stats")) {
    std::string m;
    read_field(j, "bn_stats", m);
    c.bn_stats = parse_bn_stats_mode(m);
  }
  read_field(j, "frozen_stages", c.frozen_stages);
  if (j.contains("label_source")) {
    std::string m;
    read_field(j, "label_source", m);
    c.label_source = parse_label_source(m);
  }
  c.validate();
  return c;
}

GenerationOptions AlignmentConfig::generation_options() const {
  GenerationOptions g;
  g.rank_mode = rank_mode;
  g.soft_rank_temperature = soft_rank_temperature;
  return g;
}

AdamOptions AlignmentConfig::adam_options() const {
  return {learning_rate, adam_beta1, adam_beta2, adam_epsilon};
}

json StepRecord::to_json() const {
  json j = {{"step", step}, {"epoch", epoch}, {"batch_size", batch_size}};
  j["losses"] = losses.to_json();
  return j;
}

std::size_t steps_per_epoch(std::size_t n_samples, std::size_t batch_size) {
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  return (n_samples + batch_size - 1) / batch_size;
}

namespace {

void check_data(const AlignmentConfig& config, const Backbone& backbone, const TrainingData& data) {
  const std::size_t n = data.images.rank() == 4 ? data.images.dim(0) : 0;
  if (data.images.rank() != 4 || data.images.dim(1) != 3) {
    throw InvalidArgument("training images must be [N, 3, H, W], got " + shape_to_string(data.images.shape()));
  }
  const auto& spec = backbone.spec();
  if (data.images.dim(2) != spec.input_height || data.images.dim(3) != spec.input_width) {
    throw InvalidArgument("training images are " + std::to_string(data.images.dim(2)) + "x" +
                          std::to_string(data.images.dim(3)) + " but the backbone expects " +
                          std::to_string(spec.input_height) + "x" + std::to_string(spec.input_width));
  }
  if (n == 0) throw InvalidArgument("training set is empty");
  if (static_cast<std::size_t>(data.responses.rows()) != n) {
    throw InvalidArgument("responses have " + std::to_string(data.responses.rows()) + " rows for " +
                          std::to_string(n) + " images");
  }
  if (static_cast<std::size_t>(data.responses.cols()) != config.pca_k) {
    throw InvalidArgument("responses have " + std::to_string(data.responses.cols()) +
                          " features but pca_k is " + std::to_string(config.pca_k));
  }
  if (!data.stimulus_ids.empty() && data.stimulus_ids.size() != n) {
    throw InvalidArgument("stimulus_ids length does not match the number of images");
  }
  if (config.label_source == LabelSource::manifest) {
    if (data.manifest_labels.size() != n) {
      throw InvalidArgument("label_source 'manifest' requires a class_label for every stimulus");
    }
    for (int l : data.manifest_labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= spec.n_classes) {
        throw InvalidArgument("manifest class_label " + std::to_string(l) + " is outside [0, " +
                              std::to_string(spec.n_classes) + ")");
      }
    }
  }
}

RowMatrix gather_rows(const RowMatrix& m, std::span<const std::size_t> rows) {
  RowMatrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = m.row(rows[i]);
  return out;
}

void append_line(const fs::path& path, const json& record) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw RuntimeFailure("cannot append to " + path.string());
  out << record.dump() << "\n";
}

}  // namespace

TrainResult train(const AlignmentConfig& config, const Backbone& backbone_init, const TrainingData& data,
                  const TrainOptions& options) {
  config.validate();
  check_data(config, backbone_init, data);
  const std::size_t n = data.images.dim(0);

  TrainResult result;
  result.teacher = backbone_init;
  result.model.config = config;
  result.model.backbone = backbone_init;

  EncoderHeadConfig head_cfg;
  head_cfg.per_layer_dim = config.per_layer_dim;
  head_cfg.target_dim = config.pca_k;
  result.model.head =
      AlignmentHead::build(head_cfg, backbone_init.stage_flat_dims(), derive_seed(config.seed, {1}));

  Backbone& backbone = result.model.backbone;
  AlignmentHead& head = result.model.head;

  const std::vector<int> labels = config.label_source == LabelSource::teacher
                                      ? teacher_labels(result.teacher, data.images, options.teacher_batch)
                                      : data.manifest_labels;

  std::vector<nn::NamedParameter> params = backbone.parameters();
  for (auto& p : params) {
    const std::string stage = param_stage(p.name);
    p.parameter->trainable =
        std::find(config.frozen_stages.begin(), config.frozen_stages.end(), stage) == config.frozen_stages.end();
  }
  for (auto& p : head.parameters()) params.push_back(p);
  Adam adam(config.adam_options());

  std::optional<fs::path> log_path;
  if (options.output_dir) {
    fs::create_directories(*options.output_dir / "checkpoints");
    log_path = *options.output_dir / "training_log.jsonl";
    std::ofstream(*log_path, std::ios::trunc);
    append_line(*log_path, {{"type", "header"},
                            {"config", config.to_json()},
                            {"adam", config.adam_options().to_json()},
                            {"n_samples", n},
                            {"steps_per_epoch", steps_per_epoch(n, config.batch_size)}});
  }

  ForwardOptions fwd;
  fwd.bn_training = config.bn_stats == BnStatsMode::update;
  fwd.update_bn_stats = fwd.bn_training;
  const GenerationOptions gen_opts = config.generation_options();

  std::vector<std::size_t> order(n);
  std::size_t step = 0;
  double best_generation = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, {2, epoch}));
    std::shuffle(order.begin(), order.end(), rng);
    double sum_gen = 0.0, sum_total = 0.0;
    std::size_t n_steps = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Tensor images = data.images.gather0(idx);
      const RowMatrix real = gather_rows(data.responses, idx);
      std::vector<int> batch_labels;
      for (std::size_t i : idx) batch_labels.push_back(labels[i]);

      backbone.zero_grad();
      head.zero_grad();
      BackboneTape btape;
      const LayerActivations acts = backbone.forward_train(images, fwd, &btape);
      HeadTape htape;
      const RowMatrix generated = head.encode(acts, &htape);
      GenerationOptions g = gen_opts;
      g.allow_positive_only = idx.size() < 2;
      AlignmentGradients grads;
      const LossBreakdown losses =
          alignment_loss(acts.logits, batch_labels, generated, real, config.beta, g, &grads);
      LayerGradients lg;
      lg.stages = head.backward(htape, grads.d_generated);
      lg.logits = grads.d_logits;
      backbone.backward(btape, lg);
      adam.step(params);

      StepRecord rec{step, epoch, idx.size(), losses};
      if (log_path) append_line(*log_path, rec.to_json());
      if (options.on_step) options.on_step(rec);
      result.log.steps.push_back(rec);
      sum_gen += losses.generation;
      sum_total += losses.total;
      ++n_steps;
      ++step;
    }
    const double mean_gen = sum_gen / static_cast<double>(n_steps);
    result.log.epoch_mean_generation.push_back(mean_gen);
    result.log.epoch_mean_total.push_back(sum_total / static_cast<double>(n_steps));
    const bool is_best = mean_gen < best_generation;
    if (is_best) {
      best_generation = mean_gen;
      result.log.best_epoch = epoch;
    }
    if (options.output_dir) {
      const json extra = {{"alignment_config", config.to_json()}, {"epoch", epoch},
                          {"epoch_mean_generation", mean_gen}};
      const fs::path ck = *options.output_dir / "checkpoints";
      save_checkpoint(ck / ("epoch_" + std::to_string(epoch)), backbone, &head, extra);
      if (is_best) {
        fs::remove_all(ck / "best");
        save_checkpoint(ck / "best", backbone, &head, extra);
      }
      append_line(*log_path, {{"type", "epoch_end"},
                              {"epoch", epoch},
                              {"mean_generation", mean_gen},
                              {"mean_total", result.log.epoch_mean_total.back()},
                              {"best", is_best}});
    }
  }
  if (options.output_dir) {
    save_checkpoint(*options.output_dir / "checkpoints" / "final", backbone, &head,
                    {{"alignment_config", config.to_json()}, {"epoch", config.epochs - 1}});
  }
  return result;
}

std::vector<TrainResult> train_individual_suite(const std::vector<AlignmentConfig>& configs,
                                                const Backbone& backbone_init,
                                                const std::vector<TrainingData>& datasets,
                                                const std::vector<std::optional<fs::path>>& output_dirs) {
  if (configs.size() != datasets.size()) {
    throw InvalidArgument("train_individual_suite: " + std::to_string(configs.size()) + " configs for " +
                          std::to_string(datasets.size()) + " datasets");
  }
  if (!output_dirs.empty() && output_dirs.size() != configs.size()) {
    throw InvalidArgument("train_individual_suite: output_dirs must be empty or one per model");
  }
  std::vector<TrainResult> out;
  out.reserve(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    TrainOptions opts;
    if (!output_dirs.empty()) opts.output_dir = output_dirs[i];
    out.push_back(train(configs[i], backbone_init, datasets[i], opts));
  }
  return out;
}

}  // namespace neuroalign
