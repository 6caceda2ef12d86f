#include "neuroalign/run.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "neuroalign/array_io.hpp"
#include "neuroalign/checkpoint.hpp"
#include "neuroalign/data_ingest.hpp"
#include "neuroalign/dimension_analysis.hpp"
#include "neuroalign/eeg_decoding.hpp"
#include "neuroalign/figures.hpp"
#include "neuroalign/nn.hpp"
#include "neuroalign/preprocessing.hpp"
#include "neuroalign/random.hpp"
#include "neuroalign/rsa.hpp"
#include "neuroalign/synthetic.hpp"
#include "neuroalign/trainer.hpp"
#include "neuroalign/version.hpp"
#include "run_config.hpp"

namespace neuroalign {

namespace fs = std::filesystem;
using nlohmann::json;
using detail::ModelRef;
using detail::RunConfig;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::InvalidArgument: return 3;
    case ErrorKind::Runtime: return 4;
  }
  return 4;
}

namespace {

void warn(const std::string& message) { std::cerr << "warning: " << message << "\n"; }
void info(const std::string& message) { std::cerr << message << "\n"; }

std::string num(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string beta_tag(double beta) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", beta);
  return buf;
}

json json_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : columns_(header.size()) { add(header); }
  void add(const std::vector<std::string>& row) {
    if (row.size() != columns_) throw RuntimeFailure("internal: CSV row width mismatch");
    for (std::size_t i = 0; i < row.size(); ++i) text_ << (i ? "," : "") << row[i];
    text_ << "\n";
  }
  std::string str() const { return text_.str(); }

 private:
  std::size_t columns_;
  std::ostringstream text_;
};

// ---- run directory staging ----

fs::path pick_run_dir(const fs::path& requested, bool overwrite) {
  const fs::path out = fs::absolute(requested).lexically_normal();
  if (overwrite || !fs::exists(out)) return out;
  if (fs::is_directory(out) && fs::is_empty(out)) return out;
  for (int i = 1;; ++i) {
    fs::path candidate = out;
    candidate += "_" + std::to_string(i);
    if (!fs::exists(candidate)) return candidate;
  }
}

class StagedDir {
 public:
  explicit StagedDir(fs::path final_dir) : final_(std::move(final_dir)) {
    fs::create_directories(final_.parent_path());
    staging_ = final_.parent_path() / ("." + final_.filename().string() + ".partial-" + std::to_string(::getpid()));
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }
  const fs::path& path() const { return staging_; }
  const fs::path& final_path() const { return final_; }
  void commit() {
    if (fs::exists(final_)) fs::remove_all(final_);
    fs::rename(staging_, final_);
    committed_ = true;
  }

 private:
  fs::path final_;
  fs::path staging_;
  bool committed_ = false;
};

// ---- shared loading helpers ----

Dataset load_checked(const std::optional<fs::path>& manifest, const char* field, std::optional<Modality> modality) {
  if (!manifest) throw ConfigError(std::string(field) + ": required for this command");
  Dataset d = load_dataset(*manifest);
  if (modality && d.manifest.modality != *modality) {
    throw ValidationError(manifest->string() + ": field 'modality' is '" + to_string(d.manifest.modality) +
                          "', expected '" + to_string(*modality) + "'");
  }
  return d;
}

BackboneSpec spec_for(Variant v) { return v == Variant::full ? BackboneSpec::full() : BackboneSpec::tiny(); }

Backbone build_init(const RunConfig& cfg, const Tensor* calibration_images) {
  if (cfg.backbone.checkpoint) return load_checkpoint(*cfg.backbone.checkpoint).backbone;
  Backbone b = Backbone::build(spec_for(cfg.backbone.variant), cfg.init_seed());
  if (cfg.backbone.calibrate_batchnorm) {
    if (calibration_images && calibration_images->rank() == 4 && calibration_images->dim(0) >= 2) {
      b.calibrate_batchnorm(*calibration_images, cfg.backbone.calibration_batch);
    } else {
      warn("no training images available for batch-norm calibration; using initial running statistics");
    }
  }
  return b;
}

struct LoadedModel {
  std::string name;
  std::string subject;
  bool baseline = false;
  Backbone backbone;
};

std::vector<LoadedModel> collect_models(const RunConfig& cfg, bool need_baseline_default = true) {
  std::vector<LoadedModel> out;
  std::optional<fs::path> baseline_path = cfg.evaluation.baseline_checkpoint;
  std::vector<ModelRef> refs;
  if (cfg.evaluation.train_run) {
    const fs::path run_dir = *cfg.evaluation.train_run;
    const json summary = read_json(run_dir / "models.json");
    for (const auto& m : summary.at("models")) {
      refs.push_back({m.at("name").get<std::string>(), m.value("subject", ""),
                      run_dir / m.at("checkpoint").get<std::string>()});
    }
    if (!baseline_path && summary.contains("backbone_init")) {
      baseline_path = run_dir / summary["backbone_init"].get<std::string>();
    }
  }
  for (const auto& m : cfg.evaluation.models) refs.push_back(m);
  if (cfg.evaluation.include_baseline && need_baseline_default) {
    LoadedModel base;
    base.name = "baseline";
    base.baseline = true;
    if (baseline_path) {
      base.backbone = load_checkpoint(*baseline_path).backbone;
    } else {
      std::optional<Tensor> images;
      if (cfg.data.train_manifest) {
        const Dataset train_set = load_dataset(*cfg.data.train_manifest);
        const auto spec = spec_for(cfg.backbone.variant);
        images = load_images(train_set.stimuli, spec.input_height, spec.input_width);
      }
      base.backbone = build_init(cfg, images ? &*images : nullptr);
    }
    out.push_back(std::move(base));
  }
  for (const auto& r : refs) {
    if (r.name == "baseline") throw ConfigError("model name 'baseline' is reserved");
    LoadedModel m;
    m.name = r.name;
    m.subject = r.subject;
    m.backbone = load_checkpoint(r.checkpoint).backbone;
    out.push_back(std::move(m));
  }
  if (out.empty()) throw ConfigError("evaluation: no models (set evaluation.train_run, evaluation.models or include_baseline)");
  const auto& s0 = out.front().backbone.spec();
  for (const auto& m : out) {
    const auto& s = m.backbone.spec();
    if (s.input_height != s0.input_height || s.input_width != s0.input_width) {
      throw ConfigError("evaluation: models '" + out.front().name + "' and '" + m.name + "' use different input sizes");
    }
  }
  return out;
}

std::vector<std::string> select_subjects(const Dataset& d, const RunConfig& cfg) {
  std::vector<std::string> ids = d.subject_ids();
  if (cfg.overrides.subject) {
    if (std::find(ids.begin(), ids.end(), *cfg.overrides.subject) == ids.end()) {
      throw ValidationError("subject '" + *cfg.overrides.subject + "' is not in " + d.manifest.name);
    }
    return {*cfg.overrides.subject};
  }
  return ids;
}

std::array<RowMatrix, kNumStages> flat_activations(const Backbone& b, const Tensor& images, std::size_t batch) {
  const LayerActivations acts = forward_batched(b, images, batch);
  std::array<RowMatrix, kNumStages> out;
  for (std::size_t s = 0; s < kNumStages; ++s) out[s] = nn::flatten(acts.stages[s]);
  return out;
}

RowMatrix rows_of(const RowMatrix& m, const std::vector<std::size_t>& idx) {
  RowMatrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

template <typename T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

// ---- train ----

void run_train(const RunConfig& cfg, const fs::path& dir) {
  const Dataset train_set = load_checked(cfg.data.train_manifest, "data.train_manifest", Modality::fmri);
  Backbone probe = cfg.backbone.checkpoint ? load_checkpoint(*cfg.backbone.checkpoint).backbone
                                           : Backbone::build(spec_for(cfg.backbone.variant), cfg.init_seed());
  const auto& spec = probe.spec();
  const Tensor images = load_images(train_set.stimuli, spec.input_height, spec.input_width);
  const Backbone init = build_init(cfg, &images);
  Backbone init_copy = init;
  save_checkpoint(dir / "backbone_init", init_copy, nullptr, {{"role", "backbone_init"}});

  std::vector<std::string> subjects = cfg.training.subjects.empty() ? train_set.subject_ids() : cfg.training.subjects;
  for (const auto& s : subjects) {
    const auto ids = train_set.subject_ids();
    if (std::find(ids.begin(), ids.end(), s) == ids.end()) {
      throw ValidationError("training.subjects: '" + s + "' is not in " + train_set.manifest.name);
    }
  }
  std::vector<double> betas = cfg.training.beta_sweep;
  if (betas.empty()) betas.push_back(cfg.training.alignment.beta);

  std::vector<int> manifest_labels;
  if (cfg.training.alignment.label_source == LabelSource::manifest) {
    for (const auto& e : train_set.stimuli.entries) {
      if (!e.class_label) throw ValidationError("stimulus '" + e.stimulus_id + "' has no class_label (label_source manifest)");
      manifest_labels.push_back(*e.class_label);
    }
  }

  json models = json::array();
  for (const auto& subject : subjects) {
    const NeuralResponseMatrix& resp = train_set.response(subject, cfg.data.roi);
    const ResponsePreprocessor pre =
        ResponsePreprocessor::fit(resp.data, cfg.training.alignment.pca_k, cfg.training.alignment.zscore);
    TrainingData data{images, pre.transform(resp.data), resp.stimulus_ids, manifest_labels};
    for (double beta : betas) {
      AlignmentConfig c = cfg.training.alignment;
      c.beta = beta;
      const std::string name = subject + "_beta" + beta_tag(beta);
      const fs::path model_dir = dir / "models" / name;
      info("training " + name);
      pre.save(model_dir / "preprocessor");
      TrainOptions opts;
      opts.output_dir = model_dir;
      const TrainResult r = neuroalign::train(c, init, data, opts);
      json entry = {{"name", name},
                    {"subject", subject},
                    {"roi", cfg.data.roi},
                    {"beta", beta},
                    {"checkpoint", "models/" + name + "/checkpoints/final"},
                    {"best_checkpoint", "models/" + name + "/checkpoints/best"},
                    {"steps", r.log.steps.size()},
                    {"epoch_mean_generation", r.log.epoch_mean_generation},
                    {"epoch_mean_total", r.log.epoch_mean_total},
                    {"best_epoch", r.log.best_epoch}};
      models.push_back(entry);
    }
  }
  write_json(dir / "models.json", {{"backbone_init", "backbone_init"}, {"models", models}});

  LineChart chart;
  chart.title = "Mean generation loss per epoch";
  chart.x_label = "epoch";
  chart.y_label = "generation loss";
  Csv table({"model", "epoch", "mean_generation", "mean_total"});
  std::size_t epochs = 0;
  for (const auto& m : models) {
    LineSeries s;
    s.name = m["name"];
    s.y = m["epoch_mean_generation"].get<std::vector<double>>();
    const auto totals = m["epoch_mean_total"].get<std::vector<double>>();
    for (std::size_t e = 0; e < s.y.size(); ++e) table.add({s.name, std::to_string(e + 1), num(s.y[e]), num(totals[e])});
    epochs = std::max(epochs, s.y.size());
    chart.series.push_back(std::move(s));
  }
  for (std::size_t e = 0; e < epochs; ++e) chart.x.push_back(static_cast<double>(e + 1));
  write_text_file(dir / "figures" / "training_curves.svg", render_svg(chart));
  write_text_file(dir / "figures" / "training_curves.csv", table.str());
}

// ---- eval-fmri ----

struct Section {
  std::string name;
  std::vector<std::size_t> indices;
};

std::vector<Section> family_sections(const StimulusSet& stimuli) {
  std::vector<Section> out;
  for (const auto& f : stimuli.families()) out.push_back({f, stimuli.indices_of_family(f)});
  if (out.empty()) {
    Section all{"all", {}};
    for (std::size_t i = 0; i < stimuli.size(); ++i) all.indices.push_back(i);
    out.push_back(all);
  }
  return out;
}

void run_eval_fmri(const RunConfig& cfg, const fs::path& dir) {
  const Dataset test = load_checked(cfg.data.test_manifest, "data.test_manifest", Modality::fmri);
  const std::vector<LoadedModel> models = collect_models(cfg);
  const auto& spec = models.front().backbone.spec();
  const Tensor images = load_images(test.stimuli, spec.input_height, spec.input_width);
  const std::vector<std::string> ids = test.stimuli.ids();
  const auto subjects = select_subjects(test, cfg);

  std::vector<std::array<RowMatrix, kNumStages>> acts;
  for (const auto& m : models) acts.push_back(flat_activations(m.backbone, images, cfg.evaluation.batch_size));

  std::vector<std::string> modes;
  if (cfg.evaluation.mode != "across") modes.push_back("within");
  if (cfg.evaluation.mode != "within") modes.push_back("across");

  Csv sim({"section", "mode", "model", "model_subject", "subject", "roi", "layer", "rho"});
  Csv best({"section", "mode", "model", "model_subject", "subject", "roi", "best_layer", "best_rho"});
  Csv improve({"section", "mode", "model", "model_subject", "subject", "roi", "model_rho", "baseline_rho", "improvement_ratio"});
  json report = {{"sections", json::object()}};
  std::vector<double> all_ratios_within, all_ratios_across;

  for (const auto& section : family_sections(test.stimuli)) {
    if (section.indices.size() < 3) {
      warn("section '" + section.name + "' has fewer than 3 stimuli; skipped");
      continue;
    }
    const auto sec_ids = pick(ids, section.indices);
    std::vector<LayerRdms> model_rdms_list;
    for (const auto& a : acts) {
      LayerRdms l;
      for (std::size_t s = 0; s < kNumStages; ++s) l[s] = pattern_rdm(rows_of(a[s], section.indices), sec_ids);
      model_rdms_list.push_back(std::move(l));
    }
    json sec = json::object();
    for (const auto& mode : modes) {
      json entries = json::array();
      std::map<std::string, std::vector<double>> ratios_by_model;
      for (const auto& subject : subjects) {
        std::vector<std::string> rois = cfg.evaluation.rois.empty() ? test.rois(subject) : cfg.evaluation.rois;
        for (const auto& roi : rois) {
          const NeuralResponseMatrix resp = test.response(subject, roi).subset(section.indices);
          const Rdm neural = neural_rdm(resp);
          std::optional<double> baseline_rho;
          for (std::size_t mi = 0; mi < models.size(); ++mi) {
            const auto& m = models[mi];
            if (mode == "within" && !m.subject.empty() && m.subject != subject) continue;
            const RoiSimilarity r = roi_similarity(model_rdms_list[mi], neural);
            if (m.baseline) baseline_rho = r.best_rho;
            for (std::size_t l = 0; l < kNumStages; ++l) {
              sim.add({section.name, mode, m.name, m.subject, subject, roi, kStageNames[l], num(r.layer_rho[l])});
            }
            best.add({section.name, mode, m.name, m.subject, subject, roi, kStageNames[r.best_layer], num(r.best_rho)});
            json e = {{"model", m.name},        {"model_subject", m.subject},
                      {"subject", subject},     {"roi", roi},
                      {"layer_rho", r.layer_rho}, {"best_layer", kStageNames[r.best_layer]},
                      {"best_rho", r.best_rho}};
            if (!m.baseline && baseline_rho) {
              const auto ratio = improvement_ratio(r.best_rho, *baseline_rho);
              e["improvement_ratio"] = ratio ? json(*ratio) : json(nullptr);
              improve.add({section.name, mode, m.name, m.subject, subject, roi, num(r.best_rho), num(*baseline_rho),
                           ratio ? num(*ratio) : "NA"});
              if (ratio) {
                ratios_by_model[m.name].push_back(*ratio);
                (mode == "within" ? all_ratios_within : all_ratios_across).push_back(*ratio);
              }
            }
            entries.push_back(e);
          }
        }
      }
      json mean_ratio = json::object();
      for (const auto& [name, v] : ratios_by_model) mean_ratio[name] = mean(v);
      sec[mode] = {{"entries", entries}, {"mean_improvement_ratio", mean_ratio}};

      // Bar chart: groups are ROIs, bars are models, height is the mean best rho over subjects.
      BarChart chart;
      chart.title = "Model-fMRI similarity (" + section.name + ", " + mode + "-subject)";
      chart.y_label = "best-layer Spearman rho";
      Csv table({"roi", "model", "mean_best_rho", "n_subjects"});
      std::vector<std::string> roi_order;
      for (const auto& e : entries) {
        const std::string roi = e["roi"];
        if (std::find(roi_order.begin(), roi_order.end(), roi) == roi_order.end()) roi_order.push_back(roi);
      }
      chart.groups = roi_order;
      for (const auto& m : models) {
        BarSeries s{m.name, {}};
        for (const auto& roi : roi_order) {
          std::vector<double> v;
          for (const auto& e : entries) {
            if (e["model"] == m.name && e["roi"] == roi) v.push_back(e["best_rho"].get<double>());
          }
          const double mv = v.empty() ? std::nan("") : mean(v);
          s.values.push_back(mv);
          table.add({roi, m.name, num(mv), std::to_string(v.size())});
        }
        chart.series.push_back(std::move(s));
      }
      const std::string stem = "similarity_" + section.name + "_" + mode;
      write_text_file(dir / "figures" / (stem + ".svg"), render_svg(chart));
      write_text_file(dir / "figures" / (stem + ".csv"), table.str());
    }
    report["sections"][section.name] = sec;
  }
  report["mean_improvement_ratio"] = {
      {"within", all_ratios_within.empty() ? json(nullptr) : json(mean(all_ratios_within))},
      {"across", all_ratios_across.empty() ? json(nullptr) : json(mean(all_ratios_across))}};
  json model_list = json::array();
  for (const auto& m : models) model_list.push_back({{"name", m.name}, {"subject", m.subject}, {"baseline", m.baseline}});
  report["models"] = model_list;
  write_text_file(dir / "similarity.csv", sim.str());
  write_text_file(dir / "best_layer.csv", best.str());
  write_text_file(dir / "improvement.csv", improve.str());
  write_json(dir / "similarity.json", report);
}

// ---- eval-eeg ----

void run_eval_eeg(const RunConfig& cfg, const fs::path& dir) {
  const Dataset eeg = load_checked(cfg.data.eeg_manifest, "data.eeg_manifest", Modality::eeg);
  const std::vector<LoadedModel> models = collect_models(cfg);
  const auto& spec = models.front().backbone.spec();
  const Tensor images = load_images(eeg.stimuli, spec.input_height, spec.input_width);
  const std::vector<std::string> ids = eeg.stimuli.ids();
  const auto subjects = select_subjects(eeg, cfg);

  std::vector<LayerRdms> model_rdm_list;
  for (const auto& m : models) model_rdm_list.push_back(model_rdms(m.backbone, images, ids, cfg.evaluation.batch_size));

  std::vector<std::vector<Rdm>> eeg_rdms;
  std::size_t n_time = 0;
  double start_ms = 0.0, rate = 1.0;
  for (const auto& s : subjects) {
    const EEGEpochs& ep = eeg.epochs(s);
    info("decoding " + s);
    auto rdms = build_eeg_rdms(ep, cfg.eeg.decoding);
    if (eeg_rdms.empty()) {
      n_time = rdms.size();
      start_ms = ep.window_ms.first;
      rate = ep.sample_rate_hz;
    } else if (rdms.size() != n_time) {
      throw ValidationError("subject '" + s + "' has " + std::to_string(rdms.size()) + " timepoints, expected " +
                            std::to_string(n_time));
    }
    Tensor stack({rdms.size(), ids.size(), ids.size()});
    for (std::size_t t = 0; t < rdms.size(); ++t) {
      std::copy(rdms[t].matrix.data(), rdms[t].matrix.data() + rdms[t].matrix.size(), stack.data() + t * ids.size() * ids.size());
    }
    write_array(dir / "eeg_rdms" / (s + ".f64"), stack, Dtype::float64);
    eeg_rdms.push_back(std::move(rdms));
  }
  TemporalOptions topts;
  topts.alpha = cfg.eeg.alpha;
  topts.cluster_correction = cfg.eeg.cluster_correction;
  topts.n_permutations = cfg.eeg.n_permutations;
  topts.seed = derive_seed(cfg.seed, {0x7e3u});
  const TemporalSimilarity ts = temporal_similarity(model_rdm_list, eeg_rdms, topts);

  auto time_ms = [&](std::size_t t) { return start_ms + 1000.0 * static_cast<double>(t) / rate; };
  Csv curves({"model", "subject", "layer", "timepoint", "time_ms", "rho"});
  Csv summary({"model", "layer", "timepoint", "time_ms", "mean_rho", "sem"});
  Csv sig({"model_a", "model_b", "layer", "timepoint", "time_ms", "t", "p", "significant"});
  json j = {{"models", json::array()}, {"subjects", subjects}, {"n_timepoints", n_time},
            {"significance_enabled", ts.significance_enabled},
            {"constant_eeg_rdms", ts.n_constant_eeg_rdms}, {"curves", json::array()}, {"comparisons", json::array()}};
  for (const auto& m : models) j["models"].push_back(m.name);
  std::vector<std::array<std::vector<double>, kNumStages>> mean_curve(models.size()), sem_curve(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    for (std::size_t l = 0; l < kNumStages; ++l) {
      for (std::size_t t = 0; t < n_time; ++t) {
        std::vector<double> v;
        for (std::size_t s = 0; s < subjects.size(); ++s) {
          const double r = ts.at(m, s, l, t);
          v.push_back(r);
          curves.add({models[m].name, subjects[s], kStageNames[l], std::to_string(t), num(time_ms(t)), num(r)});
        }
        const double mv = mean(v);
        const double se = v.size() >= 2 ? standard_error(v) : 0.0;
        mean_curve[m][l].push_back(mv);
        sem_curve[m][l].push_back(se);
        summary.add({models[m].name, kStageNames[l], std::to_string(t), num(time_ms(t)), num(mv), num(se)});
      }
      j["curves"].push_back({{"model", models[m].name}, {"layer", kStageNames[l]}, {"mean", mean_curve[m][l]},
                             {"sem", sem_curve[m][l]}});
    }
  }
  for (const auto& c : ts.comparisons) {
    for (std::size_t l = 0; l < kNumStages; ++l) {
      for (std::size_t t = 0; t < n_time; ++t) {
        sig.add({models[c.model_a].name, models[c.model_b].name, kStageNames[l], std::to_string(t), num(time_ms(t)),
                 num(c.t[l][t]), num(c.p[l][t]), c.significant[l][t] ? "1" : "0"});
      }
      std::vector<json> tvals, pvals;
      for (std::size_t t = 0; t < n_time; ++t) {
        tvals.push_back(json_or_null(c.t[l][t]));
        pvals.push_back(json_or_null(c.p[l][t]));
      }
      j["comparisons"].push_back({{"model_a", models[c.model_a].name}, {"model_b", models[c.model_b].name},
                                  {"layer", kStageNames[l]}, {"t", tvals}, {"p", pvals},
                                  {"significant", c.significant[l]}});
    }
  }
  if (ts.n_constant_eeg_rdms > 0) {
    warn(std::to_string(ts.n_constant_eeg_rdms) + " subject/timepoint EEG RDM(s) are constant; their similarity is 0");
  }
  if (!ts.significance_enabled) warn("fewer than 3 subjects; significance flags disabled");

  for (std::size_t l = 0; l < kNumStages; ++l) {
    LineChart chart;
    chart.title = std::string("Model-EEG similarity over time, layer ") + kStageNames[l];
    chart.x_label = "time (ms)";
    chart.y_label = "Spearman rho (mean +- SEM)";
    for (std::size_t t = 0; t < n_time; ++t) chart.x.push_back(time_ms(t));
    Csv table({"model", "time_ms", "mean_rho", "sem", "significant_vs_first"});
    for (std::size_t m = 0; m < models.size(); ++m) {
      LineSeries s{models[m].name, mean_curve[m][l], sem_curve[m][l], {}};
      std::vector<bool> marks(n_time, false);
      for (const auto& c : ts.comparisons) {
        if (c.model_a == 0 && c.model_b == m) marks = c.significant[l];
      }
      if (m > 0) s.markers = marks;
      for (std::size_t t = 0; t < n_time; ++t) {
        table.add({models[m].name, num(time_ms(t)), num(mean_curve[m][l][t]), num(sem_curve[m][l][t]),
                   m > 0 && marks[t] ? "1" : "0"});
      }
      chart.series.push_back(std::move(s));
    }
    const std::string stem = std::string("temporal_") + kStageNames[l];
    write_text_file(dir / "figures" / (stem + ".svg"), render_svg(chart));
    write_text_file(dir / "figures" / (stem + ".csv"), table.str());
  }
  write_text_file(dir / "temporal.csv", curves.str());
  write_text_file(dir / "temporal_summary.csv", summary.str());
  write_text_file(dir / "significance.csv", sig.str());
  write_json(dir / "temporal.json", j);
}

// ---- dims ----

void run_dims(const RunConfig& cfg, const fs::path& dir) {
  const std::optional<fs::path> manifest = cfg.dims.manifest ? cfg.dims.manifest : cfg.data.test_manifest;
  const Dataset data = load_checked(manifest, "dims.manifest", std::nullopt);
  if (!cfg.data.embedding_csv) throw ConfigError("data.embedding_csv: required for this command");
  const DimensionEmbedding embedding = read_embedding_csv(*cfg.data.embedding_csv);
  const std::vector<LoadedModel> models = collect_models(cfg);
  const LoadedModel* model = nullptr;
  const LoadedModel* baseline = nullptr;
  for (const auto& m : models) {
    if (m.baseline) baseline = &m;
    else if (!model && (cfg.dims.model.empty() || cfg.dims.model == m.name)) model = &m;
  }
  if (!model) {
    throw ConfigError(cfg.dims.model.empty() ? std::string("dims: no non-baseline model to analyse")
                                             : "dims.model: no model named '" + cfg.dims.model + "'");
  }
  const std::size_t layer =
      static_cast<std::size_t>(std::find(kStageNames.begin(), kStageNames.end(), cfg.dims.layer) - kStageNames.begin());
  const auto& spec = model->backbone.spec();
  const Tensor images = load_images(data.stimuli, spec.input_height, spec.input_width);
  const auto ids = data.stimuli.ids();
  auto layer_rdm = [&](const Backbone& b) {
    return pattern_rdm(flat_activations(b, images, cfg.evaluation.batch_size)[layer], ids);
  };
  const DimensionProfile prof = dimension_profile(layer_rdm(model->backbone), embedding);
  std::optional<DimensionProfile> base;
  if (baseline) base = dimension_profile(layer_rdm(baseline->backbone), embedding);
  else warn("no baseline model; difference profile skipped");
  const std::vector<double> diff = base ? profile_difference(prof, *base) : std::vector<double>{};

  Csv csv({"dimension", "r2_model", "r2_baseline", "difference", "partial_rho_model", "partial_rho_baseline",
           "ridge_lambda_model", "ridge_lambda_baseline"});
  auto lam = [](const std::optional<double>& v) { return v ? num(*v) : std::string("NA"); };
  json j = {{"model", model->name}, {"baseline", base ? json(baseline->name) : json(nullptr)},
            {"layer", cfg.dims.layer}, {"dimensions", json::array()}};
  for (std::size_t k = 0; k < prof.dimension_names.size(); ++k) {
    csv.add({prof.dimension_names[k], num(prof.r2[k]), base ? num(base->r2[k]) : "NA", base ? num(diff[k]) : "NA",
             num(prof.partial_rho[k]), base ? num(base->partial_rho[k]) : "NA", lam(prof.ridge_lambda[k]),
             base ? lam(base->ridge_lambda[k]) : "NA"});
    json e = {{"name", prof.dimension_names[k]}, {"r2_model", prof.r2[k]}, {"partial_rho_model", prof.partial_rho[k]}};
    if (prof.ridge_lambda[k]) e["ridge_lambda_model"] = *prof.ridge_lambda[k];
    if (base) {
      e["r2_baseline"] = base->r2[k];
      e["difference"] = diff[k];
    }
    j["dimensions"].push_back(e);
  }
  write_text_file(dir / "dims_profile.csv", csv.str());
  write_json(dir / "dims.json", j);

  BarChart r2;
  r2.title = "Partial r-square per object dimension (" + cfg.dims.layer + ")";
  r2.y_label = "partial r2";
  r2.groups = prof.dimension_names;
  r2.series.push_back({model->name, prof.r2});
  Csv r2_table({"dimension", "model", "r2"});
  for (std::size_t k = 0; k < prof.r2.size(); ++k) r2_table.add({prof.dimension_names[k], model->name, num(prof.r2[k])});
  if (base) {
    r2.series.push_back({baseline->name, base->r2});
    for (std::size_t k = 0; k < base->r2.size(); ++k) r2_table.add({prof.dimension_names[k], baseline->name, num(base->r2[k])});
  }
  write_text_file(dir / "figures" / "dims_r2.svg", render_svg(r2));
  write_text_file(dir / "figures" / "dims_r2.csv", r2_table.str());
  if (base) {
    BarChart d;
    d.title = "Partial r-square difference (" + model->name + " - " + baseline->name + ")";
    d.y_label = "difference in partial r2";
    d.groups = prof.dimension_names;
    d.series.push_back({"difference", diff});
    Csv d_table({"dimension", "difference"});
    for (std::size_t k = 0; k < diff.size(); ++k) d_table.add({prof.dimension_names[k], num(diff[k])});
    write_text_file(dir / "figures" / "dims_difference.svg", render_svg(d));
    write_text_file(dir / "figures" / "dims_difference.csv", d_table.str());
  }
}

// ---- synth ----

void run_synth(const RunConfig& cfg, const fs::path& dir) {
  const BackboneSpec spec = spec_for(cfg.backbone.variant);
  info("generating synthetic fMRI data");
  const SyntheticFmri fmri = make_synthetic_fmri(cfg.synth.fmri, spec);
  write_synthetic_fmri(dir / "fmri", fmri);
  info("generating synthetic EEG data");
  write_synthetic_eeg(dir / "eeg", cfg.synth.eeg, spec);
  const DimensionEmbedding emb = synthetic_embedding(fmri.test_ids, cfg.synth.embedding_dimensions, derive_seed(cfg.seed, {0xE3Bu}));
  write_embedding_csv(dir / "embedding.csv", emb);
  const std::size_t k = std::min<std::size_t>({128, cfg.synth.fmri.n_train - 1, cfg.synth.fmri.n_voxels});
  json pipeline = {{"seed", cfg.seed},
                   {"backbone", {{"variant", to_string(cfg.backbone.variant)}}},
                   {"data",
                    {{"train_manifest", "fmri/train/manifest.json"},
                     {"test_manifest", "fmri/test/manifest.json"},
                     {"eeg_manifest", "eeg/manifest.json"},
                     {"embedding_csv", "embedding.csv"}}},
                   {"training", {{"beta", 40.0}, {"learning_rate", 3e-4}, {"pca_k", k}}}};
  write_json(dir / "pipeline_config.json", pipeline);
}

// ---- report ----

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Prefixes every data row of a CSV with the run name.
void merge_csv(std::map<std::string, std::string>& merged, const std::string& key, const std::string& run,
               const fs::path& path) {
  if (!fs::exists(path)) return;
  std::istringstream in(read_text(path));
  std::string line;
  bool first = true;
  std::string& out = merged[key];
  while (std::getline(in, line)) {
    if (first) {
      if (out.empty()) out = "run," + line + "\n";
      first = false;
      continue;
    }
    if (!line.empty()) out += run + "," + line + "\n";
  }
}

void run_report(const fs::path& scan_dir, const fs::path& dir) {
  std::vector<fs::path> runs;
  if (fs::is_directory(scan_dir)) {
    for (const auto& e : fs::directory_iterator(scan_dir)) {
      if (!e.is_directory() || e.path().filename().string().front() == '.') continue;
      if (!fs::exists(e.path() / "run.json")) continue;
      const json r = read_json(e.path() / "run.json");
      const std::string cmd = r.value("command", "");
      if (cmd == "report" || cmd == "synth") continue;
      runs.push_back(e.path());
    }
  }
  if (runs.empty()) throw IngestionError("no runs found in " + scan_dir.string());
  std::sort(runs.begin(), runs.end());

  std::map<std::string, std::string> merged;
  std::ostringstream index;
  index << "# Run report\n\n| run | command | seed | summary |\n|---|---|---|---|\n";
  json j = {{"runs", json::array()}};
  for (const auto& r : runs) {
    const std::string name = r.filename().string();
    const json meta = read_json(r / "run.json");
    const std::string cmd = meta.value("command", "");
    std::string summary;
    json entry = {{"run", name}, {"command", cmd}, {"seed", meta.value("seed", 0)}};
    if (cmd == "train" && fs::exists(r / "models.json")) {
      const json models = read_json(r / "models.json");
      summary = std::to_string(models["models"].size()) + " model(s)";
      entry["models"] = models["models"];
      merge_csv(merged, "training_curves", name, r / "figures" / "training_curves.csv");
    } else if (cmd == "eval-fmri" && fs::exists(r / "similarity.json")) {
      const json s = read_json(r / "similarity.json");
      entry["mean_improvement_ratio"] = s["mean_improvement_ratio"];
      const auto& mi = s["mean_improvement_ratio"];
      summary = "mean improvement within " + (mi["within"].is_null() ? std::string("NA") : num(mi["within"].get<double>())) +
                ", across " + (mi["across"].is_null() ? std::string("NA") : num(mi["across"].get<double>()));
      merge_csv(merged, "similarity", name, r / "similarity.csv");
      merge_csv(merged, "best_layer", name, r / "best_layer.csv");
      merge_csv(merged, "improvement", name, r / "improvement.csv");
    } else if (cmd == "eval-eeg" && fs::exists(r / "temporal.json")) {
      const json s = read_json(r / "temporal.json");
      std::size_t n_sig = 0;
      for (const auto& c : s["comparisons"])
        for (const auto& f : c["significant"]) n_sig += f.get<bool>() ? 1 : 0;
      summary = std::to_string(n_sig) + " significant (layer, timepoint) cells";
      entry["significant_cells"] = n_sig;
      merge_csv(merged, "temporal_summary", name, r / "temporal_summary.csv");
      merge_csv(merged, "significance", name, r / "significance.csv");
    } else if (cmd == "dims" && fs::exists(r / "dims.json")) {
      const json s = read_json(r / "dims.json");
      std::string top;
      double best = -1.0;
      for (const auto& d : s["dimensions"]) {
        if (d["r2_model"].get<double>() > best) {
          best = d["r2_model"].get<double>();
          top = d["name"].get<std::string>();
        }
      }
      summary = "top dimension " + top + " (r2 " + num(best) + ")";
      entry["top_dimension"] = top;
      merge_csv(merged, "dims_profile", name, r / "dims_profile.csv");
    } else {
      warn("run '" + name + "' has no readable results; skipped");
      continue;
    }
    if (fs::exists(r / "figures")) {
      for (const auto& f : fs::directory_iterator(r / "figures")) {
        fs::create_directories(dir / "figures" / name);
        fs::copy_file(f.path(), dir / "figures" / name / f.path().filename(), fs::copy_options::overwrite_existing);
      }
    }
    index << "| " << name << " | " << cmd << " | " << meta.value("seed", 0) << " | " << summary << " |\n";
    j["runs"].push_back(entry);
  }
  for (const auto& [key, text] : merged) write_text_file(dir / "tables" / (key + ".csv"), text);
  index << "\nMerged tables are in tables/, per-run figures and their data in figures/<run>/.\n";
  write_text_file(dir / "index.md", index.str());
  write_json(dir / "report.json", j);
}

}  // namespace

RunResult run(const RunSpec& spec) {
  static const std::vector<std::string> commands = {"train", "eval-fmri", "eval-eeg", "dims", "report", "synth"};
  if (std::find(commands.begin(), commands.end(), spec.command) == commands.end()) {
    throw ConfigError("unknown command '" + spec.command + "'");
  }
  if (spec.output_dir.empty()) throw ConfigError("--out: required");
  if (spec.command != "report" && spec.command != "synth" && !spec.config_path) {
    throw ConfigError("--config: required for " + spec.command);
  }
  const RunConfig cfg = detail::load_run_config(spec.config_path, {spec.seed, spec.beta, spec.subject});

  fs::path requested = spec.output_dir;
  if (spec.command == "report") requested = spec.output_dir / "report";
  if (spec.command == "report" && !fs::is_directory(spec.output_dir)) {
    throw IngestionError("no runs found in " + spec.output_dir.string());
  }
  StagedDir staged(pick_run_dir(requested, spec.overwrite));
  const fs::path& dir = staged.path();
  json resolved = cfg.resolved();
  resolved["command"] = spec.command;
  write_json(dir / "resolved_config.json", resolved);

  if (spec.command == "train") run_train(cfg, dir);
  else if (spec.command == "eval-fmri") run_eval_fmri(cfg, dir);
  else if (spec.command == "eval-eeg") run_eval_eeg(cfg, dir);
  else if (spec.command == "dims") run_dims(cfg, dir);
  else if (spec.command == "synth") run_synth(cfg, dir);
  else run_report(spec.output_dir, dir);

  write_json(dir / "run.json", {{"command", spec.command}, {"seed", cfg.seed}, {"version", kVersion}, {"status", "complete"}});
  staged.commit();
  return {staged.final_path()};
}

}  // namespace neuroalign
