#include "run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "neuroalign/error.hpp"

namespace neuroalign::detail {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads typed fields of one JSON object, rejecting unknown keys and naming
// the full field path in every error.
class Section {
 public:
  Section(const json& j, std::string path, std::set<std::string> known) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected a JSON object");
    for (const auto& [key, _] : j_.items()) {
      if (!known.count(key)) throw ConfigError(field(key) + ": unknown field");
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& raw(const std::string& key) const { return j_.at(key); }

  template <typename T>
  void get(const std::string& key, T& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(field(key) + ": expected true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(field(key) + ": expected a string");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(field(key) + ": expected a number");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned()) throw ConfigError(field(key) + ": expected a non-negative integer");
    }
    try {
      out = v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key) + ": wrong type (" + v.type_name() + ")");
    }
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) const {
    if (!has(key)) return;
    T value{};
    get(key, value);
    out = value;
  }

 private:
  const json& j_;
  std::string path_;
};

struct PathResolver {
  fs::path base_dir;
  std::optional<fs::path> data_root;

  fs::path operator()(const std::string& p) const {
    fs::path path(p);
    if (path.is_absolute()) return path.lexically_normal();
    return ((data_root ? *data_root : base_dir) / path).lexically_normal();
  }
};

void get_path(const Section& s, const std::string& key, std::optional<fs::path>& out, const PathResolver& resolve) {
  std::optional<std::string> text;
  s.get(key, text);
  if (text) {
    if (text->empty()) throw ConfigError(s.field(key) + ": empty path");
    out = resolve(*text);
  }
}

ModelRef parse_model_ref(const json& j, const std::string& path, const PathResolver& resolve) {
  Section s(j, path, {"name", "subject", "checkpoint"});
  ModelRef m;
  s.get("name", m.name);
  s.get("subject", m.subject);
  std::optional<fs::path> ck;
  get_path(s, "checkpoint", ck, resolve);
  if (m.name.empty()) throw ConfigError(path + ".name: required");
  if (!ck) throw ConfigError(path + ".checkpoint: required");
  m.checkpoint = *ck;
  return m;
}

}  // namespace

RunConfig load_run_config(const std::optional<fs::path>& path, const Overrides& overrides) {
  RunConfig c;
  json j = json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("config: cannot open " + path->string());
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config: invalid JSON in " + path->string() + ": " + e.what());
    }
    c.base_dir = fs::absolute(*path).parent_path();
  } else {
    c.base_dir = fs::current_path();
  }
  if (const char* root = std::getenv("NEUROALIGN_DATA_ROOT"); root && *root) c.data_root = fs::absolute(root);
  if (const char* dev = std::getenv("NEUROALIGN_DEVICE"); dev && *dev) {
    c.device = dev;
    if (c.device != "cpu") throw ConfigError("NEUROALIGN_DEVICE: only 'cpu' is supported, got '" + c.device + "'");
  }
  const PathResolver resolve{c.base_dir, c.data_root};

  Section top(j, "", {"seed", "backbone", "data", "training", "evaluation", "eeg", "dims", "synth"});
  top.get("seed", c.seed);
  if (overrides.seed) c.seed = *overrides.seed;
  c.overrides = overrides;

  if (top.has("backbone")) {
    Section s(top.raw("backbone"), "backbone", {"variant", "init_seed", "checkpoint", "calibrate_batchnorm", "calibration_batch"});
    std::string variant = "tiny";
    s.get("variant", variant);
    try {
      c.backbone.variant = parse_variant(variant);
    } catch (const Error&) {
      throw ConfigError("backbone.variant: expected 'tiny' or 'full', got '" + variant + "'");
    }
    s.get("init_seed", c.backbone.init_seed);
    get_path(s, "checkpoint", c.backbone.checkpoint, resolve);
    s.get("calibrate_batchnorm", c.backbone.calibrate_batchnorm);
    s.get("calibration_batch", c.backbone.calibration_batch);
    if (c.backbone.calibration_batch < 2) throw ConfigError("backbone.calibration_batch: must be >= 2");
  }

  if (top.has("data")) {
    Section s(top.raw("data"), "data", {"train_manifest", "test_manifest", "eeg_manifest", "embedding_csv", "roi"});
    get_path(s, "train_manifest", c.data.train_manifest, resolve);
    get_path(s, "test_manifest", c.data.test_manifest, resolve);
    get_path(s, "eeg_manifest", c.data.eeg_manifest, resolve);
    get_path(s, "embedding_csv", c.data.embedding_csv, resolve);
    s.get("roi", c.data.roi);
  }

  {
    json t = top.has("training") ? top.raw("training") : json::object();
    if (!t.is_object()) throw ConfigError("training: expected a JSON object");
    if (t.contains("seed")) throw ConfigError("training.seed: not configurable; set the top-level 'seed'");
    json alignment = json::object();
    std::vector<double> sweep;
    std::vector<std::string> subjects;
    for (const auto& [key, value] : t.items()) {
      if (key == "beta_sweep") {
        if (!value.is_array()) throw ConfigError("training.beta_sweep: expected an array of numbers");
        for (const auto& b : value) {
          if (!b.is_number() || b.get<double>() < 0.0) throw ConfigError("training.beta_sweep: entries must be numbers >= 0");
          sweep.push_back(b.get<double>());
        }
      } else if (key == "subjects") {
        if (!value.is_array()) throw ConfigError("training.subjects: expected an array of strings");
        for (const auto& s : value) {
          if (!s.is_string()) throw ConfigError("training.subjects: entries must be strings");
          subjects.push_back(s.get<std::string>());
        }
      } else {
        alignment[key] = value;
      }
    }
    try {
      c.training.alignment = AlignmentConfig::from_json(alignment);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("training.") + e.what());
    }
    c.training.alignment.seed = c.seed;
    if (overrides.beta) {
      if (*overrides.beta < 0.0) throw ConfigError("--beta: must be >= 0");
      c.training.alignment.beta = *overrides.beta;
      sweep.clear();
    }
    c.training.beta_sweep = sweep;
    c.training.subjects = subjects;
    if (overrides.subject) c.training.subjects = {*overrides.subject};
  }

  if (top.has("evaluation")) {
    Section s(top.raw("evaluation"), "evaluation",
              {"train_run", "models", "include_baseline", "baseline_checkpoint", "mode", "rois", "batch_size"});
    get_path(s, "train_run", c.evaluation.train_run, resolve);
    if (s.has("models")) {
      const json& models = s.raw("models");
      if (!models.is_array()) throw ConfigError("evaluation.models: expected an array");
      std::set<std::string> names;
      for (std::size_t i = 0; i < models.size(); ++i) {
        ModelRef m = parse_model_ref(models[i], "evaluation.models[" + std::to_string(i) + "]", resolve);
        if (!names.insert(m.name).second || m.name == "baseline") {
          throw ConfigError("evaluation.models[" + std::to_string(i) + "].name: '" + m.name + "' is not unique");
        }
        c.evaluation.models.push_back(std::move(m));
      }
    }
    s.get("include_baseline", c.evaluation.include_baseline);
    get_path(s, "baseline_checkpoint", c.evaluation.baseline_checkpoint, resolve);
    s.get("mode", c.evaluation.mode);
    if (c.evaluation.mode != "within" && c.evaluation.mode != "across" && c.evaluation.mode != "both") {
      throw ConfigError("evaluation.mode: expected 'within', 'across' or 'both'");
    }
    s.get("rois", c.evaluation.rois);
    s.get("batch_size", c.evaluation.batch_size);
    if (c.evaluation.batch_size < 1) throw ConfigError("evaluation.batch_size: must be >= 1");
  }

  {
    json e = top.has("eeg") ? top.raw("eeg") : json::object();
    Section s(e, "eeg", {"decoding", "alpha", "cluster_correction", "n_permutations"});
    if (s.has("decoding")) {
      json d = s.raw("decoding");
      if (d.is_object() && d.contains("seed")) throw ConfigError("eeg.decoding.seed: not configurable; set the top-level 'seed'");
      try {
        c.eeg.decoding = DecodingConfig::from_json(d);
      } catch (const ConfigError& err) {
        throw ConfigError(std::string("eeg.") + err.what());
      }
    }
    c.eeg.decoding.seed = c.seed;
    s.get("alpha", c.eeg.alpha);
    if (!(c.eeg.alpha > 0.0 && c.eeg.alpha < 1.0)) throw ConfigError("eeg.alpha: must be in (0, 1)");
    s.get("cluster_correction", c.eeg.cluster_correction);
    s.get("n_permutations", c.eeg.n_permutations);
    if (c.eeg.n_permutations < 1) throw ConfigError("eeg.n_permutations: must be >= 1");
  }

  if (top.has("dims")) {
    Section s(top.raw("dims"), "dims", {"manifest", "model", "layer"});
    get_path(s, "manifest", c.dims.manifest, resolve);
    s.get("model", c.dims.model);
    s.get("layer", c.dims.layer);
    if (std::find(kStageNames.begin(), kStageNames.end(), c.dims.layer) == kStageNames.end()) {
      throw ConfigError("dims.layer: expected V1, V2, V4 or IT, got '" + c.dims.layer + "'");
    }
  }

  {
    json sj = top.has("synth") ? top.raw("synth") : json::object();
    Section s(sj, "synth", {"fmri", "eeg", "embedding_dimensions"});
    if (s.has("fmri")) {
      Section f(s.raw("fmri"), "synth.fmri", {"n_train", "n_test", "n_voxels", "n_subjects", "repetitions", "snr"});
      f.get("n_train", c.synth.fmri.n_train);
      f.get("n_test", c.synth.fmri.n_test);
      f.get("n_voxels", c.synth.fmri.n_voxels);
      f.get("n_subjects", c.synth.fmri.n_subjects);
      f.get("repetitions", c.synth.fmri.repetitions);
      f.get("snr", c.synth.fmri.snr);
    }
    if (s.has("eeg")) {
      Section f(s.raw("eeg"), "synth.eeg",
                {"n_stimuli", "n_subjects", "repetitions", "n_channels", "n_timepoints", "sample_rate_hz",
                 "window_start_ms", "signal", "onset_fraction"});
      f.get("n_stimuli", c.synth.eeg.n_stimuli);
      f.get("n_subjects", c.synth.eeg.n_subjects);
      f.get("repetitions", c.synth.eeg.repetitions);
      f.get("n_channels", c.synth.eeg.n_channels);
      f.get("n_timepoints", c.synth.eeg.n_timepoints);
      f.get("sample_rate_hz", c.synth.eeg.sample_rate_hz);
      f.get("window_start_ms", c.synth.eeg.window_start_ms);
      f.get("signal", c.synth.eeg.signal);
      f.get("onset_fraction", c.synth.eeg.onset_fraction);
    }
    s.get("embedding_dimensions", c.synth.embedding_dimensions);
    c.synth.fmri.seed = c.seed;
    c.synth.eeg.seed = c.seed;
    const auto& fm = c.synth.fmri;
    if (fm.n_train < 2) throw ConfigError("synth.fmri.n_train: must be >= 2");
    if (fm.n_test < 3) throw ConfigError("synth.fmri.n_test: must be >= 3");
    if (fm.n_voxels < 3) throw ConfigError("synth.fmri.n_voxels: must be >= 3");
    if (fm.n_subjects < 1) throw ConfigError("synth.fmri.n_subjects: must be >= 1");
    if (fm.repetitions < 1) throw ConfigError("synth.fmri.repetitions: must be >= 1");
    if (!(fm.snr > 0.0)) throw ConfigError("synth.fmri.snr: must be positive");
    const auto& ee = c.synth.eeg;
    if (ee.n_stimuli < 3) throw ConfigError("synth.eeg.n_stimuli: must be >= 3");
    if (ee.n_subjects < 1) throw ConfigError("synth.eeg.n_subjects: must be >= 1");
    if (ee.repetitions < 1) throw ConfigError("synth.eeg.repetitions: must be >= 1");
    if (ee.n_channels < 1) throw ConfigError("synth.eeg.n_channels: must be >= 1");
    if (ee.n_timepoints < 1) throw ConfigError("synth.eeg.n_timepoints: must be >= 1");
    if (!(ee.sample_rate_hz > 0.0)) throw ConfigError("synth.eeg.sample_rate_hz: must be positive");
    if (c.synth.embedding_dimensions < 1) throw ConfigError("synth.embedding_dimensions: must be >= 1");
  }
  return c;
}

namespace {

json opt_path(const std::optional<fs::path>& p) { return p ? json(p->generic_string()) : json(nullptr); }

}  // namespace

json RunConfig::resolved() const {
  json j;
  j["seed"] = seed;
  j["subject"] = overrides.subject ? json(*overrides.subject) : json(nullptr);
  j["environment"] = {{"data_root", opt_path(data_root)}, {"device", device}};
  j["backbone"] = {{"variant", to_string(backbone.variant)},
                   {"init_seed", init_seed()},
                   {"checkpoint", opt_path(backbone.checkpoint)},
                   {"calibrate_batchnorm", backbone.calibrate_batchnorm},
                   {"calibration_batch", backbone.calibration_batch}};
  j["data"] = {{"train_manifest", opt_path(data.train_manifest)},
               {"test_manifest", opt_path(data.test_manifest)},
               {"eeg_manifest", opt_path(data.eeg_manifest)},
               {"embedding_csv", opt_path(data.embedding_csv)},
               {"roi", data.roi}};
  json t = training.alignment.to_json();
  t.erase("seed");
  t["beta_sweep"] = training.beta_sweep;
  t["subjects"] = training.subjects;
  j["training"] = t;
  json models = json::array();
  for (const auto& m : evaluation.models) {
    models.push_back({{"name", m.name}, {"subject", m.subject}, {"checkpoint", m.checkpoint.generic_string()}});
  }
  j["evaluation"] = {{"train_run", opt_path(evaluation.train_run)},
                     {"models", models},
                     {"include_baseline", evaluation.include_baseline},
                     {"baseline_checkpoint", opt_path(evaluation.baseline_checkpoint)},
                     {"mode", evaluation.mode},
                     {"rois", evaluation.rois},
                     {"batch_size", evaluation.batch_size}};
  json dec = eeg.decoding.to_json();
  dec.erase("seed");
  j["eeg"] = {{"decoding", dec},
              {"alpha", eeg.alpha},
              {"cluster_correction", eeg.cluster_correction},
              {"n_permutations", eeg.n_permutations}};
  j["dims"] = {{"manifest", opt_path(dims.manifest)}, {"model", dims.model}, {"layer", dims.layer}};
  j["synth"] = {{"fmri",
                 {{"n_train", synth.fmri.n_train},
                  {"n_test", synth.fmri.n_test},
                  {"n_voxels", synth.fmri.n_voxels},
                  {"n_subjects", synth.fmri.n_subjects},
                  {"repetitions", synth.fmri.repetitions},
                  {"snr", synth.fmri.snr}}},
                {"eeg",
                 {{"n_stimuli", synth.eeg.n_stimuli},
                  {"n_subjects", synth.eeg.n_subjects},
                  {"repetitions", synth.eeg.repetitions},
                  {"n_channels", synth.eeg.n_channels},
                  {"n_timepoints", synth.eeg.n_timepoints},
                  {"sample_rate_hz", synth.eeg.sample_rate_hz},
                  {"window_start_ms", synth.eeg.window_start_ms},
                  {"signal", synth.eeg.signal},
                  {"onset_fraction", synth.eeg.onset_fraction}}},
                {"embedding_dimensions", synth.embedding_dimensions}};
  return j;
}

}  // namespace neuroalign::detail
