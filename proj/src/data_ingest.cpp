#include "neuroalign/data_ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "neuroalign/array_io.hpp"
#include "neuroalign/error.hpp"
#include "neuroalign/random.hpp"

namespace neuroalign {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Modality modality) { return modality == Modality::fmri ? "fmri" : "eeg"; }

Modality parse_modality(const std::string& name) {
  if (name == "fmri") return Modality::fmri;
  if (name == "eeg") return Modality::eeg;
  throw ValidationError("manifest field 'modality' must be \"fmri\" or \"eeg\", got '" + name + "'");
}

std::vector<std::string> StimulusSet::ids() const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.stimulus_id);
  return out;
}

std::vector<std::string> StimulusSet::families() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (!e.family.empty() && std::find(out.begin(), out.end(), e.family) == out.end()) {
      out.push_back(e.family);
    }
  }
  return out;
}

StimulusSet StimulusSet::subset(std::span<const std::size_t> indices) const {
  StimulusSet out;
  for (std::size_t i : indices) out.entries.push_back(entries.at(i));
  return out;
}

std::vector<std::size_t> StimulusSet::indices_of_family(const std::string& family) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].family == family) out.push_back(i);
  }
  return out;
}

void NeuralResponseMatrix::validate() const {
  if (static_cast<std::size_t>(data.rows()) != stimulus_ids.size()) {
    throw ValidationError("response matrix for subject '" + subject_id + "' has " +
                          std::to_string(data.rows()) + " rows but " +
                          std::to_string(stimulus_ids.size()) + " stimulus ids");
  }
  if (!data.allFinite()) {
    throw ValidationError("response matrix for subject '" + subject_id + "', roi '" + roi +
                          "' contains non-finite values");
  }
}

NeuralResponseMatrix NeuralResponseMatrix::subset(std::span<const std::size_t> rows) const {
  NeuralResponseMatrix out;
  out.subject_id = subject_id;
  out.roi = roi;
  out.modality = modality;
  out.data.resize(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.data.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(rows[i]));
    out.stimulus_ids.push_back(stimulus_ids.at(rows[i]));
  }
  return out;
}

void EEGEpochs::validate() const {
  if (data.rank() != 4) {
    throw ValidationError("EEG epochs for subject '" + subject_id + "' must be 4-D, got shape " +
                          shape_to_string(data.shape()));
  }
  if (data.dim(0) != stimulus_ids.size()) {
    throw ValidationError("EEG epochs for subject '" + subject_id +
                          "': stimulus axis does not match stimulus ids");
  }
  const double duration_s = (window_ms.second - window_ms.first) / 1000.0;
  const double expected = duration_s * sample_rate_hz;
  if (std::llround(expected) != static_cast<long long>(data.dim(3))) {
    throw ValidationError("EEG epochs for subject '" + subject_id + "': field 'window_ms' x " +
                          "'sample_rate_hz' implies " + std::to_string(std::llround(expected)) +
                          " timepoints but data has " + std::to_string(data.dim(3)));
  }
}

const NeuralResponseMatrix& Dataset::response(const std::string& subject,
                                              const std::string& roi) const {
  for (const auto& r : fmri) {
    if (r.subject_id == subject && r.roi == roi) return r;
  }
  throw InvalidArgument("dataset '" + manifest.name + "' has no response for subject '" + subject +
                        "' roi '" + roi + "'");
}

const EEGEpochs& Dataset::epochs(const std::string& subject) const {
  for (const auto& e : eeg) {
    if (e.subject_id == subject) return e;
  }
  throw InvalidArgument("dataset '" + manifest.name + "' has no EEG epochs for subject '" +
                        subject + "'");
}

std::vector<std::string> Dataset::subject_ids() const {
  std::vector<std::string> out;
  for (const auto& s : manifest.subjects) out.push_back(s.id);
  return out;
}

std::vector<std::string> Dataset::rois(const std::string& subject) const {
  std::vector<std::string> out;
  for (const auto& r : fmri) {
    if (r.subject_id == subject) out.push_back(r.roi);
  }
  return out;
}

namespace {

template <typename T>
T require_field(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + ": field '" + key + "' has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

}  // namespace

DatasetManifest parse_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IngestionError("cannot open manifest: " + manifest_path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  const std::string where = "manifest " + manifest_path.string();
  DatasetManifest m;
  m.base_dir = fs::absolute(manifest_path).parent_path();
  m.name = j.value("name", manifest_path.stem().string());
  m.modality = parse_modality(require_field<std::string>(j, "modality", where));

  std::set<std::string> seen;
  for (const auto& s : j.value("stimuli", json::array())) {
    StimulusEntry e;
    e.stimulus_id = require_field<std::string>(s, "stimulus_id", where + " stimuli[]");
    if (!seen.insert(e.stimulus_id).second) {
      throw ValidationError(where + ": duplicate stimulus_id '" + e.stimulus_id + "'");
    }
    e.image_path = resolve(m.base_dir, require_field<std::string>(s, "image_path", where));
    if (s.contains("class_label") && !s["class_label"].is_null()) {
      e.class_label = require_field<int>(s, "class_label", where);
    }
    e.repetition_count = s.contains("repetition_count")
                             ? require_field<int>(s, "repetition_count", where)
                             : 1;
    if (e.repetition_count < 1) {
      throw ValidationError(where + ": field 'repetition_count' of stimulus '" + e.stimulus_id +
                            "' must be >= 1");
    }
    e.family = s.value("family", std::string{});
    m.stimuli.entries.push_back(std::move(e));
  }

  std::set<std::string> subject_ids;
  for (const auto& s : j.value("subjects", json::array())) {
    SubjectEntry sub;
    sub.id = require_field<std::string>(s, "id", where + " subjects[]");
    if (!subject_ids.insert(sub.id).second) {
      throw ValidationError(where + ": duplicate subject id '" + sub.id + "'");
    }
    const std::string sw = where + " subject '" + sub.id + "'";
    if (m.modality == Modality::fmri) {
      if (!s.contains("rois") || !s["rois"].is_object()) {
        throw ValidationError(sw + ": field 'rois' must map ROI names to array paths");
      }
      for (const auto& [roi, path] : s["rois"].items()) {
        if (!path.is_string()) throw ValidationError(sw + ": field 'rois." + roi + "' must be a path");
        sub.rois[roi] = resolve(m.base_dir, path.get<std::string>());
      }
    } else {
      sub.n_channels = require_field<std::size_t>(s, "n_channels", sw);
      sub.n_timepoints = require_field<std::size_t>(s, "n_timepoints", sw);
      sub.sample_rate_hz = require_field<double>(s, "sample_rate_hz", sw);
      const auto window = require_field<std::vector<double>>(s, "window_ms", sw);
      if (window.size() != 2) throw ValidationError(sw + ": field 'window_ms' must be [start, end]");
      sub.window_ms = {window[0], window[1]};
      sub.epochs_path = resolve(m.base_dir, require_field<std::string>(s, "epochs", sw));
    }
    m.subjects.push_back(std::move(sub));
  }
  return m;
}

void write_manifest(const fs::path& manifest_path, const DatasetManifest& m) {
  const fs::path base = fs::absolute(manifest_path).parent_path();
  auto rel = [&](const fs::path& p) {
    return (p.is_absolute() ? p.lexically_relative(base) : p).generic_string();
  };
  json j;
  j["name"] = m.name;
  j["modality"] = to_string(m.modality);
  j["stimuli"] = json::array();
  for (const auto& e : m.stimuli.entries) {
    json s = {{"stimulus_id", e.stimulus_id},
              {"image_path", rel(e.image_path)},
              {"repetition_count", e.repetition_count}};
    if (e.class_label) s["class_label"] = *e.class_label;
    if (!e.family.empty()) s["family"] = e.family;
    j["stimuli"].push_back(s);
  }
  j["subjects"] = json::array();
  for (const auto& sub : m.subjects) {
    json s = {{"id", sub.id}};
    if (m.modality == Modality::fmri) {
      json rois = json::object();
      for (const auto& [roi, path] : sub.rois) rois[roi] = rel(path);
      s["rois"] = rois;
    } else {
      s["n_channels"] = sub.n_channels;
      s["n_timepoints"] = sub.n_timepoints;
      s["sample_rate_hz"] = sub.sample_rate_hz;
      s["window_ms"] = {sub.window_ms.first, sub.window_ms.second};
      s["epochs"] = rel(sub.epochs_path);
    }
    j["subjects"].push_back(s);
  }
  if (manifest_path.has_parent_path()) fs::create_directories(manifest_path.parent_path());
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write manifest " + manifest_path.string());
  out << j.dump(2) << "\n";
}

namespace {

RowMatrix fmri_matrix_from_array(const Tensor& arr, const StimulusSet& stimuli,
                                 const fs::path& path) {
  const std::size_t n = stimuli.size();
  std::size_t total_reps = 0;
  for (const auto& e : stimuli.entries) total_reps += static_cast<std::size_t>(e.repetition_count);

  if (arr.rank() == 3) {
    if (arr.dim(0) != n) {
      throw ValidationError(path.string() + ": field 'shape' axis 0 is " +
                            std::to_string(arr.dim(0)) + " but the manifest lists " +
                            std::to_string(n) + " stimuli");
    }
    for (const auto& e : stimuli.entries) {
      if (static_cast<std::size_t>(e.repetition_count) != arr.dim(1)) {
        throw ValidationError(path.string() + ": field 'shape' axis 1 (" +
                              std::to_string(arr.dim(1)) +
                              " repetitions) disagrees with repetition_count of stimulus '" +
                              e.stimulus_id + "'");
      }
    }
    return average_repetitions(arr).as_matrix();
  }
  if (arr.rank() != 2) {
    throw ValidationError(path.string() + ": field 'shape' must be 2-D or 3-D, got " +
                          shape_to_string(arr.shape()));
  }
  const std::size_t features = arr.dim(1);
  if (arr.dim(0) == n) {
    // Already one row per stimulus (covers the all-single-repetition case).
    RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(features));
    if (n > 0) m = arr.as_matrix();
    return m;
  }
  if (arr.dim(0) != total_reps) {
    throw ValidationError(path.string() + ": field 'shape' axis 0 is " + std::to_string(arr.dim(0)) +
                          ", expected " + std::to_string(n) + " (averaged) or " +
                          std::to_string(total_reps) + " (trial rows)");
  }
  RowMatrix trials = arr.as_matrix();
  RowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(features));
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto reps = static_cast<Eigen::Index>(stimuli.entries[i].repetition_count);
    m.row(static_cast<Eigen::Index>(i)) =
        trials.middleRows(row, reps).colwise().sum() / static_cast<double>(reps);
    row += reps;
  }
  return m;
}

}  // namespace

Dataset load_dataset(const fs::path& manifest_path) {
  Dataset ds;
  ds.manifest = parse_manifest(manifest_path);
  ds.stimuli = ds.manifest.stimuli;
  for (const auto& e : ds.stimuli.entries) {
    if (!fs::exists(e.image_path)) {
      throw IngestionError("missing image file for stimulus '" + e.stimulus_id +
                           "': " + e.image_path.string());
    }
  }
  const auto ids = ds.stimuli.ids();
  for (const auto& sub : ds.manifest.subjects) {
    if (ds.manifest.modality == Modality::fmri) {
      for (const auto& [roi, path] : sub.rois) {
        const Tensor arr = read_array(path);
        NeuralResponseMatrix r;
        r.subject_id = sub.id;
        r.roi = roi;
        r.modality = Modality::fmri;
        r.stimulus_ids = ids;
        r.data = fmri_matrix_from_array(arr, ds.stimuli, path);
        r.validate();
        ds.fmri.push_back(std::move(r));
      }
    } else {
      Tensor arr = read_array(sub.epochs_path);
      const fs::path& path = sub.epochs_path;
      if (arr.rank() != 4) {
        throw ValidationError(path.string() + ": field 'shape' must be [n_stimuli, reps, C, T], got " +
                              shape_to_string(arr.shape()));
      }
      if (arr.dim(0) != ids.size()) {
        throw ValidationError(path.string() + ": field 'shape' axis 0 does not match stimuli count");
      }
      if (arr.dim(2) != sub.n_channels) {
        throw ValidationError(path.string() + ": field 'n_channels' declares " +
                              std::to_string(sub.n_channels) + " but array has " +
                              std::to_string(arr.dim(2)));
      }
      if (arr.dim(3) != sub.n_timepoints) {
        throw ValidationError(path.string() + ": field 'n_timepoints' declares " +
                              std::to_string(sub.n_timepoints) + " but array has " +
                              std::to_string(arr.dim(3)));
      }
      for (const auto& e : ds.stimuli.entries) {
        if (static_cast<std::size_t>(e.repetition_count) != arr.dim(1)) {
          throw ValidationError(path.string() + ": field 'repetition_count' of stimulus '" +
                                e.stimulus_id + "' disagrees with array axis 1");
        }
      }
      EEGEpochs ep;
      ep.subject_id = sub.id;
      ep.data = std::move(arr);
      ep.sample_rate_hz = sub.sample_rate_hz;
      ep.window_ms = sub.window_ms;
      ep.stimulus_ids = ids;
      ep.validate();
      ds.eeg.push_back(std::move(ep));
    }
  }
  return ds;
}

Tensor average_repetitions(const Tensor& trials) {
  if (trials.rank() < 2) throw InvalidArgument("average_repetitions: need [n_stimuli, n_reps, ...]");
  const std::size_t n = trials.dim(0);
  const std::size_t reps = trials.dim(1);
  if (reps == 0) throw InvalidArgument("no repetitions");
  Shape shape = trials.shape();
  shape.erase(shape.begin() + 1);
  Tensor out(shape);
  const std::size_t cell = n == 0 ? 0 : trials.size() / (n * reps);
  for (std::size_t i = 0; i < n; ++i) {
    double* dst = out.data() + i * cell;
    for (std::size_t r = 0; r < reps; ++r) {
      const double* src = trials.data() + (i * reps + r) * cell;
      for (std::size_t c = 0; c < cell; ++c) dst[c] += src[c];
    }
    for (std::size_t c = 0; c < cell; ++c) dst[c] /= static_cast<double>(reps);
  }
  return out;
}

Tensor pseudo_trial_average(const Tensor& trials, std::size_t k_groups, std::uint64_t seed) {
  if (trials.rank() < 2) throw InvalidArgument("pseudo_trial_average: need [n_stimuli, n_reps, ...]");
  const std::size_t n = trials.dim(0);
  const std::size_t reps = trials.dim(1);
  if (k_groups < 2) throw InvalidArgument("pseudo_trial_average: k_groups must be >= 2");
  if (k_groups > reps) {
    throw InvalidArgument("pseudo_trial_average: k_groups (" + std::to_string(k_groups) +
                          ") exceeds repetitions (" + std::to_string(reps) + ")");
  }
  const std::size_t group = reps / k_groups;
  Shape shape = trials.shape();
  shape[1] = k_groups;
  Tensor out(shape);
  const std::size_t cell = n == 0 ? 0 : trials.size() / (n * reps);
  std::vector<std::size_t> order(reps);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {i}));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t g = 0; g < k_groups; ++g) {
      double* dst = out.data() + (i * k_groups + g) * cell;
      for (std::size_t r = 0; r < group; ++r) {
        const double* src = trials.data() + (i * reps + order[g * group + r]) * cell;
        for (std::size_t c = 0; c < cell; ++c) dst[c] += src[c];
      }
      for (std::size_t c = 0; c < cell; ++c) dst[c] /= static_cast<double>(group);
    }
  }
  return out;
}

namespace {

Tensor read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open image: " + path.string());
  auto next_token = [&]() {
    std::string tok;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string line;
        std::getline(in, line);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(c);
    }
    return tok;
  };
  const std::string magic = next_token();
  if (magic != "P6") throw ValidationError(path.string() + ": only binary PPM (P6) is supported");
  const std::size_t w = std::stoul(next_token());
  const std::size_t h = std::stoul(next_token());
  const int maxval = std::stoi(next_token());
  if (maxval <= 0 || maxval > 255) throw ValidationError(path.string() + ": unsupported PPM maxval");
  std::vector<unsigned char> raw(w * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw ValidationError(path.string() + ": truncated PPM data");
  Tensor img({3, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        img[(c * h + y) * w + x] = raw[(y * w + x) * 3 + c] / static_cast<double>(maxval);
      }
    }
  }
  return img;
}

Tensor resize_bilinear(const Tensor& img, std::size_t out_h, std::size_t out_w) {
  const std::size_t c = img.dim(0), h = img.dim(1), w = img.dim(2);
  Tensor out({c, out_h, out_w});
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                   static_cast<double>(h - 1));
      const auto y0 = static_cast<std::size_t>(fy);
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      const double ty = fy - static_cast<double>(y0);
      for (std::size_t x = 0; x < out_w; ++x) {
        const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                     static_cast<double>(w - 1));
        const auto x0 = static_cast<std::size_t>(fx);
        const std::size_t x1 = std::min(x0 + 1, w - 1);
        const double tx = fx - static_cast<double>(x0);
        auto at = [&](std::size_t yy, std::size_t xx) { return img[(ch * h + yy) * w + xx]; };
        out[(ch * out_h + y) * out_w + x] =
            (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) +
            ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
      }
    }
  }
  return out;
}

}  // namespace

Tensor load_image(const fs::path& path, std::size_t height, std::size_t width) {
  if (!fs::exists(path)) throw IngestionError("missing image file: " + path.string());
  Tensor img;
  const std::string ext = path.extension().string();
  if (ext == ".ppm") {
    img = read_ppm(path);
  } else {
    img = read_array(path);
    if (img.rank() != 3 || img.dim(0) != 3) {
      throw ValidationError(path.string() + ": field 'shape' of an image array must be [3, H, W]");
    }
  }
  if (img.dim(1) != height || img.dim(2) != width) img = resize_bilinear(img, height, width);
  return img;
}

Tensor load_images(const StimulusSet& stimuli, std::size_t height, std::size_t width) {
  Tensor batch({stimuli.size(), 3, height, width});
  const std::size_t stride = 3 * height * width;
  for (std::size_t i = 0; i < stimuli.size(); ++i) {
    const Tensor img = load_image(stimuli.entries[i].image_path, height, width);
    std::copy(img.values().begin(), img.values().end(), batch.data() + i * stride);
  }
  return batch;
}

}  // namespace neuroalign
