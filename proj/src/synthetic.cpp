#include "neuroalign/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "neuroalign/array_io.hpp"
#include "neuroalign/data_ingest.hpp"
#include "neuroalign/error.hpp"
#include "neuroalign/nn.hpp"
#include "neuroalign/random.hpp"

namespace neuroalign {

namespace fs = std::filesystem;

Tensor synthetic_images(std::size_t n, std::size_t height, std::size_t width, std::uint64_t seed,
                        std::size_t first_index) {
  Tensor out({n, 3, height, width});
  const double h = static_cast<double>(height), w = static_cast<double>(width);
  for (std::size_t k = 0; k < n; ++k) {
    Rng rng(derive_seed(seed, {first_index + k}));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::array<double, 3> base{u(rng), u(rng), u(rng)};
    const double theta = u(rng) * std::numbers::pi;
    const double freq = 1.0 + 4.0 * u(rng);
    const double phase = u(rng) * 2.0 * std::numbers::pi;
    const double grating_amp = 0.3 * u(rng);
    struct Blob {
      double cy, cx, sigma;
      std::array<double, 3> color;
    };
    std::vector<Blob> blobs(1 + rng() % 3);
    for (auto& b : blobs) {
      b.cy = u(rng) * h;
      b.cx = u(rng) * w;
      b.sigma = (0.08 + 0.25 * u(rng)) * std::min(h, w);
      b.color = {u(rng) * 2.0 - 1.0, u(rng) * 2.0 - 1.0, u(rng) * 2.0 - 1.0};
    }
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double yy = static_cast<double>(y), xx = static_cast<double>(x);
        const double g = grating_amp *
                         std::sin(2.0 * std::numbers::pi * freq * (xx * std::cos(theta) + yy * std::sin(theta)) / w + phase);
        for (std::size_t c = 0; c < 3; ++c) {
          double v = base[c] * 0.5 + 0.25 + g;
          for (const auto& b : blobs) {
            const double d2 = (yy - b.cy) * (yy - b.cy) + (xx - b.cx) * (xx - b.cx);
            v += 0.5 * b.color[c] * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
          }
          out[((k * 3 + c) * height + y) * width + x] = std::clamp(v, 0.0, 1.0);
        }
      }
    }
  }
  return out;
}

RowMatrix concatenated_features(const Backbone& backbone, const Tensor& images, std::size_t batch_size) {
  const LayerActivations acts = forward_batched(backbone, images, batch_size);
  std::array<RowMatrix, kNumStages> flat;
  Eigen::Index total = 0;
  for (std::size_t s = 0; s < kNumStages; ++s) {
    flat[s] = nn::flatten(acts.stages[s]);
    total += flat[s].cols();
  }
  RowMatrix out(flat[0].rows(), total);
  Eigen::Index col = 0;
  for (const auto& f : flat) {
    out.middleCols(col, f.cols()) = f;
    col += f.cols();
  }
  return out;
}

namespace {

enum : std::uint64_t { kTrainImages = 1, kTestImages, kBrain, kReadout, kNoise, kEeg, kEegNoise };

std::vector<std::string> make_ids(const std::string& prefix, std::size_t n) {
  std::vector<std::string> ids;
  char buf[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%s%04zu", prefix.c_str(), i);
    ids.emplace_back(buf);
  }
  return ids;
}

Tensor noisy_trials(const RowMatrix& signal, const Vector& noise_var_avg, std::size_t reps, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(signal.rows()), v = static_cast<std::size_t>(signal.cols());
  Tensor out({n, reps, v});
  std::normal_distribution<double> normal(0.0, 1.0);
  // Per-trial variance reps * var so the repetition average has var.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < reps; ++r)
      for (std::size_t k = 0; k < v; ++k)
        out[(i * reps + r) * v + k] =
            signal(i, k) + std::sqrt(static_cast<double>(reps) * noise_var_avg(k)) * normal(rng);
  return out;
}

}  // namespace

SyntheticFmri make_synthetic_fmri(const SyntheticFmriOptions& o, const BackboneSpec& spec) {
  if (o.n_train < 2 || o.n_test < 3) throw InvalidArgument("synthetic fMRI needs >= 2 train and >= 3 test stimuli");
  if (o.n_voxels < 3) throw InvalidArgument("synthetic fMRI needs >= 3 voxels");
  if (o.repetitions < 1) throw InvalidArgument("synthetic fMRI needs >= 1 repetition");
  if (!(o.snr > 0.0)) throw InvalidArgument("synthetic fMRI snr must be positive");
  SyntheticFmri d;
  d.train_images = synthetic_images(o.n_train, spec.input_height, spec.input_width, derive_seed(o.seed, {kTrainImages}));
  d.test_images = synthetic_images(o.n_test, spec.input_height, spec.input_width, derive_seed(o.seed, {kTestImages}));
  d.train_ids = make_ids("train_", o.n_train);
  d.test_ids = make_ids("test_", o.n_test);
  d.brain = Backbone::build(spec, derive_seed(o.seed, {kBrain}));
  d.brain.calibrate_batchnorm(d.train_images, 64);

  const RowMatrix f_train = concatenated_features(d.brain, d.train_images);
  const RowMatrix f_test = concatenated_features(d.brain, d.test_images);
  const Eigen::Index p = f_train.cols();
  for (std::size_t s = 0; s < o.n_subjects; ++s) {
    SyntheticSubject sub;
    Rng rng(derive_seed(o.seed, {kReadout, s}));
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(p)));
    sub.readout.resize(p, static_cast<Eigen::Index>(o.n_voxels));
    for (Eigen::Index i = 0; i < sub.readout.size(); ++i) sub.readout.data()[i] = normal(rng);
    const RowMatrix sig_train = f_train * sub.readout;
    const RowMatrix sig_test = f_test * sub.readout;
    const RowMatrix centered = sig_train.rowwise() - sig_train.colwise().mean();
    Vector noise_var = (centered.colwise().squaredNorm() / static_cast<double>(sig_train.rows() - 1)).transpose() / o.snr;
    for (Eigen::Index k = 0; k < noise_var.size(); ++k) {
      if (!(noise_var(k) > 0.0)) noise_var(k) = 1e-6;
    }
    Rng noise(derive_seed(o.seed, {kNoise, s}));
    sub.train_trials = noisy_trials(sig_train, noise_var, o.repetitions, noise);
    sub.test_trials = noisy_trials(sig_test, noise_var, o.repetitions, noise);
    d.subjects.push_back(std::move(sub));
  }
  return d;
}

namespace {

StimulusSet write_images(const fs::path& dir, const Tensor& images, const std::vector<std::string>& ids,
                         int repetitions, const std::vector<std::string>& families) {
  fs::create_directories(dir / "images");
  StimulusSet set;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const fs::path rel = fs::path("images") / (ids[i] + ".f32");
    const Tensor img = images.slice0(i, i + 1).reshaped({images.dim(1), images.dim(2), images.dim(3)});
    write_array(dir / rel, img, Dtype::float32);
    StimulusEntry e;
    e.stimulus_id = ids[i];
    e.image_path = rel;
    e.repetition_count = repetitions;
    if (!families.empty()) e.family = families[i];
    set.entries.push_back(std::move(e));
  }
  return set;
}

std::string subject_id(std::size_t s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "sub%02zu", s + 1);
  return buf;
}

}  // namespace

void write_synthetic_fmri(const fs::path& dir, const SyntheticFmri& d) {
  const int reps = d.subjects.empty() ? 1 : static_cast<int>(d.subjects[0].train_trials.dim(1));
  std::vector<std::string> test_families(d.test_ids.size());
  for (std::size_t i = 0; i < test_families.size(); ++i) {
    const std::size_t slot = i % 10;
    test_families[i] = slot < 5 ? "natural" : slot < 9 ? "shape" : "letter";
  }
  for (const bool is_train : {true, false}) {
    const fs::path sub_dir = dir / (is_train ? "train" : "test");
    DatasetManifest m;
    m.name = is_train ? "synthetic_fmri_train" : "synthetic_fmri_test";
    m.modality = Modality::fmri;
    m.stimuli = write_images(sub_dir, is_train ? d.train_images : d.test_images, is_train ? d.train_ids : d.test_ids,
                             reps, is_train ? std::vector<std::string>{} : test_families);
    fs::create_directories(sub_dir / "responses");
    for (std::size_t s = 0; s < d.subjects.size(); ++s) {
      SubjectEntry e;
      e.id = subject_id(s);
      const fs::path rel = fs::path("responses") / (e.id + "_all_visual.f32");
      write_array(sub_dir / rel, is_train ? d.subjects[s].train_trials : d.subjects[s].test_trials, Dtype::float32);
      e.rois["all_visual"] = rel;
      m.subjects.push_back(std::move(e));
    }
    write_manifest(sub_dir / "manifest.json", m);
  }
}

void write_synthetic_eeg(const fs::path& dir, const SyntheticEegOptions& o, const BackboneSpec& spec) {
  if (o.n_stimuli < 3) throw InvalidArgument("synthetic EEG needs >= 3 stimuli");
  if (o.n_channels < 1 || o.n_timepoints < 1 || o.repetitions < 1) {
    throw InvalidArgument("synthetic EEG needs positive channel, timepoint and repetition counts");
  }
  const Tensor images = synthetic_images(o.n_stimuli, spec.input_height, spec.input_width, derive_seed(o.seed, {kEeg}));
  const auto ids = make_ids("eeg_", o.n_stimuli);
  Backbone brain = Backbone::build(spec, derive_seed(o.seed, {kBrain}));
  brain.calibrate_batchnorm(images, 64);
  const LayerActivations acts = forward_batched(brain, images, 64);
  RowMatrix it = nn::flatten(acts.it());
  it = it.rowwise() - it.colwise().mean();

  DatasetManifest m;
  m.name = "synthetic_eeg";
  m.modality = Modality::eeg;
  m.stimuli = write_images(dir, images, ids, static_cast<int>(o.repetitions), {});
  fs::create_directories(dir / "epochs");
  const double duration_ms = 1000.0 * static_cast<double>(o.n_timepoints) / o.sample_rate_hz;
  for (std::size_t s = 0; s < o.n_subjects; ++s) {
    Rng rng(derive_seed(o.seed, {kEeg, s}));
    std::normal_distribution<double> normal(0.0, 1.0);
    RowMatrix proj(it.cols(), static_cast<Eigen::Index>(o.n_channels));
    for (Eigen::Index i = 0; i < proj.size(); ++i) proj.data()[i] = normal(rng);
    RowMatrix pattern = it * proj;
    const double scale = std::sqrt(pattern.squaredNorm() / static_cast<double>(pattern.size()));
    if (scale > 0.0) pattern /= scale;
    Tensor epochs({o.n_stimuli, o.repetitions, o.n_channels, o.n_timepoints});
    Rng noise(derive_seed(o.seed, {kEegNoise, s}));
    for (std::size_t i = 0; i < o.n_stimuli; ++i)
      for (std::size_t r = 0; r < o.repetitions; ++r)
        for (std::size_t c = 0; c < o.n_channels; ++c)
          for (std::size_t t = 0; t < o.n_timepoints; ++t) {
            const double frac = static_cast<double>(t) / static_cast<double>(o.n_timepoints);
            const double ramp = std::clamp((frac - o.onset_fraction) / 0.25, 0.0, 1.0);
            epochs[((i * o.repetitions + r) * o.n_channels + c) * o.n_timepoints + t] =
                o.signal * ramp * pattern(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) + normal(noise);
          }
    SubjectEntry e;
    e.id = subject_id(s);
    e.n_channels = o.n_channels;
    e.n_timepoints = o.n_timepoints;
    e.sample_rate_hz = o.sample_rate_hz;
    e.window_ms = {o.window_start_ms, o.window_start_ms + duration_ms};
    e.epochs_path = fs::path("epochs") / (e.id + ".f32");
    write_array(dir / e.epochs_path, epochs, Dtype::float32);
    m.subjects.push_back(std::move(e));
  }
  write_manifest(dir / "manifest.json", m);
}

DimensionEmbedding synthetic_embedding(const std::vector<std::string>& ids, std::size_t n_dimensions,
                                       std::uint64_t seed) {
  DimensionEmbedding e;
  e.stimulus_ids = ids;
  e.values.resize(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(n_dimensions));
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < e.values.size(); ++i) e.values.data()[i] = normal(rng);
  char buf[32];
  for (std::size_t k = 0; k < n_dimensions; ++k) {
    std::snprintf(buf, sizeof buf, "dim%02zu", k + 1);
    e.dimension_names.emplace_back(buf);
  }
  return e;
}

}  // namespace neuroalign
