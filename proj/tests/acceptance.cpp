// Acceptance checks 1-8. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "neuroalign/data_ingest.hpp"
#include "neuroalign/dimension_analysis.hpp"
#include "neuroalign/eeg_decoding.hpp"
#include "neuroalign/losses.hpp"
#include "neuroalign/preprocessing.hpp"
#include "neuroalign/random.hpp"
#include "neuroalign/rsa.hpp"
#include "neuroalign/run.hpp"
#include "neuroalign/stats.hpp"
#include "neuroalign/synthetic.hpp"
#include "neuroalign/trainer.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

namespace {

using namespace neuroalign;
using nlohmann::json;
using testsupport::Mat;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("s" + std::to_string(i));
  return out;
}

RowMatrix to_eigen(const Mat& m) {
  RowMatrix out(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m[0].size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[0].size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i][j];
  return out;
}

Mat to_mat(const RowMatrix& m) {
  Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

double max_dev(const RowMatrix& a, const Mat& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b[i].size(); ++j)
      d = std::max(d, std::abs(a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - b[i][j]));
  return d;
}

RowMatrix gaussian_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) { return to_eigen(testsupport::random_matrix(n, d, rng)); }

// ---------------------------------------------------------------------------

Outcome loss_gradients() {
  const auto t0 = Clock::now();
  const testsupport::GradCheckOptions o;
  const auto r = testsupport::check_alignment_gradients(o);
  const double secs = seconds_since(t0);
  return {r.pass_fraction() >= 0.99 && secs < 120.0,
          fmt("%zu/%zu sampled entries within %.0e relative (floor %.0e): %.2f%% (need >= 99%%), %.1f s (limit 120 s)",
              r.passed(), r.entries.size(), o.rel_tol, o.abs_floor, 100.0 * r.pass_fraction(), secs)};
}

Outcome contrastive_accounting() {
  std::mt19937_64 rng(2);
  const RowMatrix gen = gaussian_rows(16, 32, rng), real = gaussian_rows(16, 32, rng);
  const GenerationTerms t = generation_loss(gen, real);

  // The same counters from a real training step at batch size 16.
  SyntheticFmriOptions so;
  so.n_train = 16;
  so.n_test = 3;
  so.n_voxels = 24;
  so.seed = 2;
  const SyntheticFmri s = make_synthetic_fmri(so);
  Backbone init = Backbone::build(BackboneSpec::tiny(), 3);
  const RowMatrix resp = average_repetitions(s.subjects[0].train_trials).as_matrix();
  const auto pre = ResponsePreprocessor::fit(resp, 8, true);
  AlignmentConfig c;
  c.pca_k = 8;
  c.epochs = 1;
  const TrainResult r = train(c, init, {s.train_images, pre.transform(resp), s.train_ids, {}});
  const auto& step = r.log.steps.at(0).losses;
  const bool pass = t.positive_pairs == 16 && t.negative_pairs == 240 && r.log.steps.size() == 1 &&
                    step.positive_pairs == 16 && step.negative_pairs == 240;
  return {pass, fmt("generation_loss: %zu positive + %zu negative = %zu pairs; training step (batch %zu): %zu + %zu",
                    t.positive_pairs, t.negative_pairs, t.positive_pairs + t.negative_pairs,
                    r.log.steps[0].batch_size, step.positive_pairs, step.negative_pairs)};
}

Outcome statistical_oracles() {
  const auto t0 = Clock::now();
  std::map<std::string, double> worst = {{"pearson", 0.0},     {"spearman", 0.0},    {"partial_spearman", 0.0},
                                         {"pca", 0.0},         {"pattern_rdm", 0.0}, {"feature_rdm", 0.0},
                                         {"decoding_rdm", 0.0}};
  auto note = [&](const char* key, double d) { worst[key] = std::max(worst[key], std::isnan(d) ? INFINITY : d); };
  const std::size_t trials = 1000;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::mt19937_64 rng(100000 + trial);
    std::uniform_int_distribution<std::size_t> size(3, 20), feat(2, 20);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t n = size(rng), d = feat(rng);

    // Correlations; odd trials are rounded so that ties occur.
    std::vector<double> x(n), y(n);
    do {
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = normal(rng);
        y[i] = 0.5 * x[i] + normal(rng);
        if (trial % 2) {
          x[i] = std::round(2.0 * x[i]) / 2.0;
          y[i] = std::round(2.0 * y[i]) / 2.0;
        }
      }
    } while (is_degenerate(x) || is_degenerate(y));
    note("pearson", std::abs(pearson(x, y) - testsupport::oracle_pearson(x, y)));
    note("spearman", std::abs(spearman(x, y) - testsupport::oracle_spearman(x, y)));

    // Partial Spearman with one control on three feature RDMs. Draws where the
    // control ranks perfectly with either variable leave the closed form at 0/0.
    {
      const std::size_t m = std::uniform_int_distribution<std::size_t>(6, 12)(rng);
      std::vector<double> a(m), b(m), c(m), ua, ub, uc;
      do {
        for (std::size_t i = 0; i < m; ++i) {
          a[i] = normal(rng);
          c[i] = normal(rng);
          b[i] = 0.4 * a[i] + 0.4 * c[i] + normal(rng);
        }
        ua = testsupport::oracle_upper(testsupport::oracle_feature_rdm(a));
        ub = testsupport::oracle_upper(testsupport::oracle_feature_rdm(b));
        uc = testsupport::oracle_upper(testsupport::oracle_feature_rdm(c));
      } while (std::abs(testsupport::oracle_spearman(ua, uc)) >= 1.0 - 1e-12 ||
               std::abs(testsupport::oracle_spearman(ub, uc)) >= 1.0 - 1e-12);
      const Rdm ra = feature_rdm(a, ids(m)), rb = feature_rdm(b, ids(m)), rc = feature_rdm(c, ids(m));
      note("partial_spearman", std::abs(partial_spearman(ra, rb, {rc}).rho - testsupport::oracle_partial_spearman_1(ua, ub, uc)));
    }

    // PCA: components are eigenvectors of the loop covariance, projections match the loop projection.
    {
      const Mat raw = testsupport::random_matrix(n, d, rng);
      const std::size_t k = std::uniform_int_distribution<std::size_t>(1, std::min(n - 1, d))(rng);
      const PCAModel model = fit_pca(to_eigen(raw), k);
      const Mat cov = testsupport::oracle_covariance(raw);
      const Mat comps = to_mat(model.components);
      std::vector<double> mean(d, 0.0);
      for (const auto& row : raw)
        for (std::size_t f = 0; f < d; ++f) mean[f] += row[f] / static_cast<double>(n);
      double dev = 0.0;
      for (std::size_t f = 0; f < d; ++f) dev = std::max(dev, std::abs(model.mean(static_cast<Eigen::Index>(f)) - mean[f]));
      for (std::size_t c = 0; c < k; ++c) {
        const double lambda = model.explained_variance(static_cast<Eigen::Index>(c));
        double rayleigh = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
          double cv = 0.0;
          for (std::size_t b = 0; b < d; ++b) cv += cov[a][b] * comps[c][b];
          dev = std::max(dev, std::abs(cv - lambda * comps[c][a]));
          rayleigh += comps[c][a] * cv;
        }
        dev = std::max(dev, std::abs(rayleigh - lambda));
      }
      const Mat proj = testsupport::oracle_project(raw, mean, comps);
      dev = std::max(dev, max_dev(apply_pca(model, to_eigen(raw)), proj));
      note("pca", dev);
    }

    // The three RDM constructions.
    {
      const Mat patterns = testsupport::random_matrix(n, d, rng);
      note("pattern_rdm", max_dev(pattern_rdm(to_eigen(patterns), ids(n)).matrix, testsupport::oracle_pattern_rdm(patterns)));
      note("feature_rdm", max_dev(feature_rdm(x, ids(n)).matrix, testsupport::oracle_feature_rdm(x)));

      const std::size_t ns = std::uniform_int_distribution<std::size_t>(3, 6)(rng);
      const std::size_t ch = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
      const std::size_t kp = 5;
      Tensor pseudo({ns, kp, ch, 1});
      std::vector<Mat> cond(ns, Mat(kp, std::vector<double>(ch)));
      for (std::size_t i = 0; i < ns; ++i) {
        const double offset = 0.8 * normal(rng);
        for (std::size_t r = 0; r < kp; ++r)
          for (std::size_t c = 0; c < ch; ++c) {
            const double v = offset * static_cast<double>(c % 2 ? 1 : -1) + normal(rng);
            pseudo[(i * kp + r) * ch + c] = v;
            cond[i][r][c] = v;
          }
      }
      DecodingConfig dc;
      dc.seed = trial;
      const std::vector<Rdm> rdms = build_eeg_rdms(pseudo, ids(ns), dc);
      Mat expected(ns, std::vector<double>(ns, 0.0));
      for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t j = i + 1; j < ns; ++j)
          expected[i][j] = expected[j][i] =
              testsupport::oracle_lda_accuracy(cond[i], cond[j], dc.n_folds, derive_seed(dc.seed, {i, j, 0}));
      note("decoding_rdm", max_dev(rdms[0].matrix, expected));
    }
  }
  const double secs = seconds_since(t0);
  bool pass = secs < 60.0;
  std::string detail;
  for (const auto& [key, dev] : worst) {
    const double tol = key == "pca" ? 1e-6 : 1e-8;
    pass = pass && dev <= tol;
    detail += fmt("%s %.2e, ", key.c_str(), dev);
  }
  detail += fmt("max |deviation| over %zu trials (limits 1e-8, PCA 1e-6), %.1f s (limit 60 s)", trials, secs);
  return {pass, detail};
}

Outcome synthetic_recovery() {
  const auto t0 = Clock::now();
  const double beta = 40.0, learning_rate = 3e-4;
  const std::size_t pca_k = 128;
  std::vector<double> ratios;
  bool every_seed = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SyntheticFmriOptions o;  // 512 train / 64 test, 256 voxels, SNR 5
    o.seed = seed;
    const SyntheticFmri d = make_synthetic_fmri(o);
    Backbone init = Backbone::build(BackboneSpec::tiny(), derive_seed(seed, {99}));
    init.calibrate_batchnorm(d.train_images, 64);
    const RowMatrix train_resp = average_repetitions(d.subjects[0].train_trials).as_matrix();
    const RowMatrix test_resp = average_repetitions(d.subjects[0].test_trials).as_matrix();
    const auto pre = ResponsePreprocessor::fit(train_resp, pca_k, true);
    const TrainingData td{d.train_images, pre.transform(train_resp), d.train_ids, {}};
    const Rdm neural = pattern_rdm(test_resp, d.test_ids);

    double rho[2];
    for (int arm = 0; arm < 2; ++arm) {
      AlignmentConfig c;
      c.beta = arm == 0 ? beta : 0.0;
      c.learning_rate = learning_rate;
      c.pca_k = pca_k;
      c.seed = seed;
      const TrainResult r = train(c, init, td);
      rho[arm] = roi_similarity(model_rdms(r.model.backbone, d.test_images, d.test_ids), neural).best_rho;
    }
    const double ratio = *improvement_ratio(rho[0], rho[1]);
    ratios.push_back(ratio);
    every_seed = every_seed && rho[0] > rho[1];
    detail += fmt("seed %llu: beta 40 %.4f vs beta 0 %.4f (%+.1f%%); ", static_cast<unsigned long long>(seed), rho[0],
                  rho[1], 100.0 * ratio);
  }
  double mean = 0.0;
  for (double r : ratios) mean += r / static_cast<double>(ratios.size());
  const double secs = seconds_since(t0);
  detail += fmt("mean improvement %.1f%% (need > 10%%), %.0f s (limit 900 s)", 100.0 * mean, secs);
  return {every_seed && mean > 0.10 && secs < 900.0, detail};
}

// Strictly increasing maps on [0, 2].
double monotone(int family, double a, double b, double v) {
  switch (family) {
    case 0: return a * v + b;
    case 1: return std::exp(a * v);
    case 2: return std::pow(v, a);
    case 3: return std::log(b + v);
    default: return std::tanh(a * (v - b));
  }
}

Outcome rdm_invariants() {
  std::size_t checked = 0;
  std::string failure;
  auto check = [&](const Rdm& r, const std::string& what) {
    ++checked;
    try {
      r.validate(1e-6);
    } catch (const Error& e) {
      if (failure.empty()) failure = what + ": " + e.what();
    }
  };

  // RDMs from every producer in the pipeline.
  SyntheticFmriOptions so;
  so.n_train = 16;
  so.n_test = 20;
  so.n_voxels = 24;
  so.n_subjects = 2;
  so.seed = 5;
  const SyntheticFmri s = make_synthetic_fmri(so);
  for (std::size_t sub = 0; sub < s.subjects.size(); ++sub) {
    NeuralResponseMatrix r;
    r.data = average_repetitions(s.subjects[sub].test_trials).as_matrix();
    r.stimulus_ids = s.test_ids;
    check(neural_rdm(r), "neural RDM");
  }
  for (const auto& rdm : model_rdms(s.brain, s.test_images, s.test_ids)) check(rdm, "model RDM");
  const Backbone other = Backbone::build(BackboneSpec::tiny(), 6);
  for (const auto& rdm : model_rdms(other, s.test_images, s.test_ids)) check(rdm, "model RDM");
  const DimensionEmbedding emb = synthetic_embedding(s.test_ids, 49, 7);
  for (Eigen::Index k = 0; k < emb.values.cols(); ++k) {
    const Vector col = emb.values.col(k);
    check(feature_rdm(std::span<const double>(col.data(), col.size()), emb.stimulus_ids), "feature RDM");
  }
  {
    testsupport::TempDir tmp;
    SyntheticEegOptions eo;
    eo.n_stimuli = 8;
    eo.n_subjects = 2;
    eo.repetitions = 10;
    eo.n_channels = 6;
    eo.n_timepoints = 5;
    eo.seed = 8;
    write_synthetic_eeg(tmp.path(), eo);
    const Dataset ds = load_dataset(tmp / "manifest.json");
    for (const auto& epochs : ds.eeg)
      for (const auto& rdm : build_eeg_rdms(epochs, DecodingConfig{})) check(rdm, "EEG RDM");
  }
  const std::size_t pipeline_rdms = checked;

  // Rank invariance of compare_rdms and roi_similarity under 100 random increasing transforms.
  std::size_t invariant = 0;
  double worst = 0.0;
  for (std::size_t t = 0; t < 100; ++t) {
    std::mt19937_64 rng(500 + t);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(5, 20)(rng);
    auto random_rdm = [&] { return pattern_rdm(gaussian_rows(n, 12, rng), ids(n)); };
    const Rdm a = random_rdm(), b = random_rdm();
    const LayerRdms layers = {random_rdm(), random_rdm(), random_rdm(), random_rdm()};
    const int family = static_cast<int>(t % 5);
    std::uniform_real_distribution<double> ua(0.2, 3.0), ub(0.05, 1.0);
    const double pa = ua(rng), pb = ub(rng);
    Rdm fb = b;
    for (Eigen::Index i = 0; i < fb.matrix.rows(); ++i)
      for (Eigen::Index j = 0; j < fb.matrix.cols(); ++j)
        if (i != j) fb.matrix(i, j) = monotone(family, pa, pb, b.matrix(i, j));
    const double d1 = std::abs(compare_rdms(a, fb) - compare_rdms(a, b));
    const double d2 = std::abs(compare_rdms(fb, a) - compare_rdms(b, a));
    const RoiSimilarity r0 = roi_similarity(layers, b), r1 = roi_similarity(layers, fb);
    const double d3 = std::abs(r0.best_rho - r1.best_rho);
    worst = std::max({worst, d1, d2, d3});
    if (d1 <= 1e-12 && d2 <= 1e-12 && d3 <= 1e-12 && r0.best_layer == r1.best_layer) ++invariant;
  }
  const bool pass = failure.empty() && invariant == 100;
  std::string detail = fmt("%zu pipeline RDMs pass symmetry (1e-6) and zero-diagonal checks; %zu/100 monotone transforms leave "
                           "compare_rdms and the best layer unchanged (max |delta rho| %.1e)",
                           pipeline_rdms, invariant, worst);
  if (!failure.empty()) detail += "; first violation: " + failure;
  return {pass, detail};
}

Outcome eeg_decoding_sanity() {
  auto epochs_with = [](const std::vector<double>& offsets, std::size_t reps, std::size_t ch, std::uint64_t seed) {
    EEGEpochs e;
    e.subject_id = "sub01";
    e.stimulus_ids = ids(offsets.size());
    e.window_ms = {0.0, 200.0};  // 20 timepoints at 100 Hz
    e.data = Tensor({offsets.size(), reps, ch, 20});
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < offsets.size(); ++i)
      for (std::size_t r = 0; r < reps * ch * 20; ++r) e.data[i * reps * ch * 20 + r] = offsets[i] + normal(rng);
    return e;
  };
  DecodingConfig config;  // shrinkage LDA, 5 pseudo-trials, 5 folds
  config.seed = 11;

  const EEGEpochs noise = epochs_with(std::vector<double>(200, 0.0), 20, 17, 1);
  const std::vector<Rdm> noise_rdms = build_eeg_rdms(noise, config);
  double lo = 1.0, hi = 0.0, overall = 0.0;
  for (const auto& r : noise_rdms) {
    const auto u = r.upper_triangle();
    double m = 0.0;
    for (double v : u) m += v / static_cast<double>(u.size());
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    overall += m / static_cast<double>(noise_rdms.size());
  }
  const bool chance = lo >= 0.45 && hi <= 0.55;

  std::vector<double> offsets;
  for (int i = 0; i < 8; ++i) offsets.push_back(10.0 * i);
  const EEGEpochs separable = epochs_with(offsets, 20, 17, 2);
  double sep_min[2] = {1.0, 1.0};
  for (int cls = 0; cls < 2; ++cls) {
    DecodingConfig c = config;
    c.classifier = cls == 0 ? Classifier::linear_discriminant : Classifier::linear_svm;
    for (const auto& r : build_eeg_rdms(separable, c))
      for (double v : r.upper_triangle()) sep_min[cls] = std::min(sep_min[cls], v);
  }
  const bool perfect = sep_min[0] == 1.0 && sep_min[1] == 1.0;

  const std::vector<Rdm> again = build_eeg_rdms(noise, config);
  bool same = again.size() == noise_rdms.size();
  for (std::size_t t = 0; same && t < again.size(); ++t) same = again[t].matrix == noise_rdms[t].matrix;

  return {chance && perfect && same,
          fmt("noise (200 stimuli, 20 timepoints): per-timepoint mean off-diagonal accuracy in [%.3f, %.3f], overall %.3f (need 0.45-0.55); "
              "separable: min accuracy LDA %.3f, SVM %.3f (need 1.0); repeated build bitwise %s",
              lo, hi, overall, sep_min[0], sep_min[1], same ? "identical" : "DIFFERENT")};
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// synth -> train -> eval-fmri -> eval-eeg -> dims -> report under root/work.
void pipeline(const fs::path& root) {
  const fs::path work = root / "work";
  fs::create_directories(work);
  write_json(work / "synth.json",
             {{"seed", 21},
              {"synth",
               {{"fmri", {{"n_train", 64}, {"n_test", 30}, {"n_voxels", 32}, {"n_subjects", 2}}},
                {"eeg", {{"n_stimuli", 6}, {"n_subjects", 3}, {"repetitions", 10}, {"n_channels", 4}, {"n_timepoints", 5}}},
                {"embedding_dimensions", 49}}}});
  auto spec = [](std::string cmd, std::optional<fs::path> cfg, fs::path out) {
    RunSpec s;
    s.command = std::move(cmd);
    s.config_path = std::move(cfg);
    s.output_dir = std::move(out);
    return s;
  };
  const fs::path data = run(spec("synth", work / "synth.json", work / "data")).run_dir;
  json c = read_json(data / "pipeline_config.json");
  c["training"] = {{"epochs", 2}, {"batch_size", 16}, {"pca_k", 16}, {"learning_rate", 3e-4}};
  c["evaluation"] = {{"train_run", (work / "runs" / "train").string()}};
  c["eeg"] = {{"n_permutations", 100}, {"cluster_correction", true}};
  write_json(data / "config.json", c);
  for (const char* cmd : {"train", "eval-fmri", "eval-eeg", "dims"}) run(spec(cmd, data / "config.json", work / "runs" / cmd));
  run(spec("report", std::nullopt, work / "runs"));
}

Outcome end_to_end_determinism() {
  testsupport::TempDir tmp;
  pipeline(tmp.path());
  fs::rename(tmp / "work", tmp / "a");
  pipeline(tmp.path());
  fs::rename(tmp / "work", tmp / "b");

  auto files = [](const fs::path& root) {
    std::set<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) out.insert(fs::relative(e.path(), root).generic_string());
    return out;
  };
  const auto fa = files(tmp / "a"), fb = files(tmp / "b");
  std::size_t identical = 0, checkpoint_files = 0, report_files = 0;
  std::string first_diff;
  for (const auto& f : fa) {
    if (!fb.count(f)) {
      if (first_diff.empty()) first_diff = f + " missing in second run";
      continue;
    }
    if (read_bytes(tmp / "a" / f) == read_bytes(tmp / "b" / f)) {
      ++identical;
      if (f.find("/checkpoints/") != std::string::npos || f.find("/backbone_init/") != std::string::npos) ++checkpoint_files;
      if (f.rfind("runs/report/", 0) == 0 || f.find("similarity") != std::string::npos ||
          f.find("temporal") != std::string::npos || f.find("dims") != std::string::npos)
        ++report_files;
    } else if (first_diff.empty()) {
      first_diff = f + " differs";
    }
  }
  const bool pass = fa == fb && identical == fa.size() && checkpoint_files > 0 && report_files > 0;
  std::string detail = fmt("%zu/%zu files bitwise identical across two runs (%zu checkpoint files, %zu report/result files)",
                           identical, fa.size(), checkpoint_files, report_files);
  if (!first_diff.empty()) detail += "; first difference: " + first_diff;
  return {pass, detail};
}

Outcome dimension_ground_truth() {
  const std::size_t n = 100, dims = 49, planted = 7;
  std::mt19937_64 rng(31);
  // Mutually orthogonal, centered embedding columns.
  RowMatrix raw = gaussian_rows(n, dims, rng);
  raw = raw.rowwise() - raw.colwise().mean();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr{Eigen::MatrixXd(raw)};
  DimensionEmbedding e;
  e.values = Eigen::MatrixXd(qr.householderQ()).leftCols(dims) * std::sqrt(static_cast<double>(n));
  e.stimulus_ids = ids(n);
  for (std::size_t k = 0; k < dims; ++k) e.dimension_names.push_back("dim" + std::to_string(k));

  const Vector col = e.values.col(static_cast<Eigen::Index>(planted));
  Rdm model = feature_rdm(std::span<const double>(col.data(), col.size()), e.stimulus_ids);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (Eigen::Index i = 0; i < model.matrix.rows(); ++i)
    for (Eigen::Index j = i + 1; j < model.matrix.cols(); ++j)
      model.matrix(i, j) = model.matrix(j, i) = model.matrix(i, j) + noise(rng);

  const DimensionProfile p = dimension_profile(model, e);
  double other = 0.0;
  for (std::size_t k = 0; k < dims; ++k)
    if (k != planted) other = std::max(other, p.r2[k]);
  const double ratio = p.r2[planted] / other;

  const DimensionProfile again = dimension_profile(model, e);
  const auto diff = profile_difference(p, again);
  const bool zero = std::all_of(diff.begin(), diff.end(), [](double v) { return v == 0.0; });
  return {ratio >= 5.0 && zero,
          fmt("planted dim%zu r2 %.4f, largest other r2 %.2e, ratio %.0fx (need >= 5x); identical-model difference "
              "profile %s",
              planted, p.r2[planted], other, ratio, zero ? "exactly 0 for all 49 dimensions" : "NOT zero")};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> all = {
      {1, "loss gradients", loss_gradients},
      {2, "contrastive accounting", contrastive_accounting},
      {3, "statistical oracles", statistical_oracles},
      {4, "synthetic-teacher recovery", synthetic_recovery},
      {5, "RDM invariants", rdm_invariants},
      {6, "EEG decoding sanity", eeg_decoding_sanity},
      {7, "end-to-end determinism", end_to_end_determinism},
      {8, "dimension analysis ground truth", dimension_ground_truth},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
