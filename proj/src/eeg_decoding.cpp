#include "neuroalign/eeg_decoding.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "neuroalign/error.hpp"
#include "neuroalign/random.hpp"

namespace neuroalign {

using nlohmann::json;

std::string to_string(Classifier classifier) {
  return classifier == Classifier::linear_discriminant ? "linear_discriminant" : "linear_svm";
}

Classifier parse_classifier(const std::string& name) {
  if (name == "linear_discriminant" || name == "lda") return Classifier::linear_discriminant;
  if (name == "linear_svm" || name == "svm") return Classifier::linear_svm;
  throw ConfigError("classifier: expected 'linear_discriminant' or 'linear_svm', got '" + name + "'");
}

void DecodingConfig::validate() const {
  if (n_folds < 2) throw ConfigError("n_folds: must be >= 2");
  if (k_pseudo_trials < n_folds) throw ConfigError("k_pseudo_trials: must be >= n_folds");
  if (!(svm_c > 0.0)) throw ConfigError("svm_c: must be positive");
  if (svm_max_epochs < 1) throw ConfigError("svm_max_epochs: must be >= 1");
}

json DecodingConfig::to_json() const {
  return {{"k_pseudo_trials", k_pseudo_trials}, {"n_folds", n_folds}, {"classifier", to_string(classifier)},
          {"seed", seed},        {"svm_c", svm_c},      {"svm_max_epochs", svm_max_epochs}};
}

DecodingConfig DecodingConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("decoding config: expected a JSON object");
  static const std::set<std::string> known = {"k_pseudo_trials", "n_folds", "classifier", "seed", "svm_c",
                                              "svm_max_epochs"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("decoding." + key + ": unknown field");
  }
  DecodingConfig c;
  try {
    if (j.contains("k_pseudo_trials")) c.k_pseudo_trials = j["k_pseudo_trials"].get<std::size_t>();
    if (j.contains("n_folds")) c.n_folds = j["n_folds"].get<std::size_t>();
    if (j.contains("classifier")) c.classifier = parse_classifier(j["classifier"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("svm_c")) c.svm_c = j["svm_c"].get<double>();
    if (j.contains("svm_max_epochs")) c.svm_max_epochs = j["svm_max_epochs"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("decoding: wrong field type: ") + e.what());
  }
  c.validate();
  return c;
}

double ledoit_wolf_shrinkage(const RowMatrix& x) {
  const double n = static_cast<double>(x.rows());
  const auto p = x.cols();
  const RowMatrix s = x.transpose() * x / n;
  const double mu = s.trace() / static_cast<double>(p);
  RowMatrix target = s;
  target.diagonal().array() -= mu;
  const double d2 = target.squaredNorm();
  if (d2 <= 0.0) return 1.0;
  double b2 = 0.0;
  for (Eigen::Index k = 0; k < x.rows(); ++k) {
    const Vector xk = x.row(k).transpose();
    b2 += (xk * xk.transpose() - s).squaredNorm();
  }
  b2 /= n * n;
  return std::min(b2, d2) / d2;
}

LinearModel fit_lda(const RowMatrix& class0, const RowMatrix& class1) {
  if (class0.cols() != class1.cols()) throw InvalidArgument("fit_lda: feature counts differ");
  if (class0.rows() < 1 || class1.rows() < 1) throw InvalidArgument("fit_lda: empty class");
  const Vector m0 = class0.colwise().mean().transpose();
  const Vector m1 = class1.colwise().mean().transpose();
  const auto p = class0.cols();
  RowMatrix centered(class0.rows() + class1.rows(), p);
  centered.topRows(class0.rows()) = class0.rowwise() - m0.transpose();
  centered.bottomRows(class1.rows()) = class1.rowwise() - m1.transpose();
  const double shrink = ledoit_wolf_shrinkage(centered);
  RowMatrix cov = centered.transpose() * centered / static_cast<double>(centered.rows());
  const double mu = cov.trace() / static_cast<double>(p);
  cov *= (1.0 - shrink);
  cov.diagonal().array() += shrink * mu;
  if (!(mu > 0.0)) cov = RowMatrix::Identity(p, p);
  LinearModel model;
  model.w = cov.ldlt().solve(m1 - m0);
  model.b = -model.w.dot(0.5 * (m0 + m1));
  return model;
}

LinearModel fit_linear_svm(const RowMatrix& class0, const RowMatrix& class1, double c,
                           std::size_t max_epochs, std::uint64_t seed) {
  if (class0.cols() != class1.cols()) throw InvalidArgument("fit_linear_svm: feature counts differ");
  const auto p = class0.cols();
  const Eigen::Index n = class0.rows() + class1.rows();
  RowMatrix x(n, p + 1);
  Vector y(n);
  x.topLeftCorner(class0.rows(), p) = class0;
  x.bottomLeftCorner(class1.rows(), p) = class1;
  // Centered features keep the regularized bias near 0.
  const Eigen::RowVectorXd center = x.leftCols(p).colwise().mean();
  x.leftCols(p).rowwise() -= center;
  x.col(p).setOnes();
  y.head(class0.rows()).setConstant(-1.0);
  y.tail(class1.rows()).setConstant(1.0);
  Vector w = Vector::Zero(p + 1);
  Vector alpha = Vector::Zero(n);
  Vector qii(n);
  for (Eigen::Index i = 0; i < n; ++i) qii(i) = x.row(i).squaredNorm();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  for (std::size_t epoch = 0; epoch < max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double max_change = 0.0;
    for (Eigen::Index i : order) {
      if (qii(i) <= 0.0) continue;
      const double g = y(i) * x.row(i).dot(w) - 1.0;
      const double old = alpha(i);
      const double updated = std::clamp(old - g / qii(i), 0.0, c);
      const double delta = updated - old;
      if (delta != 0.0) {
        alpha(i) = updated;
        w += delta * y(i) * x.row(i).transpose();
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    if (max_change < 1e-10) break;
  }
  LinearModel model;
  model.w = w.head(p);
  model.b = w(p) - center.dot(model.w);
  return model;
}

double pairwise_decode(const RowMatrix& a, const RowMatrix& b, const DecodingConfig& config, std::uint64_t seed) {
  config.validate();
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument("pairwise_decode: conditions must have the same shape");
  }
  const std::size_t k = static_cast<std::size_t>(a.rows());
  if (k < config.n_folds) {
    throw InvalidArgument("pairwise_decode: " + std::to_string(k) + " pseudo-trials for " +
                          std::to_string(config.n_folds) + " folds");
  }
  std::vector<std::size_t> positions(k);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(positions.begin(), positions.end(), rng);
  std::vector<std::size_t> fold_of(k);
  for (std::size_t r = 0; r < k; ++r) fold_of[positions[r]] = r % config.n_folds;

  std::size_t correct = 0, total = 0;
  for (std::size_t f = 0; f < config.n_folds; ++f) {
    std::vector<Eigen::Index> train_rows, test_rows;
    for (std::size_t r = 0; r < k; ++r) (fold_of[r] == f ? test_rows : train_rows).push_back(static_cast<Eigen::Index>(r));
    const RowMatrix tr0 = a(train_rows, Eigen::all);
    const RowMatrix tr1 = b(train_rows, Eigen::all);
    const LinearModel model = config.classifier == Classifier::linear_discriminant
                                  ? fit_lda(tr0, tr1)
                                  : fit_linear_svm(tr0, tr1, config.svm_c, config.svm_max_epochs,
                                                   derive_seed(seed, {f}));
    for (Eigen::Index r : test_rows) {
      correct += model.predict(a.row(r).transpose()) == 0 ? 1 : 0;
      correct += model.predict(b.row(r).transpose()) == 1 ? 1 : 0;
      total += 2;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<Rdm> build_eeg_rdms(const Tensor& pseudo, const std::vector<std::string>& stimulus_ids,
                                const DecodingConfig& config) {
  config.validate();
  if (pseudo.rank() != 4) throw InvalidArgument("build_eeg_rdms: expected [n_stimuli, k, C, T]");
  const std::size_t n = pseudo.dim(0), k = pseudo.dim(1), c = pseudo.dim(2), t_count = pseudo.dim(3);
  if (stimulus_ids.size() != n) throw InvalidArgument("build_eeg_rdms: stimulus id count mismatch");
  if (n < 3) throw InvalidArgument("build_eeg_rdms: need at least 3 stimuli");
  // features[t][i] is k x C for stimulus i at timepoint t.
  std::vector<std::vector<RowMatrix>> features(t_count, std::vector<RowMatrix>(n, RowMatrix(k, c)));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t t = 0; t < t_count; ++t)
          features[t][i](r, ch) = pseudo[((i * k + r) * c + ch) * t_count + t];
  std::vector<Rdm> out(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    Rdm& rdm = out[t];
    rdm.matrix = RowMatrix::Zero(n, n);
    rdm.stimulus_ids = stimulus_ids;
    rdm.method = RdmMethod::decoding_accuracy;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double acc = pairwise_decode(features[t][i], features[t][j], config, derive_seed(config.seed, {i, j, t}));
        rdm.matrix(i, j) = acc;
        rdm.matrix(j, i) = acc;
      }
    }
    rdm.validate();
  }
  return out;
}

std::vector<Rdm> build_eeg_rdms(const EEGEpochs& epochs, const DecodingConfig& config) {
  config.validate();
  epochs.validate();
  if (epochs.n_repetitions() < config.k_pseudo_trials) {
    throw InvalidArgument("subject '" + epochs.subject_id + "' has " + std::to_string(epochs.n_repetitions()) +
                          " repetitions, fewer than k_pseudo_trials = " + std::to_string(config.k_pseudo_trials));
  }
  const Tensor pseudo = pseudo_trial_average(epochs.data, config.k_pseudo_trials, derive_seed(config.seed, {0x9e3u}));
  return build_eeg_rdms(pseudo, epochs.stimulus_ids, config);
}

}  // namespace neuroalign
