#include "neuroalign/rsa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "neuroalign/error.hpp"
#include "neuroalign/nn.hpp"
#include "neuroalign/random.hpp"

namespace neuroalign {

std::string to_string(RdmMethod method) {
  switch (method) {
    case RdmMethod::one_minus_pearson: return "one_minus_pearson";
    case RdmMethod::decoding_accuracy: return "decoding_accuracy";
    case RdmMethod::abs_feature_diff: return "abs_feature_diff";
  }
  return "unknown";
}

RdmMethod parse_rdm_method(const std::string& name) {
  if (name == "one_minus_pearson") return RdmMethod::one_minus_pearson;
  if (name == "decoding_accuracy") return RdmMethod::decoding_accuracy;
  if (name == "abs_feature_diff") return RdmMethod::abs_feature_diff;
  throw InvalidArgument("unknown RDM method '" + name + "'");
}

void Rdm::validate(double symmetry_tolerance) const {
  const auto n = matrix.rows();
  if (matrix.cols() != n) throw ValidationError("RDM is not square");
  if (stimulus_ids.size() != static_cast<std::size_t>(n)) {
    throw ValidationError("RDM has " + std::to_string(n) + " rows but " +
                          std::to_string(stimulus_ids.size()) + " stimulus ids");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (matrix(i, i) != 0.0) throw ValidationError("RDM diagonal entry " + std::to_string(i) + " is not 0");
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (!std::isfinite(matrix(i, j)) || !std::isfinite(matrix(j, i))) {
        throw ValidationError("RDM has a non-finite entry at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
      if (std::abs(matrix(i, j) - matrix(j, i)) > symmetry_tolerance) {
        throw ValidationError("RDM is not symmetric at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
}

std::vector<double> Rdm::upper_triangle() const {
  const auto n = matrix.rows();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) out.push_back(matrix(i, j));
  }
  return out;
}

Rdm pattern_rdm(const RowMatrix& patterns, std::vector<std::string> stimulus_ids) {
  const auto n = patterns.rows();
  if (n < 3) throw InvalidArgument("an RDM needs at least 3 stimuli, got " + std::to_string(n));
  if (stimulus_ids.size() != static_cast<std::size_t>(n)) {
    throw InvalidArgument("pattern_rdm: " + std::to_string(n) + " patterns but " +
                          std::to_string(stimulus_ids.size()) + " stimulus ids");
  }
  if (patterns.cols() < 2) throw InvalidArgument("pattern_rdm: patterns need at least 2 features");
  RowMatrix z = patterns.colwise() - patterns.rowwise().mean();
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::span<const double> row(patterns.data() + i * patterns.cols(), patterns.cols());
    if (is_degenerate(row)) {
      throw InvalidArgument("zero-variance pattern for stimulus '" + stimulus_ids[i] + "'");
    }
    z.row(i) /= z.row(i).norm();
  }
  const RowMatrix gram = z * z.transpose();
  Rdm rdm;
  rdm.matrix = RowMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = 1.0 - std::clamp(gram(i, j), -1.0, 1.0);
      rdm.matrix(i, j) = d;
      rdm.matrix(j, i) = d;
    }
  }
  rdm.stimulus_ids = std::move(stimulus_ids);
  rdm.method = RdmMethod::one_minus_pearson;
  rdm.validate();
  return rdm;
}

Rdm neural_rdm(const NeuralResponseMatrix& responses) {
  responses.validate();
  return pattern_rdm(responses.data, responses.stimulus_ids);
}

LayerRdms activation_rdms(const LayerActivations& acts, const std::vector<std::string>& stimulus_ids) {
  LayerRdms out;
  for (std::size_t s = 0; s < kNumStages; ++s) out[s] = pattern_rdm(nn::flatten(acts.stages[s]), stimulus_ids);
  return out;
}

LayerRdms model_rdms(const Backbone& backbone, const Tensor& images,
                     const std::vector<std::string>& stimulus_ids, std::size_t batch_size) {
  return activation_rdms(forward_batched(backbone, images, batch_size), stimulus_ids);
}

double compare_rdms(const Rdm& a, const Rdm& b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("compare_rdms: sizes differ (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  if (a.stimulus_ids != b.stimulus_ids) throw InvalidArgument("compare_rdms: stimulus orderings differ");
  const auto ua = a.upper_triangle();
  const auto ub = b.upper_triangle();
  return spearman(ua, ub);
}

RoiSimilarity best_layer(const std::array<double, kNumStages>& layer_rho) {
  RoiSimilarity r;
  r.layer_rho = layer_rho;
  r.best_layer = 0;
  r.best_rho = layer_rho[0];
  for (std::size_t s = 1; s < kNumStages; ++s) {
    if (layer_rho[s] > r.best_rho) {
      r.best_rho = layer_rho[s];
      r.best_layer = s;
    }
  }
  return r;
}

RoiSimilarity roi_similarity(const LayerRdms& model, const Rdm& neural) {
  std::array<double, kNumStages> rho{};
  for (std::size_t s = 0; s < kNumStages; ++s) rho[s] = compare_rdms(model[s], neural);
  return best_layer(rho);
}

std::optional<double> improvement_ratio(double aligned_rho, double baseline_rho) {
  if (baseline_rho == 0.0 || !std::isfinite(baseline_rho) || !std::isfinite(aligned_rho)) return std::nullopt;
  return (aligned_rho - baseline_rho) / baseline_rho;
}

namespace {

double t_statistic(std::span<const double> d) {
  const double m = mean(d);
  const double se = standard_error(d);
  if (se == 0.0) return m == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), m);
  return m / se;
}

// Runs of consecutive supra-threshold timepoints of one sign; mass is the
// summed |t| of the run.
struct Cluster {
  std::size_t begin, end;
  double mass;
};

std::vector<Cluster> find_clusters(const std::vector<double>& t, double threshold) {
  std::vector<Cluster> out;
  std::size_t i = 0;
  while (i < t.size()) {
    if (std::abs(t[i]) <= threshold) {
      ++i;
      continue;
    }
    const bool positive = t[i] > 0;
    Cluster c{i, i, 0.0};
    while (i < t.size() && std::abs(t[i]) > threshold && (t[i] > 0) == positive) {
      c.mass += std::min(std::abs(t[i]), 1e300);
      ++i;
    }
    c.end = i;
    out.push_back(c);
  }
  return out;
}

}  // namespace

TemporalSimilarity temporal_similarity(const std::vector<LayerRdms>& models,
                                       const std::vector<std::vector<Rdm>>& eeg,
                                       const TemporalOptions& options) {
  TemporalSimilarity out;
  out.n_models = models.size();
  out.n_subjects = eeg.size();
  if (models.empty()) throw InvalidArgument("temporal_similarity: no models");
  if (eeg.empty()) throw InvalidArgument("temporal_similarity: no subjects");
  out.n_timepoints = eeg[0].size();
  for (const auto& s : eeg) {
    if (s.size() != out.n_timepoints) throw InvalidArgument("temporal_similarity: subjects differ in timepoint count");
  }
  // A timepoint where every pair decodes equally (e.g. all at ceiling) has no
  // rank information; its similarity is recorded as 0.
  std::vector<std::vector<bool>> constant(eeg.size(), std::vector<bool>(out.n_timepoints, false));
  for (std::size_t s = 0; s < eeg.size(); ++s) {
    for (std::size_t t = 0; t < out.n_timepoints; ++t) {
      constant[s][t] = is_degenerate(eeg[s][t].upper_triangle());
      out.n_constant_eeg_rdms += constant[s][t] ? 1 : 0;
    }
  }
  out.rho.resize(models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    out.rho[m].resize(eeg.size());
    for (std::size_t s = 0; s < eeg.size(); ++s) {
      for (std::size_t l = 0; l < kNumStages; ++l) {
        auto& curve = out.rho[m][s][l];
        curve.resize(out.n_timepoints);
        for (std::size_t t = 0; t < out.n_timepoints; ++t) {
          if (constant[s][t]) {
            curve[t] = 0.0;
            continue;
          }
          curve[t] = compare_rdms(models[m][l], eeg[s][t]);
        }
      }
    }
  }
  out.significance_enabled = eeg.size() >= 3;
  if (!out.significance_enabled) return out;

  const std::size_t n_sub = eeg.size();
  const std::size_t df = n_sub - 1;
  for (std::size_t a = 0; a < models.size(); ++a) {
    for (std::size_t b = a + 1; b < models.size(); ++b) {
      TemporalComparison cmp;
      cmp.model_a = a;
      cmp.model_b = b;
      for (std::size_t l = 0; l < kNumStages; ++l) {
        std::vector<std::vector<double>> diffs(out.n_timepoints, std::vector<double>(n_sub));
        cmp.t[l].resize(out.n_timepoints);
        cmp.p[l].resize(out.n_timepoints);
        cmp.significant[l].assign(out.n_timepoints, false);
        for (std::size_t t = 0; t < out.n_timepoints; ++t) {
          std::vector<double> xa(n_sub), xb(n_sub);
          for (std::size_t s = 0; s < n_sub; ++s) {
            xa[s] = out.rho[a][s][l][t];
            xb[s] = out.rho[b][s][l][t];
            diffs[t][s] = xa[s] - xb[s];
          }
          const TTestResult r = paired_t_test(xa, xb);
          cmp.t[l][t] = r.t;
          cmp.p[l][t] = r.p;
          if (!options.cluster_correction) cmp.significant[l][t] = r.p < options.alpha;
        }
        if (!options.cluster_correction) continue;

        // Cluster-forming threshold: the two-sided critical t at alpha.
        const boost::math::students_t dist(static_cast<double>(df));
        const double threshold = boost::math::quantile(boost::math::complement(dist, options.alpha / 2.0));
        const auto observed = find_clusters(cmp.t[l], threshold);
        if (observed.empty()) continue;
        Rng rng(derive_seed(options.seed, {a, b, l}));
        std::bernoulli_distribution coin(0.5);
        std::vector<double> null_max(options.n_permutations, 0.0);
        std::vector<double> tp(out.n_timepoints);
        for (std::size_t k = 0; k < options.n_permutations; ++k) {
          std::vector<double> sign(n_sub);
          for (auto& sg : sign) sg = coin(rng) ? 1.0 : -1.0;
          for (std::size_t t = 0; t < out.n_timepoints; ++t) {
            std::vector<double> d(n_sub);
            for (std::size_t s = 0; s < n_sub; ++s) d[s] = sign[s] * diffs[t][s];
            tp[t] = t_statistic(d);
          }
          for (const auto& c : find_clusters(tp, threshold)) null_max[k] = std::max(null_max[k], c.mass);
        }
        for (const auto& c : observed) {
          std::size_t exceed = 0;
          for (double v : null_max) exceed += v >= c.mass ? 1 : 0;
          const double p = static_cast<double>(exceed + 1) / static_cast<double>(options.n_permutations + 1);
          for (std::size_t t = c.begin; t < c.end; ++t) {
            cmp.p[l][t] = p;
            cmp.significant[l][t] = p < options.alpha;
          }
        }
      }
      out.comparisons.push_back(std::move(cmp));
    }
  }
  return out;
}

}  // namespace neuroalign
