#include "neuroalign/neuroalign.h"

#include <exception>
#include <new>
#include <string>
#include <vector>

#include "neuroalign/checkpoint.hpp"
#include "neuroalign/dimension_analysis.hpp"
#include "neuroalign/preprocessing.hpp"
#include "neuroalign/rsa.hpp"
#include "neuroalign/run.hpp"
#include "neuroalign/stats.hpp"
#include "neuroalign/version.hpp"

struct na_rdm {
  neuroalign::Rdm rdm;
};

struct na_pca {
  neuroalign::PCAModel model;
};

struct na_model {
  neuroalign::Backbone backbone;
};

namespace {

using neuroalign::ErrorKind;

thread_local std::string g_last_error;
thread_local std::string g_run_dir;

na_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return NA_ERR_INVALID_ARGUMENT;
    case ErrorKind::Config: return NA_ERR_CONFIG;
    case ErrorKind::Data: return NA_ERR_DATA;
    case ErrorKind::Runtime: return NA_ERR_RUNTIME;
  }
  return NA_ERR_RUNTIME;
}

na_status fail(na_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <typename F>
na_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return NA_OK;
  } catch (const neuroalign::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(NA_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(NA_ERR_RUNTIME, e.what());
  }
}

void require(bool ok, const char* message) {
  if (!ok) throw neuroalign::InvalidArgument(message);
}

std::vector<std::string> ids_of(const char* const* ids, std::size_t n) {
  std::vector<std::string> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (ids) {
      require(ids[i] != nullptr, "stimulus id is NULL");
      out[i] = ids[i];
    } else {
      out[i] = std::to_string(i);
    }
  }
  return out;
}

neuroalign::RowMatrix matrix_of(const double* data, std::size_t rows, std::size_t cols) {
  return Eigen::Map<const neuroalign::RowMatrix>(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace

extern "C" {

const char* na_version(void) { return neuroalign::kVersion; }

const char* na_last_error(void) { return g_last_error.c_str(); }

na_status na_correlation(const double* x, const double* y, size_t n, na_correlation_method method, double* out) {
  return guarded([&] {
    require(x && y && out, "NULL pointer argument");
    require(method == NA_PEARSON || method == NA_SPEARMAN, "unknown correlation method");
    *out = neuroalign::correlation({x, n}, {y, n},
                                   method == NA_PEARSON ? neuroalign::CorrelationMethod::pearson
                                                        : neuroalign::CorrelationMethod::spearman);
  });
}

na_status na_rdm_from_patterns(const double* patterns, size_t n_stimuli, size_t n_features,
                               const char* const* stimulus_ids, na_rdm** out) {
  return guarded([&] {
    require(patterns && out, "NULL pointer argument");
    auto* h = new na_rdm{neuroalign::pattern_rdm(matrix_of(patterns, n_stimuli, n_features), ids_of(stimulus_ids, n_stimuli))};
    *out = h;
  });
}

na_status na_rdm_from_feature(const double* values, size_t n_stimuli, const char* const* stimulus_ids, na_rdm** out) {
  return guarded([&] {
    require(values && out, "NULL pointer argument");
    *out = new na_rdm{neuroalign::feature_rdm({values, n_stimuli}, ids_of(stimulus_ids, n_stimuli))};
  });
}

na_status na_rdm_from_matrix(const double* matrix, size_t n, na_rdm_method method, const char* const* stimulus_ids,
                             na_rdm** out) {
  return guarded([&] {
    require(matrix && out, "NULL pointer argument");
    neuroalign::Rdm r;
    r.matrix = matrix_of(matrix, n, n);
    r.stimulus_ids = ids_of(stimulus_ids, n);
    switch (method) {
      case NA_RDM_ONE_MINUS_PEARSON: r.method = neuroalign::RdmMethod::one_minus_pearson; break;
      case NA_RDM_DECODING_ACCURACY: r.method = neuroalign::RdmMethod::decoding_accuracy; break;
      case NA_RDM_ABS_FEATURE_DIFF: r.method = neuroalign::RdmMethod::abs_feature_diff; break;
      default: throw neuroalign::InvalidArgument("unknown RDM method");
    }
    try {
      r.validate();
    } catch (const neuroalign::ValidationError& e) {
      throw neuroalign::InvalidArgument(e.what());
    }
    *out = new na_rdm{std::move(r)};
  });
}

na_status na_rdm_size(const na_rdm* rdm, size_t* n) {
  return guarded([&] {
    require(rdm && n, "NULL pointer argument");
    *n = rdm->rdm.size();
  });
}

na_status na_rdm_copy_matrix(const na_rdm* rdm, double* out, size_t capacity) {
  return guarded([&] {
    require(rdm && out, "NULL pointer argument");
    const std::size_t n = rdm->rdm.size();
    require(capacity >= n * n, "output buffer too small");
    Eigen::Map<neuroalign::RowMatrix>(out, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) = rdm->rdm.matrix;
  });
}

na_status na_rdm_compare(const na_rdm* a, const na_rdm* b, double* rho) {
  return guarded([&] {
    require(a && b && rho, "NULL pointer argument");
    *rho = neuroalign::compare_rdms(a->rdm, b->rdm);
  });
}

void na_rdm_free(na_rdm* rdm) { delete rdm; }

na_status na_partial_spearman(const na_rdm* target, const na_rdm* predictor, const na_rdm* const* controls,
                              size_t n_controls, double* rho) {
  return guarded([&] {
    require(target && predictor && rho, "NULL pointer argument");
    require(n_controls == 0 || controls, "controls is NULL");
    std::vector<neuroalign::Rdm> c;
    for (std::size_t i = 0; i < n_controls; ++i) {
      require(controls[i] != nullptr, "control RDM is NULL");
      c.push_back(controls[i]->rdm);
    }
    *rho = neuroalign::partial_spearman(target->rdm, predictor->rdm, c).rho;
  });
}

na_status na_improvement_ratio(double aligned_rho, double baseline_rho, double* ratio, int* defined) {
  return guarded([&] {
    require(ratio && defined, "NULL pointer argument");
    const auto r = neuroalign::improvement_ratio(aligned_rho, baseline_rho);
    *defined = r ? 1 : 0;
    *ratio = r ? *r : 0.0;
  });
}

na_status na_pca_fit(const double* x, size_t n_samples, size_t n_features, size_t k, na_pca** out) {
  return guarded([&] {
    require(x && out, "NULL pointer argument");
    *out = new na_pca{neuroalign::fit_pca(matrix_of(x, n_samples, n_features), k)};
  });
}

na_status na_pca_apply(const na_pca* pca, const double* x, size_t n_samples, size_t n_features, double* out) {
  return guarded([&] {
    require(pca && x && out, "NULL pointer argument");
    require(n_features == pca->model.n_features(), "feature count does not match the fitted PCA");
    const neuroalign::RowMatrix y = neuroalign::apply_pca(pca->model, matrix_of(x, n_samples, n_features));
    Eigen::Map<neuroalign::RowMatrix>(out, y.rows(), y.cols()) = y;
  });
}

na_status na_pca_k(const na_pca* pca, size_t* k) {
  return guarded([&] {
    require(pca && k, "NULL pointer argument");
    *k = pca->model.k();
  });
}

void na_pca_free(na_pca* pca) { delete pca; }

na_status na_model_load(const char* checkpoint_dir, na_model** out) {
  return guarded([&] {
    require(checkpoint_dir && out, "NULL pointer argument");
    *out = new na_model{neuroalign::load_checkpoint(checkpoint_dir).backbone};
  });
}

na_status na_model_rdms(const na_model* model, const double* images, size_t n_images, size_t height, size_t width,
                        na_rdm** out) {
  return guarded([&] {
    require(model && images && out, "NULL pointer argument");
    const auto& spec = model->backbone.spec();
    require(height == spec.input_height && width == spec.input_width, "image size does not match the model input");
    neuroalign::Tensor t({n_images, 3, height, width},
                         std::vector<double>(images, images + n_images * 3 * height * width));
    const auto rdms = neuroalign::model_rdms(model->backbone, t, ids_of(nullptr, n_images), 64);
    na_rdm* made[neuroalign::kNumStages] = {};
    try {
      for (std::size_t s = 0; s < neuroalign::kNumStages; ++s) made[s] = new na_rdm{rdms[s]};
    } catch (...) {
      for (auto* p : made) delete p;
      throw;
    }
    for (std::size_t s = 0; s < neuroalign::kNumStages; ++s) out[s] = made[s];
  });
}

void na_model_free(na_model* model) { delete model; }

na_status na_run(const na_run_options* options, const char** run_dir) {
  if (!options || !options->command || !options->out_dir) {
    return fail(NA_ERR_INVALID_ARGUMENT, "options, command and out_dir are required");
  }
  try {
    g_last_error.clear();
    neuroalign::RunSpec spec;
    spec.command = options->command;
    if (options->config_path) spec.config_path = options->config_path;
    spec.output_dir = options->out_dir;
    if (options->has_seed) spec.seed = options->seed;
    if (options->has_beta) spec.beta = options->beta;
    if (options->subject) spec.subject = options->subject;
    spec.overwrite = options->overwrite != 0;
    g_run_dir = neuroalign::run(spec).run_dir.string();
    if (run_dir) *run_dir = g_run_dir.c_str();
    return NA_OK;
  } catch (const neuroalign::Error& e) {
    return fail(static_cast<na_status>(neuroalign::exit_code(e.kind())), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(NA_ERR_RUNTIME, e.what());
  } catch (const std::bad_alloc&) {
    return fail(NA_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(NA_ERR_RUNTIME, e.what());
  }
}

}  // extern "C"
