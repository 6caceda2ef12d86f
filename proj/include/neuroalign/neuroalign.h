/* C interface to the neuroalign library.
 *
 * Every function returns an na_status. On failure, na_last_error() returns a
 * message for the calling thread, valid until that thread's next call.
 * Handles are opaque and owned by the caller; release them with the matching
 * _free function. Matrices are dense, row-major double arrays.
 */
#ifndef NEUROALIGN_NEUROALIGN_H
#define NEUROALIGN_NEUROALIGN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NA_API __declspec(dllexport)
#else
#define NA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum na_status {
  NA_OK = 0,
  NA_ERR_INVALID_ARGUMENT = 1,
  NA_ERR_CONFIG = 2,
  NA_ERR_DATA = 3,
  NA_ERR_RUNTIME = 4
} na_status;

typedef enum na_correlation_method { NA_PEARSON = 0, NA_SPEARMAN = 1 } na_correlation_method;

typedef enum na_rdm_method {
  NA_RDM_ONE_MINUS_PEARSON = 0,
  NA_RDM_DECODING_ACCURACY = 1,
  NA_RDM_ABS_FEATURE_DIFF = 2
} na_rdm_method;

typedef struct na_rdm na_rdm;
typedef struct na_pca na_pca;
typedef struct na_model na_model;

NA_API const char* na_version(void);
NA_API const char* na_last_error(void);

/* Correlation of two length-n vectors (n >= 3, non-constant). */
NA_API na_status na_correlation(const double* x, const double* y, size_t n, na_correlation_method method,
                                double* out);

/* RDMs. Stimulus ids are optional (NULL gives "0", "1", ...). */
NA_API na_status na_rdm_from_patterns(const double* patterns, size_t n_stimuli, size_t n_features,
                                      const char* const* stimulus_ids, na_rdm** out);
NA_API na_status na_rdm_from_feature(const double* values, size_t n_stimuli, const char* const* stimulus_ids,
                                     na_rdm** out);
/* Wraps an existing n x n matrix after validating symmetry and diagonal. */
NA_API na_status na_rdm_from_matrix(const double* matrix, size_t n, na_rdm_method method,
                                    const char* const* stimulus_ids, na_rdm** out);
NA_API na_status na_rdm_size(const na_rdm* rdm, size_t* n);
/* Copies n * n values into out. */
NA_API na_status na_rdm_copy_matrix(const na_rdm* rdm, double* out, size_t capacity);
/* Spearman over the strict upper triangles. */
NA_API na_status na_rdm_compare(const na_rdm* a, const na_rdm* b, double* rho);
NA_API void na_rdm_free(na_rdm* rdm);

NA_API na_status na_partial_spearman(const na_rdm* target, const na_rdm* predictor, const na_rdm* const* controls,
                                     size_t n_controls, double* rho);

/* Writes the ratio into *ratio and sets *defined to 0 when baseline is 0. */
NA_API na_status na_improvement_ratio(double aligned_rho, double baseline_rho, double* ratio, int* defined);

/* PCA */
NA_API na_status na_pca_fit(const double* x, size_t n_samples, size_t n_features, size_t k, na_pca** out);
/* out receives n_samples * k values. */
NA_API na_status na_pca_apply(const na_pca* pca, const double* x, size_t n_samples, size_t n_features, double* out);
NA_API na_status na_pca_k(const na_pca* pca, size_t* k);
NA_API void na_pca_free(na_pca* pca);

/* Models: a checkpoint directory written by training. */
NA_API na_status na_model_load(const char* checkpoint_dir, na_model** out);
/* images: [n, 3, H, W] in [0, 1] at the model's input size. out receives four
 * RDM handles in V1, V2, V4, IT order. */
NA_API na_status na_model_rdms(const na_model* model, const double* images, size_t n_images, size_t height,
                               size_t width, na_rdm** out);
NA_API void na_model_free(na_model* model);

/* Command runner shared with the command-line tool. */
typedef struct na_run_options {
  const char* command;     /* train, eval-fmri, eval-eeg, dims, report, synth */
  const char* config_path; /* JSON config; may be NULL for report */
  const char* out_dir;
  int has_seed;
  uint64_t seed;
  int has_beta;
  double beta;
  const char* subject; /* NULL for all subjects */
  int overwrite;       /* replace an existing output directory */
} na_run_options;

/* Runs one command. On success, *run_dir (if non-NULL) receives the path of
 * the run directory; it stays valid until the thread's next call. */
NA_API na_status na_run(const na_run_options* options, const char** run_dir);

#ifdef __cplusplus
}
#endif

#endif /* NEUROALIGN_NEUROALIGN_H */
