#ifndef MARGINFLOW_H
#define MARGINFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum MfStatus {
  MF_STATUS_OK = 0,
  MF_STATUS_NULL_POINTER = 1,
  MF_STATUS_INVALID_ARGUMENT = 2,
  MF_STATUS_DIMENSION_MISMATCH = 3,
  // Training data unusable: one class, empty class, degenerate set.
  MF_STATUS_BAD_DATA = 4,
  MF_STATUS_NOT_CONVERGED = 5,
  // Kappa undefined or a decision scheme the model cannot run.
  MF_STATUS_UNDEFINED = 6,
  MF_STATUS_IO = 7,
  MF_STATUS_PARSE = 8,
  MF_STATUS_PANIC = 9,
} MfStatus;

typedef enum MfScheme {
  // The scheme the model was trained or saved with.
  MF_SCHEME_DEFAULT = 0,
  MF_SCHEME_VOTING = 1,
  MF_SCHEME_DDAG = 2,
  MF_SCHEME_ONE_VS_ALL = 3,
} MfScheme;

typedef enum MfInit {
  MF_INIT_UNIFORM = 0,
  MF_INIT_NGUYEN_WIDROW = 1,
} MfInit;

typedef struct MfBinarySvm MfBinarySvm;

typedef struct MfMlp MfMlp;

typedef struct MfMulticlassSvm MfMulticlassSvm;

typedef struct MfKappa {
  double kappa;
  double variance;
  double ci95;
  double p_observed;
  double p_chance;
  uint64_t n;
} MfKappa;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *mf_last_error(void);

void mf_clear_error(void);

// Library version as a static NUL-terminated string.
const char *mf_version(void);

// Evaluates a kernel given in text form (`linear`, `poly:3:1`, `gauss:0.5`).
//
// # Safety
// `spec` is a NUL-terminated string; `x` and `z` point to `dim` doubles.
enum MfStatus mf_kernel_eval(const char *spec,
                             const double *x,
                             const double *z,
                             size_t dim,
                             double *out);

// Trains a binary SVM on labels in {-1, +1}. `kernel` accepts `gauss:auto`.
//
// # Safety
// `samples` holds `n * dim` doubles, `labels` holds `n` ints, `out` is writable.
enum MfStatus mf_svm_train(const double *samples,
                           const int32_t *labels,
                           size_t n,
                           size_t dim,
                           const char *kernel,
                           double c_reg,
                           uint64_t seed,
                           struct MfBinarySvm **out);

// Raw decision value `f(x)`.
//
// # Safety
// `model` is a live handle, `x` holds `dim` doubles.
enum MfStatus mf_svm_output(const struct MfBinarySvm *model,
                            const double *x,
                            size_t dim,
                            double *out);

// Label in {-1, +1}.
//
// # Safety
// `model` is a live handle, `x` holds `dim` doubles.
enum MfStatus mf_svm_decide(const struct MfBinarySvm *model,
                            const double *x,
                            size_t dim,
                            int32_t *out);

// # Safety
// `model` is a live handle or NULL.
size_t mf_svm_support_vector_count(const struct MfBinarySvm *model);

// # Safety
// `model` is a live handle, `path` a NUL-terminated string.
enum MfStatus mf_svm_save(const struct MfBinarySvm *model, const char *path);

// # Safety
// `path` is a NUL-terminated string, `out` is writable.
enum MfStatus mf_svm_load(const char *path, struct MfBinarySvm **out);

// # Safety
// `model` came from this library and is not used afterwards. NULL is ignored.
void mf_svm_free(struct MfBinarySvm *model);

// Trains a bank on labels `0..classes`. `scheme` picks one-vs-all
// (`MF_SCHEME_ONE_VS_ALL`) or pairwise machines with the given default.
//
// # Safety
// `samples` holds `n * dim` doubles, `labels` holds `n` values, `out` is writable.
enum MfStatus mf_bank_train(const double *samples,
                            const size_t *labels,
                            size_t n,
                            size_t dim,
                            size_t classes,
                            const char *kernel,
                            double c_reg,
                            enum MfScheme scheme,
                            uint64_t seed,
                            struct MfMulticlassSvm **out);

// Decides the class of `x`. `machine_evaluations` may be NULL.
//
// # Safety
// `model` is a live handle, `x` holds `dim` doubles.
enum MfStatus mf_bank_decide(const struct MfMulticlassSvm *model,
                             const double *x,
                             size_t dim,
                             enum MfScheme scheme,
                             size_t *class_out,
                             size_t *machine_evaluations);

// # Safety
// `model` is a live handle or NULL.
size_t mf_bank_class_count(const struct MfMulticlassSvm *model);

// # Safety
// `model` is a live handle or NULL.
size_t mf_bank_unique_support_vectors(const struct MfMulticlassSvm *model);

// Writes the bank as a directory of machine files.
//
// # Safety
// `model` is a live handle, `dir` a NUL-terminated string.
enum MfStatus mf_bank_save(const struct MfMulticlassSvm *model, const char *dir);

// # Safety
// `dir` is a NUL-terminated string, `out` is writable.
enum MfStatus mf_bank_load(const char *dir, struct MfMulticlassSvm **out);

// # Safety
// `model` came from this library and is not used afterwards. NULL is ignored.
void mf_bank_free(struct MfMulticlassSvm *model);

// Trains a sigmoid `dim-hidden-classes` network with Rprop on softened
// one-of-c targets for labels `0..classes`.
//
// # Safety
// `samples` holds `n * dim` doubles, `labels` holds `n` values, `out` is writable.
enum MfStatus mf_mlp_train(const double *samples,
                           const size_t *labels,
                           size_t n,
                           size_t dim,
                           size_t classes,
                           size_t hidden,
                           enum MfInit init,
                           size_t max_epochs,
                           uint64_t seed,
                           struct MfMlp **out);

// Writes the `out_len` network outputs for `x`.
//
// # Safety
// `model` is a live handle, `x` holds `dim` doubles, `out` holds `out_len`.
enum MfStatus mf_mlp_forward(const struct MfMlp *model,
                             const double *x,
                             size_t dim,
                             double *out,
                             size_t out_len);

// Index of the largest output.
//
// # Safety
// `model` is a live handle, `x` holds `dim` doubles.
enum MfStatus mf_mlp_classify(const struct MfMlp *model,
                              const double *x,
                              size_t dim,
                              size_t *class_out);

// Writes input, hidden and output sizes; any pointer may be NULL.
//
// # Safety
// `model` is a live handle.
enum MfStatus mf_mlp_dims(const struct MfMlp *model,
                          size_t *inputs,
                          size_t *hidden,
                          size_t *outputs);

// # Safety
// `model` is a live handle, `path` a NUL-terminated string.
enum MfStatus mf_mlp_save(const struct MfMlp *model, const char *path);

// # Safety
// `path` is a NUL-terminated string, `out` is writable.
enum MfStatus mf_mlp_load(const char *path, struct MfMlp **out);

// # Safety
// `model` came from this library and is not used afterwards. NULL is ignored.
void mf_mlp_free(struct MfMlp *model);

// Cohen's kappa of a row-major `classes × classes` confusion matrix
// (rows = truth, columns = prediction).
//
// # Safety
// `counts` holds `classes * classes` values, `out` is writable.
enum MfStatus mf_kappa(const uint64_t *counts, size_t classes, struct MfKappa *out);

// Two-sided z-test between two independent kappa estimates.
//
// # Safety
// `z_out` is writable; `significant_out` is writable or NULL.
enum MfStatus mf_kappa_z_test(double kappa1,
                              double variance1,
                              double kappa2,
                              double variance2,
                              double alpha,
                              double *z_out,
                              bool *significant_out);

// Otsu threshold of an 8-bit image; foreground pixels are those `> threshold`.
//
// # Safety
// `pixels` holds `width * height` bytes, row-major.
enum MfStatus mf_otsu_threshold(const uint8_t *pixels, size_t width, size_t height, uint8_t *out);

// Threshold, crop, resize to 32×32 and write the 1024 features to `out`.
// `invert` selects a foreground darker than the background.
//
// # Safety
// `pixels` holds `width * height` bytes, `out` holds `out_len` doubles.
enum MfStatus mf_preprocess_image(const uint8_t *pixels,
                                  size_t width,
                                  size_t height,
                                  bool invert,
                                  double *out,
                                  size_t out_len);

// Number of features produced by [`mf_preprocess_image`].
size_t mf_vector_len(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MARGINFLOW_H */
