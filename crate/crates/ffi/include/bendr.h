#ifndef BENDR_H
#define BENDR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BendrStatus {
  BENDR_STATUS_OK = 0,
  BENDR_STATUS_NULL_POINTER = 1,
  BENDR_STATUS_INVALID_INPUT = 2,
  BENDR_STATUS_SHAPE = 3,
  BENDR_STATUS_TOO_SHORT = 4,
  BENDR_STATUS_NUMERICAL = 5,
  BENDR_STATUS_CONFIG = 6,
  BENDR_STATUS_CHECKPOINT = 7,
  BENDR_STATUS_IO = 8,
  BENDR_STATUS_BUFFER_TOO_SMALL = 9,
  BENDR_STATUS_PANIC = 10,
} BendrStatus;

// Opaque model handle.
typedef struct BendrModel BendrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call on the same thread.
const char *bendr_last_error(void);

// Library version as a static NUL-terminated string.
const char *bendr_version(void);

// Number of input channels every sequence must have.
size_t bendr_input_channels(void);

// Creates a randomly initialized model. `desk` selects the small
// configuration instead of the full-size one.
enum BendrStatus bendr_model_new(bool desk, uint64_t seed, struct BendrModel **out);

// Loads a model from a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum BendrStatus bendr_model_load(const char *path, struct BendrModel **out);

// Writes the model's parameters to a checkpoint file.
//
// # Safety
// `model` must come from a `bendr_model_*` constructor and `path` must be
// a NUL-terminated string.
enum BendrStatus bendr_model_save(const struct BendrModel *model, const char *path);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from a `bendr_model_*` constructor and not be used
// afterwards.
void bendr_model_free(struct BendrModel *model);

// Dimension of the encoder's output vectors.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum BendrStatus bendr_model_dim(const struct BendrModel *model, size_t *out);

// Number of encoder output vectors for `samples` input samples (0 when the
// input is too short).
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum BendrStatus bendr_encoded_len(const struct BendrModel *model, size_t samples, size_t *out);

// Encodes a `[20 × len]` sequence into `[dim × T]` vectors written to `out`.
// `out_len` receives `dim · T`; if `out_capacity` is smaller the call fails
// with `BUFFER_TOO_SMALL` and nothing is written.
//
// # Safety
// `data` must hold `20 · len` values, `out` must hold `out_capacity`
// values, and `out_len` must be a valid pointer.
enum BendrStatus bendr_encode(const struct BendrModel *model,
                              const double *data,
                              size_t len,
                              double *out,
                              size_t out_capacity,
                              size_t *out_len);

// Masked contrastive accuracy of one `[20 × len]` sequence under the
// evenly spaced evaluation mask.
//
// # Safety
// `data` must hold `20 · len` values and `out` must be a valid pointer.
enum BendrStatus bendr_contrastive_accuracy(const struct BendrModel *model,
                                            const double *data,
                                            size_t len,
                                            double *out);

// AUROC of `scores` against binary `labels` (non-zero is positive).
//
// # Safety
// `scores` and `labels` must each hold `n` values; `out` must be valid.
enum BendrStatus bendr_auroc(const double *scores, const uint8_t *labels, size_t n, double *out);

// Balanced accuracy of predicted class indices against labels.
//
// # Safety
// `preds` and `labels` must each hold `n` values; `out` must be valid.
enum BendrStatus bendr_balanced_accuracy(const uint32_t *preds,
                                         const uint32_t *labels,
                                         size_t n,
                                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BENDR_H */
