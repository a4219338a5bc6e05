#ifndef SOFTQ_H
#define SOFTQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SoftqStatus {
  SOFTQ_STATUS_OK = 0,
  SOFTQ_STATUS_NULL_POINTER = 1,
  SOFTQ_STATUS_INVALID_ARGUMENT = 2,
  SOFTQ_STATUS_DIMENSION_MISMATCH = 3,
  SOFTQ_STATUS_PARSE = 4,
  SOFTQ_STATUS_NON_FINITE = 5,
  SOFTQ_STATUS_BUFFER_TOO_SMALL = 6,
  SOFTQ_STATUS_INTERNAL = 7,
} SoftqStatus;

/**
 * Soft model with every block replaced by its compiled circuit.
 */
typedef struct SoftqAlignedModel SoftqAlignedModel;

/**
 * Parameterized gate circuit.
 */
typedef struct SoftqCircuit SoftqCircuit;

/**
 * Trained soft-unitary model.
 */
typedef struct SoftqSoftModel SoftqSoftModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *softq_version(void);

/**
 * Copies the calling thread's last error message into `buf`. Returns the
 * length the message needs including the NUL; nothing is written when
 * `len` is too small.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t softq_last_error_message(char *buf, size_t len);

/**
 * New model with Haar-random blocks and the exponential RZ encoding.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum SoftqStatus softq_soft_model_random(size_t n_qubits,
                                         size_t n_blocks,
                                         uint64_t seed,
                                         struct SoftqSoftModel **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` valid for a pointer write.
 */
enum SoftqStatus softq_soft_model_from_json(const char *json, struct SoftqSoftModel **out);

/**
 * Writes the model's JSON and a NUL into `buf` when it fits; `needed`
 * receives the required size either way.
 *
 * # Safety
 * `model` must be a live handle; `buf` null or valid for `len` bytes;
 * `needed` null or valid for a write.
 */
enum SoftqStatus softq_soft_model_to_json(const struct SoftqSoftModel *model,
                                          char *buf,
                                          size_t len,
                                          size_t *needed);

/**
 * # Safety
 * `model` must be a live handle and `out` valid for a write.
 */
enum SoftqStatus softq_soft_model_forward(const struct SoftqSoftModel *model,
                                          double x,
                                          double *out);

/**
 * Largest `||U^dagger U - I||` over the blocks.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for a write.
 */
enum SoftqStatus softq_soft_model_unitarity_deviation(const struct SoftqSoftModel *model,
                                                      double *out);

/**
 * Trains a copy of `model` on `(xs[i], labels[i])` with the default
 * configuration except for the given epochs, learning rate, penalty
 * strength and seed; the result is a new handle.
 *
 * # Safety
 * `model` must be a live handle, `xs` and `labels` valid for `n` elements,
 * and `out` valid for a pointer write.
 */
enum SoftqStatus softq_soft_model_train(const struct SoftqSoftModel *model,
                                        const double *xs,
                                        const uint8_t *labels,
                                        size_t n,
                                        size_t epochs,
                                        double learning_rate,
                                        double lambda,
                                        uint64_t seed,
                                        struct SoftqSoftModel **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void softq_soft_model_free(struct SoftqSoftModel *model);

/**
 * Compiles every block of `model`; `layers_per_target == 0` selects the
 * default depth for the qubit count.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for a pointer write.
 */
enum SoftqStatus softq_align(const struct SoftqSoftModel *model,
                             size_t layers_per_target,
                             size_t epochs,
                             uint64_t seed,
                             struct SoftqAlignedModel **out);

/**
 * # Safety
 * `model` must be a live handle and `out` valid for a write.
 */
enum SoftqStatus softq_aligned_forward(const struct SoftqAlignedModel *model,
                                       double x,
                                       double *out);

/**
 * Normalized alignment loss of the compiled circuits.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for a write.
 */
enum SoftqStatus softq_aligned_loss(const struct SoftqAlignedModel *model, double *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void softq_aligned_free(struct SoftqAlignedModel *model);

/**
 * # Safety
 * `json` must be a NUL-terminated string; `out` valid for a pointer write.
 */
enum SoftqStatus softq_circuit_from_json(const char *json, struct SoftqCircuit **out);

/**
 * # Safety
 * `circuit` must be a live handle and `out` valid for a write.
 */
enum SoftqStatus softq_circuit_n_qubits(const struct SoftqCircuit *circuit, size_t *out);

/**
 * Runs the circuit on `|0...0>` and writes the `2^n` amplitudes as
 * separate real and imaginary arrays.
 *
 * # Safety
 * `circuit` must be a live handle, `params` valid for `n_params` values,
 * and `out_re`/`out_im` valid for `len` values each.
 */
enum SoftqStatus softq_circuit_run(const struct SoftqCircuit *circuit,
                                   const double *params,
                                   size_t n_params,
                                   double *out_re,
                                   double *out_im,
                                   size_t len);

/**
 * # Safety
 * `circuit` must be null or a handle not yet freed.
 */
void softq_circuit_free(struct SoftqCircuit *circuit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOFTQ_H */
