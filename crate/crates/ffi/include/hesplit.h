#ifndef HESPLIT_H
#define HESPLIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum HsStatus {
  HS_STATUS_OK = 0,
  HS_STATUS_NULL_POINTER = 1,
  HS_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Caller buffer too small; the needed length was written back.
   */
  HS_STATUS_BUFFER_TOO_SMALL = 3,
  HS_STATUS_PARAMS = 10,
  HS_STATUS_CAPACITY = 11,
  HS_STATUS_CAPABILITY = 12,
  HS_STATUS_DEPTH = 13,
  HS_STATUS_ALIGNMENT = 14,
  HS_STATUS_SERIALIZE = 15,
  HS_STATUS_SHAPE = 16,
  HS_STATUS_MODEL = 20,
  HS_STATUS_PANIC = 99,
} HsStatus;

typedef struct HsCiphertext HsCiphertext;

/**
 * Client conv layers plus server head, with seeded weights.
 */
typedef struct HsModel HsModel;

/**
 * Evaluation-only CKKS context (public and Galois keys).
 */
typedef struct HsPublicContext HsPublicContext;

/**
 * Secret-key CKKS context: encrypts, decrypts and evaluates.
 */
typedef struct HsSecretContext HsSecretContext;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message as a NUL-terminated
 * string and returns its length without the NUL. Pass `cap == 0` to query.
 *
 * # Safety
 * `buf` must be valid for `cap` bytes when `cap > 0`.
 */
size_t hs_last_error_message(uint8_t *buf, size_t cap);

/**
 * Generates keys for ring degree `degree`, prime bit sizes
 * `chain_bits[0..chain_len]` and scale `2^scale_bits`, with Galois keys for
 * each entry of `rotations`. `seed` drives key generation and later
 * encryptions.
 *
 * # Safety
 * Pointers must be valid for the given lengths; `out` receives a handle.
 */
enum HsStatus hs_secret_context_new(size_t degree,
                                    const uint32_t *chain_bits,
                                    size_t chain_len,
                                    uint32_t scale_bits,
                                    const int64_t *rotations,
                                    size_t rotations_len,
                                    uint64_t seed,
                                    struct HsSecretContext **out);

/**
 * # Safety
 * `ctx` must come from this library or be null.
 */
void hs_secret_context_free(struct HsSecretContext *ctx);

/**
 * Number of complex slots (half the ring degree); 0 for a null handle.
 *
 * # Safety
 * `ctx` must be a live handle or null.
 */
size_t hs_secret_context_slots(const struct HsSecretContext *ctx);

/**
 * Copies out the evaluation keys, without the secret.
 *
 * # Safety
 * `ctx` must be a live handle; `out` receives a handle.
 */
enum HsStatus hs_secret_context_public(const struct HsSecretContext *ctx,
                                       struct HsPublicContext **out);

/**
 * # Safety
 * `ctx` must come from this library or be null.
 */
void hs_public_context_free(struct HsPublicContext *ctx);

/**
 * Serializes the public context into `buf`. With a null or short buffer
 * returns `BufferTooSmall` and the needed size in `written`.
 *
 * # Safety
 * `buf` must be valid for `cap` bytes.
 */
enum HsStatus hs_public_context_serialize(const struct HsPublicContext *ctx,
                                          uint8_t *buf,
                                          size_t cap,
                                          size_t *written);

/**
 * # Safety
 * `bytes` must be valid for `len` bytes; `out` receives a handle.
 */
enum HsStatus hs_public_context_deserialize(const uint8_t *bytes,
                                            size_t len,
                                            struct HsPublicContext **out);

/**
 * Encrypts `values[0..len]` into the leading slots.
 *
 * # Safety
 * `values` must be valid for `len` doubles; `out` receives a handle.
 */
enum HsStatus hs_encrypt(struct HsSecretContext *ctx,
                         const double *values,
                         size_t len,
                         struct HsCiphertext **out);

/**
 * Decrypts every slot into `out[0..cap]`; `written` gets the slot count.
 *
 * # Safety
 * `out` must be valid for `cap` doubles.
 */
enum HsStatus hs_decrypt(const struct HsSecretContext *ctx,
                         const struct HsCiphertext *ct,
                         double *out,
                         size_t cap,
                         size_t *written);

/**
 * # Safety
 * `ct` must come from this library or be null.
 */
void hs_ciphertext_free(struct HsCiphertext *ct);

/**
 * Remaining multiplicative depth; -1 for a null handle.
 *
 * # Safety
 * `ct` must be a live handle or null.
 */
int64_t hs_ciphertext_level(const struct HsCiphertext *ct);

/**
 * # Safety
 * Handles must be live; `out` receives a handle.
 */
enum HsStatus hs_add(const struct HsPublicContext *ctx,
                     const struct HsCiphertext *a,
                     const struct HsCiphertext *b,
                     struct HsCiphertext **out);

/**
 * Slot-wise product with `values`, rescaled; consumes one level and keeps
 * the scale.
 *
 * # Safety
 * `values` must be valid for `len` doubles; `out` receives a handle.
 */
enum HsStatus hs_mul_plain(const struct HsPublicContext *ctx,
                           const struct HsCiphertext *a,
                           const double *values,
                           size_t len,
                           struct HsCiphertext **out);

/**
 * Cyclic left rotation of the slots by `steps`.
 *
 * # Safety
 * Handles must be live; `out` receives a handle.
 */
enum HsStatus hs_rotate(const struct HsPublicContext *ctx,
                        const struct HsCiphertext *a,
                        int64_t steps,
                        struct HsCiphertext **out);

/**
 * # Safety
 * `buf` must be valid for `cap` bytes.
 */
enum HsStatus hs_ciphertext_serialize(const struct HsPublicContext *ctx,
                                      const struct HsCiphertext *ct,
                                      uint8_t *buf,
                                      size_t cap,
                                      size_t *written);

/**
 * # Safety
 * `bytes` must be valid for `len` bytes; `out` receives a handle.
 */
enum HsStatus hs_ciphertext_deserialize(const struct HsPublicContext *ctx,
                                        const uint8_t *bytes,
                                        size_t len,
                                        struct HsCiphertext **out);

/**
 * Encrypts the row-major `rows x in_dim` matrix `a`, evaluates
 * `a * w + b` under encryption (`w` row-major `in_dim x out_dim`) and
 * decrypts into `out[0..rows*out_dim]`. `batched != 0` selects one
 * ciphertext per column instead of one per row; the per-row layout needs
 * Galois keys for the powers of two below `in_dim`.
 *
 * # Safety
 * All arrays must be valid for the stated sizes.
 */
enum HsStatus hs_he_linear(struct HsSecretContext *ctx,
                           const double *a,
                           size_t rows,
                           size_t in_dim,
                           const double *w,
                           const double *b,
                           size_t out_dim,
                           int32_t batched,
                           double *out,
                           size_t cap,
                           size_t *written);

/**
 * `variant` is 1, 2 or 3; weights are drawn from `seed`.
 *
 * # Safety
 * `out` receives a handle.
 */
enum HsStatus hs_model_new(uint32_t variant, uint64_t seed, struct HsModel **out);

/**
 * # Safety
 * `m` must come from this library or be null.
 */
void hs_model_free(struct HsModel *m);

/**
 * Trainable parameter count; 0 for a null handle.
 *
 * # Safety
 * `m` must be a live handle or null.
 */
size_t hs_model_param_count(const struct HsModel *m);

/**
 * Expected input shape per sample: channels and timesteps.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum HsStatus hs_model_input_shape(const struct HsModel *m, size_t *channels, size_t *timesteps);

/**
 * Class predictions for `n` samples laid out `[n, channels, timesteps]`.
 *
 * # Safety
 * `x` must hold `n * channels * timesteps` doubles, `labels` `n` entries.
 */
enum HsStatus hs_model_predict(const struct HsModel *m,
                               const double *x,
                               size_t n,
                               uint32_t *labels);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* HESPLIT_H */
