#ifndef EOPTSHRINKQ_H
#define EOPTSHRINKQ_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values match the CLI exit codes where they overlap.
 */
typedef enum EosqStatus {
  EOSQ_STATUS_OK = 0,
  /**
   * Null pointer, bad length or unknown enum value.
   */
  EOSQ_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Configuration or shape rejected by the codec.
   */
  EOSQ_STATUS_USAGE = 2,
  /**
   * Malformed or unsupported serialized data, or an I/O failure.
   */
  EOSQ_STATUS_FORMAT = 3,
  /**
   * Numeric failure such as non-finite input.
   */
  EOSQ_STATUS_NUMERIC = 4,
  /**
   * Output buffer too small; the required size has been written.
   */
  EOSQ_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  EOSQ_STATUS_INTERNAL = 6,
} EosqStatus;

/**
 * One compressed block plus its decoded form for inner-product queries.
 */
typedef struct EosqBlock EosqBlock;

/**
 * Compression settings.
 */
typedef struct EosqCodec EosqCodec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *eosq_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *eosq_version(void);

/**
 * Creates a codec.
 *
 * `method`: 0 tq_mse, 1 tq_prod, 2 svd1_tq, 3 eoptshrinkq_mse,
 * 4 eoptshrinkq_prod, 5 kivi. `loss`: 0 Frobenius, 1 operator, 2 nuclear.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum EosqStatus eosq_codec_new(uint8_t method,
                               uint8_t residual_bits,
                               uint8_t factor_bits,
                               uint8_t loss,
                               uint64_t seed,
                               struct EosqCodec **out);

/**
 * # Safety
 * `codec` must come from [`eosq_codec_new`] and not be used afterwards.
 */
void eosq_codec_free(struct EosqCodec *codec);

/**
 * Compresses a row-major `n x d` block of f32 values. `block_index`
 * selects the per-block seeds.
 *
 * # Safety
 * `data` must point to `n * d` readable floats; `codec` must be live;
 * `out` must be writable.
 */
enum EosqStatus eosq_compress(const struct EosqCodec *codec,
                              const float *data,
                              size_t n,
                              size_t d,
                              uint64_t block_index,
                              struct EosqBlock **out);

/**
 * # Safety
 * `block` must come from this library and not be used afterwards.
 */
void eosq_block_free(struct EosqBlock *block);

/**
 * Shape of a compressed block.
 *
 * # Safety
 * `block` must be live; `n` and `d` writable.
 */
enum EosqStatus eosq_block_shape(const struct EosqBlock *block, size_t *n, size_t *d);

/**
 * Number of low-rank components stored.
 *
 * # Safety
 * `block` must be live; `rank` writable.
 */
enum EosqStatus eosq_block_rank(const struct EosqBlock *block, size_t *rank);

/**
 * Bits per entry, excluding norm and singular value overheads.
 *
 * # Safety
 * `block` must be live; `bits_out` writable.
 */
enum EosqStatus eosq_block_bits(const struct EosqBlock *block, double *bits_out);

/**
 * Writes the reconstruction as row-major f32 into `out`, which holds
 * `capacity` floats.
 *
 * # Safety
 * `block` must be live; `out` must point to `capacity` writable floats.
 */
enum EosqStatus eosq_decompress(const struct EosqBlock *block, float *out, size_t capacity);

/**
 * Estimates `<query, x_row>` from the compressed block, applying the sign
 * sketch correction when the method stores one.
 *
 * # Safety
 * `block` must be live; `query` must point to `d` readable floats;
 * `result` writable.
 */
enum EosqStatus eosq_inner_product(const struct EosqBlock *block,
                                   size_t row,
                                   const float *query,
                                   size_t d,
                                   double *result);

/**
 * Serializes the block as a single-block compressed file. If `capacity` is
 * too small nothing is copied, `*written` holds the size needed and
 * `BufferTooSmall` is returned; pass a NULL `buf` to query the size.
 *
 * # Safety
 * `block` must be live; `buf` must point to `capacity` writable bytes or be
 * NULL; `written` writable.
 */
enum EosqStatus eosq_block_serialize(const struct EosqBlock *block,
                                     uint8_t *buf,
                                     size_t capacity,
                                     size_t *written);

/**
 * Reads a block written by [`eosq_block_serialize`].
 *
 * # Safety
 * `buf` must point to `len` readable bytes; `out` writable.
 */
enum EosqStatus eosq_block_deserialize(const uint8_t *buf, size_t len, struct EosqBlock **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EOPTSHRINKQ_H */
