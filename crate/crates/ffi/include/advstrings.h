#ifndef ADVSTRINGS_H
#define ADVSTRINGS_H

/* Generated by cbindgen from advstrings-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum AdvStatus {
  ADV_OK = 0,
  /**
   * Checkpoint file missing, unreadable or malformed.
   */
  ADV_ERR_IO = -1,
  /**
   * Null pointer, bad UTF-8 path, or mismatched buffer size.
   */
  ADV_ERR_INVALID_ARG = -2,
  /**
   * Codec rejected the input (empty/too long string, bad latent).
   */
  ADV_ERR_CODEC = -3,
  /**
   * Classifier rejected the bag (dimension mismatch, empty bag).
   */
  ADV_ERR_CLASSIFY = -4,
  /**
   * Attack configuration or execution error.
   */
  ADV_ERR_ATTACK = -5,
} AdvStatus;

/**
 * Projection choices for the PGD ball.
 */
typedef enum AdvProjection {
  ADV_PROJ_L2 = 0,
  ADV_PROJ_LINF = 1,
  ADV_PROJ_NONE = 2,
} AdvProjection;

/**
 * Attack outcome codes mirrored into C.
 */
typedef enum AdvOutcome {
  ADV_ALREADY_MISCLASSIFIED = 0,
  ADV_SUCCESS = 1,
  ADV_FAILURE = 2,
} AdvOutcome;

/**
 * Opaque attack result handle.
 */
typedef struct AdvAttackResult AdvAttackResult;

/**
 * Opaque trained classifier handle.
 */
typedef struct AdvClassifier AdvClassifier;

/**
 * Opaque trained autoencoder handle.
 */
typedef struct AdvCodec AdvCodec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *adv_last_error(void);

/**
 * Load an autoencoder checkpoint. On success `*out` owns the handle; free
 * it with [`adv_codec_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AdvStatus adv_codec_load(const char *path, struct AdvCodec **out);

/**
 * # Safety
 * `codec` must be a handle from [`adv_codec_load`] (or null).
 */
void adv_codec_free(struct AdvCodec *codec);

/**
 * Latent vector length of the loaded model.
 *
 * # Safety
 * `codec` must be a valid handle.
 */
uintptr_t adv_codec_latent_dim(const struct AdvCodec *codec);

/**
 * Encode one byte string into `latent_out`, which must hold
 * `adv_codec_latent_dim` doubles.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes; `latent_out` to latent_dim
 * writable doubles.
 */
enum AdvStatus adv_encode(const struct AdvCodec *codec,
                          const uint8_t *bytes,
                          uintptr_t len,
                          double *latent_out);

/**
 * Greedy-decode a latent into `buf`; `*written` receives the emitted byte
 * count (at most `max_chars`, truncated to `buf_len`).
 *
 * # Safety
 * `latent` must point to `latent_len` doubles, `buf` to `buf_len` writable
 * bytes, `written` to a writable size_t.
 */
enum AdvStatus adv_decode(const struct AdvCodec *codec,
                          const double *latent,
                          uintptr_t latent_len,
                          uintptr_t max_chars,
                          uint8_t *buf,
                          uintptr_t buf_len,
                          uintptr_t *written);

/**
 * Load a classifier checkpoint; free with [`adv_classifier_free`].
 *
 * # Safety
 * As [`adv_codec_load`].
 */
enum AdvStatus adv_classifier_load(const char *path, struct AdvClassifier **out);

/**
 * # Safety
 * `clf` must be a handle from [`adv_classifier_load`] (or null).
 */
void adv_classifier_free(struct AdvClassifier *clf);

/**
 * Classify a bag of byte strings: encodes each path with the codec, then
 * aggregates and classifies. `logits_out` receives the two class logits and
 * `label_out` 0 (benign) or 1 (malicious).
 *
 * # Safety
 * `paths`/`path_lens` must describe `n_paths` readable byte strings;
 * `logits_out` must hold two doubles.
 */
enum AdvStatus adv_classify_bag(const struct AdvClassifier *clf,
                                const struct AdvCodec *codec,
                                const uint8_t *const *paths,
                                const uintptr_t *path_lens,
                                uintptr_t n_paths,
                                double *logits_out,
                                int32_t *label_out);

/**
 * Run the iterative projected attack against one bag. On success `*out`
 * owns a result handle; free it with [`adv_result_free`].
 *
 * # Safety
 * Pointer arguments as in [`adv_classify_bag`]; `out` must be valid.
 */
enum AdvStatus adv_attack_pgd(const struct AdvClassifier *clf,
                              const struct AdvCodec *codec,
                              const uint8_t *const *paths,
                              const uintptr_t *path_lens,
                              uintptr_t n_paths,
                              int32_t true_label,
                              double alpha,
                              double eps,
                              enum AdvProjection projection,
                              uintptr_t max_iters,
                              struct AdvAttackResult **out);

/**
 * Run the one-shot sign attack with an epsilon sweep against one bag.
 *
 * # Safety
 * As [`adv_attack_pgd`].
 */
enum AdvStatus adv_attack_fgsm(const struct AdvClassifier *clf,
                               const struct AdvCodec *codec,
                               const uint8_t *const *paths,
                               const uintptr_t *path_lens,
                               uintptr_t n_paths,
                               int32_t true_label,
                               double delta_eps,
                               double eps_max,
                               struct AdvAttackResult **out);

/**
 * # Safety
 * `result` must be a handle from an attack call (or null).
 */
void adv_result_free(struct AdvAttackResult *result);

/**
 * # Safety
 * `result` must be a valid handle.
 */
enum AdvOutcome adv_result_outcome(const struct AdvAttackResult *result);

/**
 * Number of adversarial paths carried by the result (0 for failures).
 *
 * # Safety
 * `result` must be a valid handle.
 */
uintptr_t adv_result_num_paths(const struct AdvAttackResult *result);

/**
 * Copy adversarial path `idx` into `buf` (truncating to `buf_len`);
 * `*written` receives the byte count.
 *
 * # Safety
 * `buf` must point to `buf_len` writable bytes and `written` be valid.
 */
enum AdvStatus adv_result_path(const struct AdvAttackResult *result,
                               uintptr_t idx,
                               uint8_t *buf,
                               uintptr_t buf_len,
                               uintptr_t *written);

/**
 * Attack iterations consumed (PGD steps or FGSM sweep rounds).
 *
 * # Safety
 * `result` must be a valid handle.
 */
uintptr_t adv_result_iterations(const struct AdvAttackResult *result);

/**
 * Epsilon at which the attack succeeded (0 when not applicable).
 *
 * # Safety
 * `result` must be a valid handle.
 */
double adv_result_eps_used(const struct AdvAttackResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADVSTRINGS_H */
