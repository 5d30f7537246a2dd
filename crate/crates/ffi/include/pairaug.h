#ifndef PAIRAUG_H
#define PAIRAUG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PairaugStatus {
  PAIRAUG_STATUS_OK = 0,
  PAIRAUG_STATUS_NULL_ARGUMENT = 1,
  PAIRAUG_STATUS_INVALID_UTF8 = 2,
  PAIRAUG_STATUS_IO = 3,
  PAIRAUG_STATUS_PARSE = 4,
  PAIRAUG_STATUS_VALIDATION = 5,
  PAIRAUG_STATUS_DECODE = 6,
  PAIRAUG_STATUS_PARAMETER = 7,
  PAIRAUG_STATUS_CONTRACT = 8,
  PAIRAUG_STATUS_UNKNOWN_QUERY = 9,
  PAIRAUG_STATUS_PANIC = 10,
} PairaugStatus;

typedef enum PairaugFlippability {
  PAIRAUG_FLIPPABILITY_FREELY_FLIPPABLE = 0,
  PAIRAUG_FLIPPABILITY_REWRITABLE_FLIP = 1,
  PAIRAUG_FLIPPABILITY_NOT_FLIPPABLE = 2,
} PairaugFlippability;

/**
 * Packed RGB, row-major, 3 bytes per pixel.
 */
typedef struct PairaugImage PairaugImage;

/**
 * An augmentation policy together with the lexicons it gates on.
 */
typedef struct PairaugPolicy PairaugPolicy;

typedef struct PairaugReport PairaugReport;

typedef struct PairaugSample PairaugSample;

typedef struct PairaugMetrics {
  size_t queries;
  double ap;
  double r1;
  double r5;
  double r10;
} PairaugMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread, or null if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *pairaug_last_error(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void pairaug_string_free(char *s);

/**
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum PairaugStatus pairaug_policy_default(struct PairaugPolicy **out);

/**
 * Parses a policy in TOML. `lexicons_json` may be null for the default lexicons.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum PairaugStatus pairaug_policy_from_toml(const char *toml,
                                            const char *lexicons_json,
                                            struct PairaugPolicy **out);

/**
 * Same as [`pairaug_policy_from_toml`] with the keys given as a JSON object.
 *
 * # Safety
 * String arguments must be null or NUL-terminated; `out` must be writable.
 */
enum PairaugStatus pairaug_policy_from_json(const char *json,
                                            const char *lexicons_json,
                                            struct PairaugPolicy **out);

/**
 * # Safety
 * `policy` must be a live handle.
 */
enum PairaugStatus pairaug_policy_set_seed(struct PairaugPolicy *policy, uint64_t global_seed);

/**
 * # Safety
 * `policy` must be null or a live handle; it is invalid afterwards.
 */
void pairaug_policy_free(struct PairaugPolicy *policy);

/**
 * Parses one sample object (the same shape as an entry of an annotation
 * file's `samples` array, boxes in xyxy) and validates it.
 *
 * # Safety
 * `json` must be NUL-terminated; `out` must be writable.
 */
enum PairaugStatus pairaug_sample_from_json(const char *json, struct PairaugSample **out);

/**
 * # Safety
 * `sample` must be a live handle; `out` must be writable. Free the string
 * with [`pairaug_string_free`].
 */
enum PairaugStatus pairaug_sample_to_json(const struct PairaugSample *sample, char **out);

/**
 * # Safety
 * `sample` must be null or a live handle; it is invalid afterwards.
 */
void pairaug_sample_free(struct PairaugSample *sample);

/**
 * Copies `width * height * 3` bytes of packed RGB into a new image.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum PairaugStatus pairaug_image_new(uint32_t width,
                                     uint32_t height,
                                     const uint8_t *data,
                                     size_t len,
                                     struct PairaugImage **out);

/**
 * Decodes a PNG or JPEG file to RGB.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum PairaugStatus pairaug_image_load(const char *path, struct PairaugImage **out);

/**
 * # Safety
 * `image` must be a live handle; `path` must be NUL-terminated.
 */
enum PairaugStatus pairaug_image_save_png(const struct PairaugImage *image, const char *path);

/**
 * Borrowed view of the pixel bytes; valid while `image` is alive.
 *
 * # Safety
 * `image` must be a live handle; the out pointers must be writable.
 */
enum PairaugStatus pairaug_image_data(const struct PairaugImage *image,
                                      uint32_t *width,
                                      uint32_t *height,
                                      const uint8_t **data,
                                      size_t *len);

/**
 * # Safety
 * `image` must be null or a live handle; it is invalid afterwards.
 */
void pairaug_image_free(struct PairaugImage *image);

/**
 * Augments one sample. All three outputs are new handles owned by the caller.
 *
 * # Safety
 * Input handles must be live; the out pointers must be writable.
 */
enum PairaugStatus pairaug_augment(const struct PairaugPolicy *policy,
                                   const struct PairaugSample *sample,
                                   const struct PairaugImage *image,
                                   uint64_t epoch,
                                   struct PairaugSample **out_sample,
                                   struct PairaugImage **out_image,
                                   struct PairaugReport **out_report);

/**
 * # Safety
 * `report` must be a live handle; `out` must be writable. Free the string
 * with [`pairaug_string_free`].
 */
enum PairaugStatus pairaug_report_to_json(const struct PairaugReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a live handle; it is invalid afterwards.
 */
void pairaug_report_free(struct PairaugReport *report);

/**
 * Color-word check against the policy's lexicon, or the default one when
 * `policy` is null.
 *
 * # Safety
 * `policy` must be null or live; `caption` NUL-terminated; `out` writable.
 */
enum PairaugStatus pairaug_contains_color_words(const struct PairaugPolicy *policy,
                                                const char *caption,
                                                bool *out);

/**
 * # Safety
 * `policy` must be null or live; `caption` NUL-terminated; `out` writable.
 */
enum PairaugStatus pairaug_classify_flippability(const struct PairaugPolicy *policy,
                                                 const char *caption,
                                                 enum PairaugFlippability *out);

/**
 * # Safety
 * `image_id` must be NUL-terminated; `out` writable.
 */
enum PairaugStatus pairaug_derive_seed(uint64_t global_seed,
                                       const char *image_id,
                                       uint64_t epoch,
                                       uint64_t *out);

/**
 * GIoU of two xyxy boxes.
 *
 * # Safety
 * `a` and `b` must each point to 4 doubles; `out` writable.
 */
enum PairaugStatus pairaug_giou(const double *a, const double *b, double *out);

/**
 * Mean over `n` matched pairs of L1 plus (1 - GIoU). Boxes are `n * 4`
 * doubles, xyxy. `no_matches` may be null.
 *
 * # Safety
 * `predicted` and `target` must point to `n * 4` doubles; `out` writable.
 */
enum PairaugStatus pairaug_box_loss(const double *predicted,
                                    const double *target,
                                    size_t n,
                                    double *out,
                                    bool *no_matches);

/**
 * Object/token contrastive alignment loss.
 *
 * `objects` is `num_objects * dim`, `tokens` is `num_tokens * dim`, both
 * row-major. `pairs` holds `num_pairs` (object, token) index pairs,
 * flattened.
 *
 * # Safety
 * Array arguments must point to the stated number of elements; `out` writable.
 */
enum PairaugStatus pairaug_contrastive_loss(const double *objects,
                                            size_t num_objects,
                                            const double *tokens,
                                            size_t num_tokens,
                                            size_t dim,
                                            const size_t *pairs,
                                            size_t num_pairs,
                                            double temperature,
                                            double *out);

/**
 * Soft-token cross-entropy. `logits` is `rows * cols`; `positives` is a
 * `rows * cols` 0/1 mask marking each row's target tokens. Rows without
 * positives do not contribute.
 *
 * # Safety
 * `logits` and `positives` must point to `rows * cols` elements; `out` writable.
 */
enum PairaugStatus pairaug_soft_token_loss(const double *logits,
                                           const uint8_t *positives,
                                           size_t rows,
                                           size_t cols,
                                           double *out,
                                           bool *no_matches);

/**
 * Evaluates a prediction file against an annotation file.
 *
 * # Safety
 * Paths must be NUL-terminated; `out` writable.
 */
enum PairaugStatus pairaug_eval_files(const char *annotations,
                                      const char *predictions,
                                      struct PairaugMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PAIRAUG_H */
