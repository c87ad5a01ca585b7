#ifndef GRASSKIT_H
#define GRASSKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>

typedef enum GkStatus {
  GK_STATUS_OK = 0,
  GK_STATUS_INVALID_INPUT = 1,
  GK_STATUS_RANK_DEFICIENT = 2,
  GK_STATUS_OUT_OF_CHART = 3,
  GK_STATUS_INVALID_SCALE = 4,
  GK_STATUS_INVALID_PARAMS = 5,
  GK_STATUS_INVALID_EXPONENT = 6,
  GK_STATUS_SPACING_VIOLATION = 7,
  GK_STATUS_RESOURCE_CAP = 8,
  GK_STATUS_IO = 9,
  GK_STATUS_JSON = 10,
  GK_STATUS_NULL_POINTER = 11,
  GK_STATUS_BUFFER_TOO_SMALL = 12,
  GK_STATUS_PANIC = 13,
} GkStatus;

/**
 * A family of chart m-planes at one scale.
 */
typedef struct GkFamily GkFamily;

/**
 * A linear subspace with an orthonormal basis.
 */
typedef struct GkSubspace GkSubspace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library on this thread.
 */
const char *gk_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void gk_string_free(char *s);

/**
 * Span of `count` vectors of length `ambient`, stored one after another.
 *
 * # Safety
 * `data` must point to `ambient * count` doubles; `out` must be writable.
 */
enum GkStatus gk_subspace_new(const double *data,
                              size_t ambient,
                              size_t count,
                              struct GkSubspace **out);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void gk_subspace_free(struct GkSubspace *s);

/**
 * # Safety
 * Pointers must be valid.
 */
enum GkStatus gk_subspace_dim(const struct GkSubspace *s, size_t *dim, size_t *ambient);

/**
 * Copies the orthonormal basis, vector after vector, into `out`, which
 * must hold `dim * ambient` doubles.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum GkStatus gk_subspace_basis(const struct GkSubspace *s, double *out, size_t len);

/**
 * # Safety
 * Pointers must be valid.
 */
enum GkStatus gk_distance(const struct GkSubspace *a, const struct GkSubspace *b, double *out);

/**
 * Principal angles in ascending order; `out` must hold `dim` doubles.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum GkStatus gk_principal_angles(const struct GkSubspace *a,
                                  const struct GkSubspace *b,
                                  double *out,
                                  size_t len);

/**
 * Point at parameter `t ∈ [0, 1]` of the geodesic from `a` to `b`.
 * `unique` may be null.
 *
 * # Safety
 * Pointers must be valid.
 */
enum GkStatus gk_geodesic(const struct GkSubspace *a,
                          const struct GkSubspace *b,
                          double t,
                          struct GkSubspace **out,
                          bool *unique);

/**
 * Nearest point of G(dim v, pi) to `v`. `dist` and `unique` may be null.
 *
 * # Safety
 * Pointers must be valid.
 */
enum GkStatus gk_project(const struct GkSubspace *v,
                         const struct GkSubspace *pi,
                         struct GkSubspace **out,
                         double *dist,
                         bool *unique);

/**
 * # Safety
 * `out` must be writable.
 */
enum GkStatus gk_admissible_p_max(size_t l, size_t m, size_t d, double beta, double *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum GkStatus gk_family_generate(size_t l,
                                 size_t m,
                                 size_t d,
                                 size_t n,
                                 double beta,
                                 double delta,
                                 struct GkFamily **out);

/**
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
enum GkStatus gk_family_from_json(const char *json, struct GkFamily **out);

/**
 * Writes a newly allocated JSON string; free it with [`gk_string_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum GkStatus gk_family_to_json(const struct GkFamily *f, char **out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum GkStatus gk_family_len(const struct GkFamily *f, size_t *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum GkStatus gk_family_lp_norm(const struct GkFamily *f, double p, double grid_delta, double *out);

/**
 * # Safety
 * `f` must come from this library and not have been freed.
 */
void gk_family_free(struct GkFamily *f);

/**
 * Runs an experiment from a JSON config and writes the JSON report.
 * Output paths in the config are honoured.
 *
 * # Safety
 * `config` must be a nul-terminated string; `report` must be writable.
 */
enum GkStatus gk_run_config_json(const char *config, char **report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRASSKIT_H */
