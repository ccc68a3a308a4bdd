#ifndef MOBDS_H
#define MOBDS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define MOBDS_METHOD_MOB 0

#define MOBDS_METHOD_MOB_DS 1

#define MOBDS_LINK_LOGIT 0

#define MOBDS_LINK_GOMPERTZ 1

/**
 * Status codes returned by every fallible function.
 */
typedef enum MobdsStatus {
  MOBDS_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MOBDS_STATUS_ERR_NULL = 1,
  /**
   * Invalid argument or configuration.
   */
  MOBDS_STATUS_ERR_USAGE = 2,
  /**
   * Invalid or unreadable data.
   */
  MOBDS_STATUS_ERR_DATA = 3,
  /**
   * Model fitting or testing failed numerically.
   */
  MOBDS_STATUS_ERR_NUMERICAL = 4,
  MOBDS_STATUS_ERR_IO = 5,
  /**
   * An internal panic was caught at the boundary.
   */
  MOBDS_STATUS_ERR_PANIC = 6,
} MobdsStatus;

/**
 * Opaque subject-level dataset.
 */
typedef struct MobdsDataset MobdsDataset;

/**
 * Opaque fitted tree.
 */
typedef struct MobdsTree MobdsTree;

/**
 * Tree growing options; obtain defaults from [`mobds_config_default`].
 */
typedef struct MobdsConfig {
  double alpha;
  /**
   * `MOBDS_METHOD_MOB` or `MOBDS_METHOD_MOB_DS`.
   */
  int32_t method;
  size_t n_perms;
  size_t max_depth;
  size_t min_subjects;
  /**
   * 0 selects the default `2 (K - 1) + 2 p`.
   */
  size_t min_events;
  /**
   * `MOBDS_LINK_LOGIT` or `MOBDS_LINK_GOMPERTZ`.
   */
  int32_t link;
  /**
   * Symmetric supLM trimming fraction.
   */
  double trim;
  uint64_t seed;
  /**
   * Non-zero for randomized instead of add-one permutation p-values.
   */
  int32_t randomized_pvalue;
} MobdsConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *mobds_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *mobds_version(void);

/**
 * Builds a dataset from arrays of length `n` (times, statuses) and
 * row-major `n x p` / `n x q` covariate matrices. `x` may be null when
 * `p = 0`. `k_max = 0` infers the largest time. Subject ids are `1..=n`.
 */
enum MobdsStatus mobds_dataset_from_arrays(const int64_t *obs_time,
                                           const int64_t *status,
                                           size_t n,
                                           const double *x,
                                           size_t p,
                                           const double *z,
                                           size_t q,
                                           uint32_t k_max,
                                           struct MobdsDataset **out);

/**
 * Reads a dataset from a CSV file. Column lists are comma separated;
 * `x_cols` and `categorical` may be null.
 */
enum MobdsStatus mobds_dataset_from_csv(const char *path,
                                        const char *time_col,
                                        const char *status_col,
                                        const char *x_cols,
                                        const char *z_cols,
                                        const char *categorical,
                                        struct MobdsDataset **out);

size_t mobds_dataset_len(const struct MobdsDataset *ds);

uint32_t mobds_dataset_k_max(const struct MobdsDataset *ds);

void mobds_dataset_free(struct MobdsDataset *ds);

/**
 * Life-table hazards and survival into caller buffers of length `len`;
 * `written` receives the number of time points (at most `len`).
 */
enum MobdsStatus mobds_life_table(const struct MobdsDataset *ds,
                                  double *hazards,
                                  double *survival,
                                  size_t len,
                                  size_t *written);

struct MobdsConfig mobds_config_default(void);

/**
 * Grows a tree using every x column of the dataset as a model covariate.
 */
enum MobdsStatus mobds_tree_grow(const struct MobdsDataset *ds,
                                 const struct MobdsConfig *config,
                                 struct MobdsTree **out);

size_t mobds_tree_num_nodes(const struct MobdsTree *tree);

size_t mobds_tree_num_terminals(const struct MobdsTree *tree);

/**
 * Serializes the tree; release the string with [`mobds_string_free`].
 */
enum MobdsStatus mobds_tree_to_json(const struct MobdsTree *tree, char **out);

enum MobdsStatus mobds_tree_from_json(const char *json, struct MobdsTree **out);

/**
 * Routes one subject (`q` partitioning values, categorical ones as level
 * codes, and `p` model covariates) and writes its terminal node id and
 * survival curve `S(1), S(2), ...` (at most `len` values).
 */
enum MobdsStatus mobds_tree_predict(const struct MobdsTree *tree,
                                    const double *z,
                                    size_t q,
                                    const double *x,
                                    size_t p,
                                    size_t *node,
                                    double *survival,
                                    size_t len,
                                    size_t *written);

void mobds_tree_free(struct MobdsTree *tree);

void mobds_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOBDS_H */
