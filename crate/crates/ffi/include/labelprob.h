#ifndef LABELPROB_H
#define LABELPROB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum LpStatus {
  LP_STATUS_OK = 0,
  LP_STATUS_NULL_POINTER = 1,
  LP_STATUS_INVALID_UTF8 = 2,
  LP_STATUS_PARSE = 3,
  LP_STATUS_VALIDATION = 4,
  LP_STATUS_CONFIG = 5,
  LP_STATUS_INVALID_CONTEXT = 6,
  LP_STATUS_PROVIDER_UNAVAILABLE = 7,
  LP_STATUS_MALFORMED_DISTRIBUTION = 8,
  LP_STATUS_BUDGET_EXCEEDED = 9,
  LP_STATUS_STATE_EXPLOSION = 10,
  LP_STATUS_BUFFER_TOO_SMALL = 11,
  LP_STATUS_PANIC = 12,
  LP_STATUS_OTHER = 13,
} LpStatus;

/**
 * A language model handle.
 */
typedef struct LpModel LpModel;

/**
 * A label taxonomy handle.
 */
typedef struct LpTaxonomy LpTaxonomy;

/**
 * Marginal search settings. `boundary_safe` selects boundary-safe label
 * matching instead of literal suffix matching.
 */
typedef struct LpMarginalConfig {
  double top_p;
  double prune_threshold;
  size_t max_new_tokens;
  double eos_break_prob;
  bool third_token_eos_break;
  bool boundary_safe;
  size_t node_budget;
  bool parallel;
} LpMarginalConfig;

/**
 * Cost counters of one marginal computation.
 */
typedef struct LpStats {
  uint64_t nodes_expanded;
  uint64_t model_calls;
  uint64_t paths_terminated;
  double mass_pruned;
} LpStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lp_version(void);

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *lp_last_error_message(void);

/**
 * Loads a table model from its JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LpStatus lp_model_from_json(const char *json, struct LpModel **out);

/**
 * Connects to a distribution server at `base_url`. Responses are cached
 * per context for the lifetime of the handle.
 *
 * # Safety
 * `base_url` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LpStatus lp_model_open_remote(const char *base_url, struct LpModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library not yet freed.
 */
void lp_model_free(struct LpModel *model);

/**
 * Builds a taxonomy from `len` label codes.
 *
 * # Safety
 * `codes` must point to `len` NUL-terminated strings and `out` be valid.
 */
enum LpStatus lp_taxonomy_new(const char *const *codes, size_t len, struct LpTaxonomy **out);

/**
 * The fourteen-category default taxonomy `S1` through `S14`.
 */
struct LpTaxonomy *lp_taxonomy_default(void);

/**
 * Number of labels, or 0 for a null handle.
 *
 * # Safety
 * `taxonomy` must be null or a live handle.
 */
size_t lp_taxonomy_len(const struct LpTaxonomy *taxonomy);

/**
 * Code of label `index`, or null when out of range. Owned by the handle.
 *
 * # Safety
 * `taxonomy` must be null or a live handle.
 */
const char *lp_taxonomy_code(const struct LpTaxonomy *taxonomy, size_t index);

/**
 * # Safety
 * `taxonomy` must be null or a handle from this library not yet freed.
 */
void lp_taxonomy_free(struct LpTaxonomy *taxonomy);

struct LpMarginalConfig lp_marginal_config_default(void);

/**
 * Settings with every cut and early stop disabled.
 */
struct LpMarginalConfig lp_marginal_config_exhaustive(size_t max_new_tokens);

/**
 * Marginal label probabilities by pruned search.
 *
 * # Safety
 * Handles must be live, `prompt` NUL-terminated, `config` valid or null for
 * defaults, `out` writable for `out_len` doubles, `stats` null or writable.
 */
enum LpStatus lp_marginal(const struct LpModel *model,
                          const char *prompt,
                          const struct LpTaxonomy *taxonomy,
                          const struct LpMarginalConfig *config,
                          double *out,
                          size_t out_len,
                          struct LpStats *stats);

/**
 * Probability of each label's final token on the greedy path.
 *
 * # Safety
 * As for [`lp_marginal`].
 */
enum LpStatus lp_conditional(const struct LpModel *model,
                             const char *prompt,
                             const struct LpTaxonomy *taxonomy,
                             size_t max_new_tokens,
                             double *out,
                             size_t out_len);

/**
 * Greedy-path probability up to and including each label.
 *
 * # Safety
 * As for [`lp_marginal`].
 */
enum LpStatus lp_joint(const struct LpModel *model,
                       const char *prompt,
                       const struct LpTaxonomy *taxonomy,
                       size_t max_new_tokens,
                       double *out,
                       size_t out_len);

/**
 * Exact marginals by full enumeration up to `horizon` tokens.
 *
 * # Safety
 * As for [`lp_marginal`].
 */
enum LpStatus lp_exact_marginal(const struct LpModel *model,
                                const char *prompt,
                                const struct LpTaxonomy *taxonomy,
                                size_t horizon,
                                double *out,
                                size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LABELPROB_H */
