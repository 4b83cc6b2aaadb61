/*
 * C interface to the test-time consistency engine.
 *
 * Objects cross the boundary as opaque handles; every fallible call returns a
 * ttc_status and leaves a message retrievable with ttc_last_error() on the
 * calling thread. Strings returned through `char**` are owned by the caller
 * and must be released with ttc_string_free().
 */
#ifndef TTC_TTC_H
#define TTC_TTC_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(TTC_BUILDING_LIBRARY)
#    define TTC_API __declspec(dllexport)
#  else
#    define TTC_API __declspec(dllimport)
#  endif
#else
#  define TTC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ttc_status {
  TTC_OK = 0,
  TTC_ERR_CONFIG = 1,
  TTC_ERR_USAGE = 2,
  TTC_ERR_PARSE = 3,
  TTC_ERR_IO = 4,
  TTC_ERR_VOCABULARY = 5,
  TTC_ERR_SHAPE = 6,
  TTC_ERR_EMPTY_GROUP = 7,
  TTC_ERR_NUMERIC = 8,
  TTC_ERR_DEGENERATE = 9,
  TTC_ERR_CONTRACT = 10,
  TTC_ERR_INTERNAL = 11
} ttc_status;

typedef struct ttc_dataset ttc_dataset;
typedef struct ttc_report ttc_report;

typedef enum ttc_adapt_mode { TTC_ADAPT_CONSTANT = 0, TTC_ADAPT_ADAPTIVE = 1 } ttc_adapt_mode;

#define TTC_MODE_BASE 1u
#define TTC_MODE_CONSTANT 2u
#define TTC_MODE_ADAPTIVE 4u

typedef struct ttc_dataset_spec {
  uint64_t seed;
  size_t n_groups;
  size_t k;
  const char* task_kind; /* "rephrase", "restyle" or "mask" */
  size_t vocab;
  size_t hidden;
  size_t embed;
  size_t features;
  size_t max_len;
  double inconsistency_bias;
} ttc_dataset_spec;

typedef struct ttc_adapt_config {
  ttc_adapt_mode mode; /* used by ablations for the adapted rows */
  size_t steps;
  size_t max_steps;
  double lr;
  double alpha;
  double beta;
  size_t max_len;
  double tau;
  int freeze_pseudo_label;
} ttc_adapt_config;

typedef struct ttc_run_options {
  unsigned modes;       /* TTC_MODE_* bit set */
  const char* provider; /* "token_set" (NULL) or "normalized_lev" */
  size_t threads;
  int carry_over;
} ttc_run_options;

typedef struct ttc_metrics {
  double acc;
  double s_gt;
  double con;
  double s_c;
  double o_all;
  long long n_pairs;
} ttc_metrics;

typedef struct ttc_gradcheck_result {
  size_t configurations;
  size_t entries;
  size_t failures;
  double max_abs_error;
  double max_rel_error;
} ttc_gradcheck_result;

TTC_API const char* ttc_version(void);
TTC_API const char* ttc_status_name(ttc_status status);
/* Message of the last failed call on this thread; "" if none. */
TTC_API const char* ttc_last_error(void);
TTC_API void ttc_string_free(char* text);

/* Defaults: seed 0, 50 groups, K 4, restyle, V 64, H 32, E 16, F 16,
 * max_len 8, bias 0.5. */
TTC_API void ttc_dataset_spec_init(ttc_dataset_spec* spec);
/* Defaults: adaptive, T 2, T_max 4, lr 5e-4 * 16 (toy scale), alpha 0.5,
 * beta 1, max_len 8, tau 0.85. */
TTC_API void ttc_adapt_config_init(ttc_adapt_config* cfg);
/* Defaults: base|constant|adaptive, token_set, 1 thread, no carry-over. */
TTC_API void ttc_run_options_init(ttc_run_options* options);

TTC_API ttc_status ttc_dataset_generate(const ttc_dataset_spec* spec, ttc_dataset** out);
TTC_API ttc_status ttc_dataset_load(const char* path, ttc_dataset** out);
TTC_API ttc_status ttc_dataset_parse(const char* text, size_t length, ttc_dataset** out);
TTC_API ttc_status ttc_dataset_save(const ttc_dataset* dataset, const char* path);
TTC_API ttc_status ttc_dataset_serialize(const ttc_dataset* dataset, char** out_text);
TTC_API size_t ttc_dataset_group_count(const ttc_dataset* dataset);
TTC_API size_t ttc_dataset_certified_count(const ttc_dataset* dataset);
TTC_API void ttc_dataset_free(ttc_dataset* dataset);

TTC_API ttc_status ttc_run(const ttc_dataset* dataset, const ttc_adapt_config* cfg,
                           const ttc_run_options* options, ttc_report** out);
/* Parses a report document and verifies its aggregates against the
 * per-group entries (TTC_ERR_CONTRACT on mismatch). */
TTC_API ttc_status ttc_report_parse(const char* text, size_t length, ttc_report** out);
TTC_API ttc_status ttc_report_serialize(const ttc_report* report, int with_timing, char** out_text);
TTC_API ttc_status ttc_report_summary(const ttc_report* report, char** out_text);
TTC_API ttc_status ttc_report_csv(const ttc_report* report, char** out_text);
/* mode: "base", "constant" or "adaptive". */
TTC_API ttc_status ttc_report_aggregate(const ttc_report* report, const char* mode, ttc_metrics* out);
TTC_API void ttc_report_free(ttc_report* report);

/* axis: "loss_components", "weights" or "steps". Writes the CSV table. */
TTC_API ttc_status ttc_ablate(const ttc_dataset* dataset, const ttc_adapt_config* cfg,
                              const ttc_run_options* options, const char* axis, char** out_csv,
                              size_t* out_rows);

/* Finite-difference check of the head gradient; TTC_ERR_CONTRACT when any
 * entry is out of tolerance (the result is still filled in). */
TTC_API ttc_status ttc_gradcheck(uint64_t seed, size_t configurations, ttc_gradcheck_result* out);

TTC_API ttc_status ttc_levenshtein(const char* a, const char* b, size_t* out);
TTC_API ttc_status ttc_token_set_similarity(const char* a, const char* b, double* out);

#ifdef __cplusplus
}
#endif

#endif /* TTC_TTC_H */
