/* C interface to the citeimpact library. Every call returns a ci_status; on
 * failure ci_last_error() holds a message for the calling thread. */
#ifndef CITEIMPACT_CITEIMPACT_H
#define CITEIMPACT_CITEIMPACT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CITEIMPACT_API __declspec(dllexport)
#else
#define CITEIMPACT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ci_status {
  CI_OK = 0,
  CI_ERR_INVALID_ARGUMENT = 1,
  CI_ERR_IO = 2,
  CI_ERR_PARSE = 3,
  CI_ERR_VALIDATION = 4,
  CI_ERR_TEMPORAL = 5,
  CI_ERR_DIMENSION = 6,
  CI_ERR_PROVIDER = 7,
  CI_ERR_MISSING_ARTIFACT = 8,
  CI_ERR_RESPONSE = 9,
  CI_ERR_TRAINING = 10,
  CI_ERR_INTERNAL = 11
} ci_status;

/* Response error kinds reported by ci_parse_response. */
typedef enum ci_response_error {
  CI_RESPONSE_OK = 0,
  CI_RESPONSE_MALFORMED = 1,
  CI_RESPONSE_MISSING_KEY = 2,
  CI_RESPONSE_EXTRA_KEYS = 3,
  CI_RESPONSE_WRONG_LENGTH = 4,
  CI_RESPONSE_OUT_OF_RANGE = 5,
  CI_RESPONSE_NON_NUMERIC = 6
} ci_response_error;

CITEIMPACT_API const char* ci_version(void);
CITEIMPACT_API const char* ci_status_name(ci_status status);
/* Valid until the next failing call on the same thread. */
CITEIMPACT_API const char* ci_last_error(void);

typedef struct ci_corpus ci_corpus;

/* max_data_year <= 0 infers the last observed year. */
CITEIMPACT_API ci_status ci_corpus_load(const char* path, int max_data_year, ci_corpus** out);
CITEIMPACT_API ci_status ci_corpus_generate(size_t n, uint64_t seed, double planted_fraction,
                                            ci_corpus** out);
CITEIMPACT_API ci_status ci_corpus_save(const ci_corpus* corpus, const char* path);
CITEIMPACT_API ci_status ci_corpus_size(const ci_corpus* corpus, size_t* out);
/* report_csv_path may be NULL. */
CITEIMPACT_API ci_status ci_corpus_validate(const ci_corpus* corpus, const char* report_csv_path,
                                            size_t* violations);
CITEIMPACT_API void ci_corpus_free(ci_corpus* corpus);

/* Writes the label grid CSV. journal may be NULL for single-journal corpora. */
CITEIMPACT_API ci_status ci_label_export(const ci_corpus* corpus, const char* journal,
                                         const int* horizons, size_t n_horizons,
                                         const int* percents, size_t n_percents,
                                         const char* path);

/* labels[i] != 0 marks a positive. */
CITEIMPACT_API ci_status ci_auc_roc(const double* scores, const unsigned char* labels, size_t n,
                                    double* out);

/* Fills probabilities[0..n_years). lenient and error_kind may be NULL. */
CITEIMPACT_API ci_status ci_parse_response(const char* text, size_t n_years, double* probabilities,
                                           int* lenient, ci_response_error* error_kind);

typedef struct ci_overrides {
  int has_seed;
  uint64_t seed;
  const char* out; /* NULL keeps the config value */
  size_t workers;  /* 0 keeps the config value */
} ci_overrides;

typedef struct ci_pipeline ci_pipeline;

/* overrides may be NULL. */
CITEIMPACT_API ci_status ci_pipeline_open(const char* config_path, const ci_overrides* overrides,
                                          ci_pipeline** out);
/* stage is a stage name or "all". stage_exit_code receives the stage's own
 * status (nonzero when it ran but found problems); may be NULL. */
CITEIMPACT_API ci_status ci_pipeline_run(ci_pipeline* pipeline, const char* stage,
                                         int* stage_exit_code);
/* Human-readable log of the last run; owned by the pipeline. */
CITEIMPACT_API const char* ci_pipeline_summary(const ci_pipeline* pipeline);
CITEIMPACT_API void ci_pipeline_free(ci_pipeline* pipeline);

#ifdef __cplusplus
}
#endif

#endif
