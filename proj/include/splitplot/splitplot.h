/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the split-plot mean test library.
 *
 * Objects are opaque handles created by the library and released with the
 * matching *_free function. Every fallible call returns an sp_status; the
 * message for the most recent failure on the calling thread is available
 * from sp_last_error().
 */
#ifndef SPLITPLOT_SPLITPLOT_H
#define SPLITPLOT_SPLITPLOT_H

#include <stddef.h>
#include <stdint.h>

#if defined(SPLITPLOT_BUILDING_LIBRARY)
#define SP_API __attribute__((visibility("default")))
#else
#define SP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sp_status {
  SP_OK = 0,
  SP_ERROR_INTERNAL = 1,
  SP_ERROR_USAGE = 2,      /* bad arguments, configuration or unsupported request */
  SP_ERROR_DATA = 3,       /* unreadable or invalid input data, invalid hypothesis */
  SP_ERROR_DEGENERATE = 4  /* numerical degeneracy */
} sp_status;

typedef enum sp_flavor {
  SP_FLAVOR_A = 0,
  SP_FLAVOR_ASTAR = 1,
  SP_FLAVOR_B = 2,
  SP_FLAVOR_BSTAR = 3
} sp_flavor;

typedef enum sp_rule { SP_RULE_Z = 0, SP_RULE_CHI1 = 1, SP_RULE_KF = 2 } sp_rule;

typedef struct sp_sample sp_sample;
typedef struct sp_hypothesis sp_hypothesis;
typedef struct sp_report sp_report;

typedef struct sp_validation {
  double asymmetry;
  double idempotence_defect;
  double block_transpose_defect;
  size_t rank;
  int passed;
} sp_validation;

SP_API const char* sp_version(void);
/* Message of the last failed call on this thread; empty when none. */
SP_API const char* sp_last_error(void);

/* Samples: manifest lists one CSV file per group. */
SP_API sp_status sp_sample_load(const char* manifest, int skip_header, sp_sample** out);
SP_API void sp_sample_free(sp_sample* sample);
SP_API size_t sp_sample_groups(const sp_sample* sample);
SP_API size_t sp_sample_dim(const sp_sample* sample, size_t group);
SP_API size_t sp_sample_size(const sp_sample* sample, size_t group);

/* Hypotheses: "A", "B" or a CSV matrix matching the sample's dimensions. */
SP_API sp_status sp_hypothesis_for_sample(const char* source, const sp_sample* sample, sp_hypothesis** out);
SP_API void sp_hypothesis_free(sp_hypothesis* hypothesis);
/* Structural check of a square CSV matrix (single block). */
SP_API sp_status sp_validate_hypothesis_file(const char* path, sp_validation* out);

/* One test. The report keeps copies of everything it needs. */
SP_API sp_status sp_run_test(const sp_sample* sample, const sp_hypothesis* hypothesis, double alpha, sp_flavor flavor,
                             uint64_t seed, sp_report** out);
SP_API void sp_report_free(sp_report* report);
SP_API double sp_report_statistic(const sp_report* report);
SP_API int sp_report_degenerate(const sp_report* report);
/* Returns 0 when f_hat is absent. */
SP_API int sp_report_fhat(const sp_report* report, double* fhat);
/* Returns 0 when the rule has no decision; otherwise fills the outputs. */
SP_API int sp_report_decision(const sp_report* report, sp_rule rule, int* reject, double* threshold);
/* Owned by the report; valid until sp_report_free. */
SP_API const char* sp_report_json(const sp_report* report);
SP_API const char* sp_report_text(const sp_report* report);

/* Monte Carlo experiment from a key=value config file. `output` overrides
 * the config's output path when non-NULL. */
SP_API sp_status sp_simulate(const char* config_path, const char* output, size_t* rows_written);

#ifdef __cplusplus
}
#endif

#endif /* SPLITPLOT_SPLITPLOT_H */
