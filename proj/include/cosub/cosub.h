/* Public C interface of the cosub library.
 *
 * All functions return a cosub_status; on failure a description is available
 * from cosub_last_error() on the same thread. Objects are opaque and owned by
 * the caller once created; release them with the matching *_free function. */
#ifndef COSUB_COSUB_H
#define COSUB_COSUB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(COSUB_BUILDING_LIBRARY)
#    define COSUB_API __declspec(dllexport)
#  else
#    define COSUB_API __declspec(dllimport)
#  endif
#else
#  define COSUB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Also the process exit codes of the command-line tool. */
typedef enum cosub_status {
  COSUB_OK = 0,
  COSUB_ERR_INTERNAL = 1,
  COSUB_ERR_CONFIG = 2,
  COSUB_ERR_IO = 3,
  COSUB_ERR_INFEASIBLE = 4,
  COSUB_ERR_NUMERICAL = 5
} cosub_status;

typedef enum cosub_command {
  COSUB_CMD_GENERATE = 0,
  COSUB_CMD_FIT = 1,
  COSUB_CMD_EXPERIMENT = 2,
  COSUB_CMD_TYPEI = 3
} cosub_command;

typedef struct cosub_config cosub_config;
typedef struct cosub_result cosub_result;
typedef struct cosub_dataset cosub_dataset;

typedef struct cosub_run_options {
  const char* out_dir; /* NULL keeps the configured directory */
  int has_seed;
  uint64_t seed;
  int trace;
  int dump_phi;
} cosub_run_options;

COSUB_API const char* cosub_version(void);
COSUB_API const char* cosub_last_error(void);
COSUB_API const char* cosub_status_string(int status);
COSUB_API void cosub_string_free(char* s);

/* preset may be NULL or empty. */
COSUB_API int cosub_config_load(const char* path, const char* preset, cosub_config** out);
COSUB_API int cosub_config_parse(const char* json_text, const char* preset, cosub_config** out);
/* Resolved configuration as JSON; free with cosub_string_free. */
COSUB_API int cosub_config_to_json(const cosub_config* cfg, char** out_json);
COSUB_API void cosub_config_free(cosub_config* cfg);

/* Runs a command. The result (when out is non-NULL) is created even when the
 * command fails, so messages and partial outputs can be inspected. */
COSUB_API int cosub_run(const cosub_config* cfg, cosub_command command, const cosub_run_options* options,
                        cosub_result** out);
COSUB_API int cosub_result_status(const cosub_result* r);
COSUB_API const char* cosub_result_message(const cosub_result* r);
COSUB_API const char* cosub_result_summary_json(const cosub_result* r);
COSUB_API size_t cosub_result_output_count(const cosub_result* r);
COSUB_API const char* cosub_result_output(const cosub_result* r, size_t index);
COSUB_API void cosub_result_free(cosub_result* r);

/* CSV with columns x1..xd, a, y (aux columns are ignored). */
COSUB_API int cosub_dataset_load_csv(const char* path, cosub_dataset** out);
/* Draws the dataset configured in cfg (generate sources only). */
COSUB_API int cosub_dataset_generate(const cosub_config* cfg, uint64_t seed, cosub_dataset** out);
COSUB_API size_t cosub_dataset_rows(const cosub_dataset* ds);
COSUB_API size_t cosub_dataset_cols(const cosub_dataset* ds);
/* Copies a column: "a", "y", a feature name or an aux name. len must equal rows. */
COSUB_API int cosub_dataset_column(const cosub_dataset* ds, const char* name, double* out, size_t len);
COSUB_API void cosub_dataset_free(cosub_dataset* ds);

/* Elementwise kernels. */
COSUB_API int cosub_overlap_h(const double* e_hat, size_t n, double alpha, double* out_h);
COSUB_API int cosub_aiptw_phi(const double* e_hat, const double* mu0, const double* mu1, const int* a, const double* y,
                              size_t n, double* out_phi);
COSUB_API int cosub_iptw_phi(const double* e_hat, const int* a, const double* y, size_t n, double* out_phi);
/* f = sum(s phi) / sum(s); out_w (may be NULL) receives df/ds. */
COSUB_API int cosub_subgroup_functional(const double* s, const double* phi, size_t n, double* out_f, double* out_w);

#ifdef __cplusplus
}
#endif

#endif
