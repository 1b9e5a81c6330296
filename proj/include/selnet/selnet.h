/* selnet: selective-regression experiments behind a plain C interface.
 *
 * Every function returns SELNET_OK (0) on success, SELNET_EINVAL (1) for bad
 * arguments or configs, SELNET_ERUNTIME (2) for failures while running
 * (I/O, non-finite losses, ...). selnet_last_error() describes the most
 * recent failure on the calling thread. Strings returned through out-params
 * are heap-allocated; release them with selnet_string_free().
 */
#ifndef SELNET_H
#define SELNET_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define SELNET_OK 0
#define SELNET_EINVAL 1
#define SELNET_ERUNTIME 2

const char* selnet_version(void);
const char* selnet_last_error(void);
void selnet_string_free(char* s);

/* An experiment handle wraps one validated config. */
typedef struct selnet_experiment selnet_experiment;

int selnet_experiment_open(const char* config_path, selnet_experiment** out);
int selnet_experiment_open_json(const char* config_json, selnet_experiment** out);
void selnet_experiment_close(selnet_experiment* exp);

/* Field overrides, applied after load; each re-validates the config. */
int selnet_experiment_set_mode(selnet_experiment* exp, const char* mode); /* "gumbel" | "soft" */
int selnet_experiment_set_coverage(selnet_experiment* exp, double coverage);
int selnet_experiment_set_seed(selnet_experiment* exp, uint64_t seed); /* replaces the seed list */
int selnet_experiment_set_output_dir(selnet_experiment* exp, const char* dir);
int selnet_experiment_set_combine_train_val(selnet_experiment* exp, int enabled);
int selnet_experiment_config_json(selnet_experiment* exp, char** out_json);

/* Trains one trial per configured seed at the configured target coverage;
 * writes one run-record JSON per trial into the output dir and returns a
 * JSON summary (record paths, per-seed metric values, mean). */
int selnet_experiment_train(selnet_experiment* exp, char** out_summary_json);

/* Full coverage-grid x seed sweep with resume; writes records plus
 * report.csv and returns the aggregated table as CSV text. */
int selnet_experiment_sweep(selnet_experiment* exp, int jobs, char** out_report_csv);

/* Aggregates all run records found in a directory into CSV text. */
int selnet_report(const char* run_dir, char** out_report_csv);

/* Runs the gradient/sampler check battery. Returns SELNET_ERUNTIME if any
 * check fails; the report text is returned either way. */
int selnet_gradcheck(char** out_report_text);

#ifdef __cplusplus
}
#endif

#endif /* SELNET_H */
