/*
 * tinyvib C API
 *
 * Opaque handles for run configurations, datasets and models. Every function
 * returns a tv_status; on failure a message is available from tv_last_error()
 * (thread-local, valid until the next failing call on the same thread).
 * Strings returned through char** are owned by the caller and released with
 * tv_string_free(). Handles are released with the matching *_free function.
 */
#ifndef TINYVIB_H
#define TINYVIB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(TINYVIB_BUILDING_LIBRARY)
#    define TV_API __declspec(dllexport)
#  else
#    define TV_API __declspec(dllimport)
#  endif
#else
#  define TV_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tv_status {
  TV_OK = 0,
  TV_ERR_INVALID_ARGUMENT = 1,
  TV_ERR_DEGENERATE_INPUT = 2,
  TV_ERR_SHAPE_MISMATCH = 3,
  TV_ERR_EMPTY_INPUT = 4,
  TV_ERR_IO = 5,
  TV_ERR_FORMAT = 6,
  TV_ERR_BUDGET_EXCEEDED = 7,
  TV_ERR_MISSING_QUANTIZATION = 8,
  TV_ERR_INTERNAL = 9
} tv_status;

enum { TV_LABEL_GOOD = 0, TV_LABEL_BAD = 1 };
enum { TV_STAGE_COUNT = 7 };

typedef struct tv_config tv_config;
typedef struct tv_dataset tv_dataset;
typedef struct tv_model tv_model;

typedef struct tv_stage_timings {
  int64_t stage_ns[TV_STAGE_COUNT]; /* pipeline order, see tv_stage_name() */
  int64_t end_to_end_ns;
  size_t repetitions;
} tv_stage_timings;

typedef struct tv_energy_report {
  double vdd_avg; /* V */
  double idd_avg; /* A */
  double p_avg;   /* W */
  double epi;     /* J */
  double t_infer; /* s */
} tv_energy_report;

typedef struct tv_run_summary {
  size_t n_train;
  size_t n_test;
  size_t n_train_good;
  size_t n_test_good;
  double float_accuracy;
  double int8_accuracy;
  size_t param_bytes;
  size_t activation_bytes;
  size_t stop_epoch;
  uint64_t config_hash;
  uint64_t model_hash;
} tv_run_summary;

/* --- general ------------------------------------------------------------- */

TV_API const char* tv_version(void);
TV_API const char* tv_status_name(tv_status status);
TV_API const char* tv_last_error(void);
TV_API void tv_string_free(char* s);
TV_API const char* tv_stage_name(size_t stage);
TV_API size_t tv_param_budget_limit(void);

/* --- run configuration ---------------------------------------------------- */

TV_API tv_status tv_config_new(tv_config** out);
TV_API tv_status tv_config_parse(const char* text, tv_config** out);
TV_API tv_status tv_config_load(const char* path, tv_config** out);
TV_API tv_status tv_config_set(tv_config* cfg, const char* key, const char* value);
TV_API tv_status tv_config_get(const tv_config* cfg, const char* key, char** value);
TV_API tv_status tv_config_emit(const tv_config* cfg, char** text);
/* One "field: message" line per violation; *count == 0 means valid. */
TV_API tv_status tv_config_validate(const tv_config* cfg, size_t* count, char** report);
TV_API tv_status tv_config_hash(const tv_config* cfg, uint64_t* hash);
TV_API void tv_config_free(tv_config* cfg);

/* --- datasets -------------------------------------------------------------- */

TV_API tv_status tv_dataset_synth(const tv_config* cfg, size_t n_good, size_t n_bad, tv_dataset** out);
TV_API tv_status tv_dataset_load(const char* manifest_path, tv_dataset** out);
/* Writes one raw file per sample and manifest.txt into dir. */
TV_API tv_status tv_dataset_save(const tv_dataset* ds, const char* dir);
TV_API tv_status tv_dataset_size(const tv_dataset* ds, size_t* n);
TV_API tv_status tv_dataset_count_label(const tv_dataset* ds, int label, size_t* n);
/* Copies sample i as planar x|y|z into buf (capacity in floats). */
TV_API tv_status tv_dataset_sample(const tv_dataset* ds, size_t i, float* buf, size_t capacity,
                                   size_t* samples_per_axis, double* sample_rate, int* label);
TV_API tv_status tv_dataset_split(const tv_dataset* ds, double ratio, uint64_t seed, int stratified,
                                  tv_dataset** train, tv_dataset** test);
TV_API void tv_dataset_free(tv_dataset* ds);

/* Splits a manifest without loading sample data; writes train.txt and test.txt. */
TV_API tv_status tv_manifest_split(const char* manifest_path, double ratio, uint64_t seed, int stratified,
                                   const char* out_dir, size_t* n_train, size_t* n_test);

/* Reads an interleaved float32-LE recording, segments it by sliding RMS and
 * cuts every segment into one-second windows carrying `label`. */
TV_API tv_status tv_segment_recording(const char* raw_path, size_t rms_window, double threshold, int label,
                                      tv_dataset** out, size_t* n_segments);

/* --- preprocessing ---------------------------------------------------------- */

/* planar: x|y|z, each samples_per_axis long. out receives [axis][time][freq];
 * dims receives the three extents. */
TV_API tv_status tv_preprocess(const tv_config* cfg, const float* planar, size_t samples_per_axis,
                               double sample_rate, float* out, size_t capacity, size_t dims[3]);
TV_API tv_status tv_preprocess_export(const tv_config* cfg, const tv_dataset* ds, size_t index, const char* path);

/* --- models ----------------------------------------------------------------- */

TV_API tv_status tv_model_train(const tv_config* cfg, const tv_dataset* train, tv_model** out);
TV_API tv_status tv_model_history_csv(const tv_model* model, char** csv);
TV_API tv_status tv_model_quantize(tv_model* model, const tv_dataset* calib_pool, size_t n_calib, uint64_t seed);
TV_API tv_status tv_model_load(const char* path, tv_model** out);
TV_API tv_status tv_model_save(const tv_model* model, const char* path);
TV_API tv_status tv_model_is_quantized(const tv_model* model, int* quantized);
TV_API tv_status tv_model_param_bytes(const tv_model* model, size_t* bytes);
TV_API tv_status tv_model_activation_bytes(const tv_model* model, size_t* bytes);
TV_API tv_status tv_model_metadata(const tv_model* model, const char* key, char** value);
/* int8 != 0 evaluates the integer pipeline. */
TV_API tv_status tv_model_evaluate(const tv_model* model, const tv_dataset* ds, int int8, double* accuracy);
TV_API tv_status tv_model_predict(const tv_model* model, const float* planar, size_t samples_per_axis,
                                  double sample_rate, int int8, int* label);
TV_API void tv_model_free(tv_model* model);

/* --- benchmarking ------------------------------------------------------------ */

TV_API tv_status tv_bench_stages(const tv_model* model, const tv_dataset* ds, size_t index, size_t reps,
                                 tv_stage_timings* out);
TV_API tv_status tv_energy_compute(const double* v1, const double* v2, size_t n, double sample_rate, double r_shunt,
                                   double t_infer, tv_energy_report* out);
TV_API tv_status tv_energy_from_trace_file(const char* path, double t_infer, tv_energy_report* out);
/* Any of timings, energy, model may be NULL. */
TV_API tv_status tv_report_csv(const tv_stage_timings* timings, const tv_energy_report* energy,
                               const tv_model* model, char** csv);
TV_API tv_status tv_report_text(const tv_stage_timings* timings, const tv_energy_report* energy,
                                const tv_model* model, char** text);

/* --- full pipeline ------------------------------------------------------------ */

TV_API tv_status tv_run_pipeline(const tv_config* cfg, int verbose, tv_run_summary* out);

#ifdef __cplusplus
}
#endif

#endif /* TINYVIB_H */
