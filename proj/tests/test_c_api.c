/* Compiled as C: checks the public header is plain C and exercises the
 * status/error contract of the shared library. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "tinyvib/tinyvib.h"

static int failures = 0;

#define EXPECT(cond)                                              \
  do {                                                            \
    if (!(cond)) {                                                \
      fprintf(stderr, "%s:%d: FAILED %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                 \
    }                                                             \
  } while (0)

static void test_status_and_errors(void) {
  tv_config* cfg = NULL;
  EXPECT(strcmp(tv_status_name(TV_OK), "ok") == 0);
  EXPECT(strcmp(tv_status_name(TV_ERR_IO), "io") == 0);
  EXPECT(tv_param_budget_limit() == 12892);
  EXPECT(strcmp(tv_stage_name(0), "normalize") == 0);
  EXPECT(strcmp(tv_stage_name(6), "cnn_inference") == 0);

  EXPECT(tv_config_new(NULL) == TV_ERR_INVALID_ARGUMENT);
  EXPECT(strlen(tv_last_error()) > 0);

  EXPECT(tv_config_parse("nope = 1\n", &cfg) == TV_ERR_FORMAT);
  EXPECT(cfg == NULL);
  EXPECT(strstr(tv_last_error(), "nope") != NULL);

  tv_model* model = NULL;
  EXPECT(tv_model_load("/nonexistent/model.tvml", &model) == TV_ERR_IO);
  EXPECT(model == NULL);
}

static void test_config_roundtrip(void) {
  tv_config* cfg = NULL;
  tv_config* again = NULL;
  char* text = NULL;
  char* value = NULL;
  char* report = NULL;
  size_t count = 99;
  uint64_t h1 = 0, h2 = 0;

  EXPECT(tv_config_new(&cfg) == TV_OK);
  EXPECT(tv_config_set(cfg, "seed", "5") == TV_OK);
  EXPECT(tv_config_get(cfg, "seed", &value) == TV_OK);
  EXPECT(value && strcmp(value, "5") == 0);
  tv_string_free(value);

  EXPECT(tv_config_validate(cfg, &count, &report) == TV_OK);
  EXPECT(count == 0);
  tv_string_free(report);

  EXPECT(tv_config_set(cfg, "split.ratio", "1.2") == TV_OK);
  EXPECT(tv_config_validate(cfg, &count, &report) == TV_OK);
  EXPECT(count == 1);
  EXPECT(report && strstr(report, "split.ratio") != NULL);
  tv_string_free(report);
  EXPECT(tv_config_set(cfg, "split.ratio", "0.783") == TV_OK);

  EXPECT(tv_config_emit(cfg, &text) == TV_OK);
  EXPECT(tv_config_parse(text, &again) == TV_OK);
  EXPECT(tv_config_hash(cfg, &h1) == TV_OK);
  EXPECT(tv_config_hash(again, &h2) == TV_OK);
  EXPECT(h1 == h2);
  tv_string_free(text);
  tv_config_free(again);
  tv_config_free(cfg);
}

static void test_dataset_and_preprocess(void) {
  tv_config* cfg = NULL;
  tv_dataset* ds = NULL;
  tv_dataset* train = NULL;
  tv_dataset* test = NULL;
  size_t n = 0, spa = 0, dims[3] = {0, 0, 0};
  double fs = 0.0;
  int label = -1;
  float* buf = NULL;
  float* feat = NULL;

  EXPECT(tv_config_new(&cfg) == TV_OK);
  EXPECT(tv_dataset_synth(cfg, 6, 4, &ds) == TV_OK);
  EXPECT(tv_dataset_size(ds, &n) == TV_OK && n == 10);
  EXPECT(tv_dataset_count_label(ds, TV_LABEL_BAD, &n) == TV_OK && n == 4);

  buf = (float*)malloc(3 * 8000 * sizeof(float));
  EXPECT(tv_dataset_sample(ds, 0, buf, 10, &spa, &fs, &label) == TV_ERR_SHAPE_MISMATCH);
  EXPECT(tv_dataset_sample(ds, 0, buf, 3 * 8000, &spa, &fs, &label) == TV_OK);
  EXPECT(spa == 8000);
  EXPECT(fs == 8000.0);
  EXPECT(label == TV_LABEL_GOOD || label == TV_LABEL_BAD);
  EXPECT(tv_dataset_sample(ds, 10, buf, 3 * 8000, &spa, &fs, &label) != TV_OK);

  feat = (float*)malloc(4 * 65 * 3 * sizeof(float));
  EXPECT(tv_preprocess(cfg, buf, spa, fs, feat, 4 * 65 * 3, dims) == TV_OK);
  EXPECT(dims[0] == 3 && dims[1] == 4 && dims[2] == 65);
  EXPECT(isfinite(feat[0]));
  EXPECT(tv_preprocess(cfg, buf, spa, fs, feat, 10, dims) == TV_ERR_SHAPE_MISMATCH);

  EXPECT(tv_dataset_split(ds, 0.8, 1, 1, &train, &test) == TV_OK);
  EXPECT(tv_dataset_size(train, &n) == TV_OK && n == 8);
  EXPECT(tv_dataset_size(test, &n) == TV_OK && n == 2);
  EXPECT(tv_dataset_split(ds, 1.5, 1, 1, &train, &test) == TV_ERR_INVALID_ARGUMENT);

  free(feat);
  free(buf);
  tv_dataset_free(train);
  tv_dataset_free(test);
  tv_dataset_free(ds);
  tv_config_free(cfg);
}

static void test_energy(void) {
  double v1[4], v2[4];
  tv_energy_report r;
  int i;
  for (i = 0; i < 4; ++i) {
    v2[i] = 2.987;
    v1[i] = 2.987 + 0.31807;
  }
  EXPECT(tv_energy_compute(v1, v2, 4, 10000.0, 10.0, 0.0845, &r) == TV_OK);
  EXPECT(fabs(r.p_avg - 0.0949) / 0.0949 < 0.005);
  EXPECT(fabs(r.epi - 8.022e-3) / 8.022e-3 < 0.005);
  EXPECT(tv_energy_compute(v1, v2, 4, 10000.0, 0.0, 0.0845, &r) == TV_ERR_INVALID_ARGUMENT);
  EXPECT(tv_energy_compute(v1, v2, 0, 10000.0, 10.0, 0.0845, &r) != TV_OK);
}

int main(void) {
  printf("tinyvib %s\n", tv_version());
  test_status_and_errors();
  test_config_roundtrip();
  test_dataset_and_preprocess();
  test_energy();
  if (failures) {
    fprintf(stderr, "%d check(s) failed\n", failures);
    return 1;
  }
  printf("all C API checks passed\n");
  return 0;
}
