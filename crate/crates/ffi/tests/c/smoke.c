#include <math.h>
#include <stdio.h>
#include <string.h>

#include "marginflow.h"

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      const char *msg = mf_last_error_message();                      \
      fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,          \
              msg ? msg : "no message");                              \
      return 1;                                                       \
    }                                                                 \
  } while (0)

static const char *CONFIG =
    "[dataset]\n"
    "named = \"linear2d_aniso\"\n"
    "[model]\n"
    "kind = \"linear\"\n"
    "[loss]\n"
    "kind = \"logistic\"\n"
    "[optimizer]\n"
    "method = \"rmsprop\"\n"
    "mode = \"flow\"\n";

int main(int argc, char **argv) {
  CHECK(argc == 2);
  CHECK(strlen(mf_version()) > 0);

  /* 1.2a + 2.1b = 1 and 2a + 1.05b = 1 */
  double xs[] = {1.2, 2.1, -2.0, -1.05, 3.4, 0.0, -4.0, -1.5};
  double ys[] = {1.0, -1.0, 1.0, -1.0};
  MfDataset *data = NULL;
  CHECK(mf_dataset_new(xs, ys, 4, 2, &data) == MF_STATUS_OK);
  double w[2], margin = 0.0;
  CHECK(mf_svm_oracle(data, NULL, w, 2, &margin) == MF_STATUS_OK);
  CHECK(fabs(w[0] - 5.0 / 14.0) < 1e-12 && fabs(w[1] - 40.0 / 147.0) < 1e-12);
  CHECK(fabs(margin - 1.0 / hypot(w[0], w[1])) < 1e-12);
  CHECK(mf_svm_oracle(data, NULL, w, 1, NULL) == MF_STATUS_BUFFER_TOO_SMALL);
  mf_dataset_free(data);

  MfConfig *cfg = NULL;
  CHECK(mf_config_from_toml("[dataset]\nnmaed = 1\n", NULL, &cfg) == MF_STATUS_CONFIG);
  CHECK(cfg == NULL && strstr(mf_last_error_message(), "nmaed") != NULL);
  CHECK(mf_config_from_toml(CONFIG, NULL, &cfg) == MF_STATUS_OK);

  MfRunResult *run = NULL;
  CHECK(mf_run(cfg, argv[1], 2000, &run) == MF_STATUS_OK);
  size_t len = 0;
  CHECK(mf_run_final_params(run, NULL, 0, &len) == MF_STATUS_BUFFER_TOO_SMALL && len == 2);
  CHECK(mf_run_final_params(run, w, 2, &len) == MF_STATUS_OK);
  char *json = NULL;
  CHECK(mf_run_summary_json(run, &json) == MF_STATUS_OK);
  CHECK(strstr(json, "\"method\":\"rmsprop\"") != NULL);
  mf_string_free(json);
  mf_run_free(run);
  mf_config_free(cfg);

  printf("ok %.6f %.6f\n", w[0], w[1]);
  return 0;
}
