/* Exercises the shared library through the C header only. */
#define _POSIX_C_SOURCE 200809L
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "mhanet/mhanet.h"

static int failures = 0;

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: CHECK(%s) failed; last error: %s\n",   \
              __FILE__, __LINE__, #cond, mhanet_last_error());        \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

static void test_status_names(void) {
  CHECK(strcmp(mhanet_status_name(MHANET_OK), "ok") == 0);
  CHECK(strcmp(mhanet_status_name(MHANET_ERR_CONFIG), "config") == 0);
  CHECK(strcmp(mhanet_status_name(MHANET_ERR_NUMERICAL), "numerical") == 0);
  CHECK(strlen(mhanet_version()) > 0);
}

static void test_config(void) {
  mhanet_config* cfg = NULL;
  CHECK(mhanet_config_default(&cfg) == MHANET_OK);
  size_t n = 0;
  CHECK(mhanet_count_params(cfg, &n) == MHANET_OK);
  CHECK(n == 2259);
  const char* json = NULL;
  CHECK(mhanet_config_json(cfg, &json) == MHANET_OK);
  CHECK(strstr(json, "\"patience\": 15") != NULL);
  mhanet_config_free(cfg);

  cfg = NULL;
  CHECK(mhanet_config_parse("{\"ablation\": \"stc\"}", &cfg) == MHANET_OK);
  CHECK(mhanet_count_params(cfg, &n) == MHANET_OK);
  CHECK(n == 2259 - 171);
  mhanet_config_free(cfg);

  cfg = NULL;
  CHECK(mhanet_config_parse("{\"bogus\": 1}", &cfg) == MHANET_ERR_CONFIG);
  CHECK(cfg == NULL);
  CHECK(strstr(mhanet_last_error(), "bogus") != NULL);
  CHECK(mhanet_config_parse("{not json", &cfg) == MHANET_ERR_CONFIG);
  CHECK(mhanet_config_load("/nonexistent/cfg.json", &cfg) == MHANET_ERR_CONFIG);
  CHECK(mhanet_config_parse(NULL, &cfg) == MHANET_ERR_USAGE);
  CHECK(mhanet_count_params(NULL, &n) == MHANET_ERR_USAGE);
  mhanet_config_free(NULL);
  mhanet_result_free(NULL);
}

static void test_round_trip(const char* root) {
  char data[512], out[512], json[2048], ckpt[600];
  snprintf(data, sizeof data, "%s/data", root);
  snprintf(out, sizeof out, "%s/out", root);
  CHECK(mhanet_synth(data, 1, 9, 4.0) == MHANET_OK);
  CHECK(mhanet_synth(data, 1, 9, 0.0) == MHANET_ERR_CONFIG);

  snprintf(json, sizeof json,
           "{\"data_dir\": \"%s\", \"output_dir\": \"%s\", \"window_seconds\": 0.125,"
           " \"train_hop_seconds\": 0.125, \"eval_hop_seconds\": 0.125, \"max_epochs\": 2,"
           " \"patience\": 1}",
           data, out);
  mhanet_config* cfg = NULL;
  CHECK(mhanet_config_parse(json, &cfg) == MHANET_OK);
  mhanet_result* trained = NULL;
  CHECK(mhanet_train(cfg, &trained) == MHANET_OK);
  const double acc = mhanet_result_accuracy(trained);
  CHECK(acc >= 0.0 && acc <= 1.0);
  CHECK(strstr(mhanet_result_json(trained), "mean_test_accuracy") != NULL);
  CHECK(strstr(mhanet_result_text(trained), "S01") != NULL);

  snprintf(ckpt, sizeof ckpt, "%s/S01/checkpoint.mhck", out);
  mhanet_result* evaluated = NULL;
  CHECK(mhanet_eval(ckpt, data, &evaluated) == MHANET_OK);
  CHECK(mhanet_result_accuracy(evaluated) == acc);
  mhanet_result_free(evaluated);

  evaluated = NULL;
  CHECK(mhanet_eval(data, data, &evaluated) != MHANET_OK); /* a directory is no checkpoint */
  CHECK(evaluated == NULL);
  mhanet_result_free(trained);
  mhanet_config_free(cfg);

  snprintf(json, sizeof json, "{\"data_dir\": \"%s/missing\"}", root);
  CHECK(mhanet_config_parse(json, &cfg) == MHANET_OK);
  CHECK(mhanet_train(cfg, &trained) == MHANET_ERR_DATA);
  mhanet_config_free(cfg);
}

int main(void) {
  char root[] = "/tmp/mhanet_capi_XXXXXX";
  if (mkdtemp(root) == NULL) {
    perror("mkdtemp");
    return 1;
  }
  test_status_names();
  test_config();
  test_round_trip(root);
  char cmd[600];
  snprintf(cmd, sizeof cmd, "rm -rf '%s'", root);
  if (system(cmd) != 0) fprintf(stderr, "could not remove %s\n", root);
  if (failures) {
    fprintf(stderr, "%d check(s) failed\n", failures);
    return 1;
  }
  puts("C API: all checks passed");
  return 0;
}
