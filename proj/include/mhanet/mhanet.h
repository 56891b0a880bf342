/* C interface to the mhanet library. Every function returns a status code;
 * on failure mhanet_last_error() describes the problem for the calling
 * thread. Handles are opaque and must be released with their _free call. */
#ifndef MHANET_MHANET_H
#define MHANET_MHANET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MHANET_API __declspec(dllexport)
#else
#define MHANET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mhanet_status {
  MHANET_OK = 0,
  MHANET_ERR_USAGE = 1,
  MHANET_ERR_CONFIG = 2,
  MHANET_ERR_DATA = 3,
  MHANET_ERR_NUMERICAL = 4,
  MHANET_ERR_DIMENSION = 5,
  MHANET_ERR_FORMAT = 6,
  MHANET_ERR_IO = 7,
  MHANET_ERR_INTERNAL = 8
} mhanet_status;

typedef struct mhanet_config mhanet_config;
typedef struct mhanet_result mhanet_result;

MHANET_API const char* mhanet_version(void);
MHANET_API const char* mhanet_status_name(mhanet_status status);
/* Message of the last failed call on this thread; "" if none. */
MHANET_API const char* mhanet_last_error(void);

MHANET_API mhanet_status mhanet_config_default(mhanet_config** out);
MHANET_API mhanet_status mhanet_config_load(const char* path, mhanet_config** out);
MHANET_API mhanet_status mhanet_config_parse(const char* json, mhanet_config** out);
/* Fully resolved JSON; the string lives until the handle is freed. */
MHANET_API mhanet_status mhanet_config_json(const mhanet_config* config, const char** out);
MHANET_API void mhanet_config_free(mhanet_config* config);

/* Trainable scalars for the config's model and ablation. */
MHANET_API mhanet_status mhanet_count_params(const mhanet_config* config, size_t* out);

/* Writes `subjects` synthetic EEGR recordings (S01.eegr, ...) into out_dir. */
MHANET_API mhanet_status mhanet_synth(const char* out_dir, size_t subjects, uint64_t seed,
                                      double class_gap);

MHANET_API mhanet_status mhanet_train(const mhanet_config* config, mhanet_result** out);
MHANET_API mhanet_status mhanet_eval(const char* checkpoint, const char* data_dir,
                                     mhanet_result** out);
/* `variants` is a comma list such as "ca,mta,mga,mta+ca,stc". */
MHANET_API mhanet_status mhanet_ablate(const mhanet_config* config, const char* variants,
                                       mhanet_result** out);

/* Headline accuracy: mean test accuracy for train, test accuracy for eval,
 * full-model mean accuracy for ablate. */
MHANET_API double mhanet_result_accuracy(const mhanet_result* result);
/* JSON document and human-readable summary; valid until the handle is freed. */
MHANET_API const char* mhanet_result_json(const mhanet_result* result);
MHANET_API const char* mhanet_result_text(const mhanet_result* result);
MHANET_API void mhanet_result_free(mhanet_result* result);

#ifdef __cplusplus
}
#endif

#endif
