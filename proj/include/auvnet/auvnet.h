#ifndef AUVNET_H
#define AUVNET_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define AUVNET_API __declspec(dllexport)
#else
#define AUVNET_API __attribute__((visibility("default")))
#endif

typedef enum auv_status {
  AUV_OK = 0,
  AUV_ERR_INVALID_ARGUMENT = 1,
  AUV_ERR_CONFIG = 2,
  AUV_ERR_DATA = 3,
  AUV_ERR_NUMERICAL = 4,
  AUV_ERR_SHAPE = 5,
  AUV_ERR_IO = 6,
  AUV_ERR_INTERNAL = 7
} auv_status;

typedef struct auv_model auv_model;
typedef struct auv_dataset auv_dataset;

/* Receives one progress line (UTF-8, no trailing newline). */
typedef void (*auv_log_fn)(const char* line, void* user);

AUVNET_API const char* auv_version(void);
AUVNET_API const char* auv_status_name(auv_status status);
/* Message of the last failure on the calling thread ("" if none). */
AUVNET_API const char* auv_last_error(void);
/* Frees strings returned through char** out-parameters. */
AUVNET_API void auv_string_free(char* s);

/* Models. The config is a JSON object; missing keys take defaults. */
AUVNET_API auv_status auv_model_create(const char* config_json, auv_model** out);
AUVNET_API auv_status auv_model_load(const char* path, auv_model** out);
AUVNET_API auv_status auv_model_save(auv_model* model, const char* path);
AUVNET_API void auv_model_free(auv_model* model);
AUVNET_API auv_status auv_model_config(const auv_model* model, char** config_json);
AUVNET_API auv_status auv_model_parameter_count(auv_model* model, size_t* count);
AUVNET_API auv_status auv_model_basis_hash(auv_model* model, uint64_t* hash);
AUVNET_API auv_status auv_model_generator_count(const auv_model* model, int* count);

/* Basis values of generator k at n UV points (uv: n*2 floats); writes
   n * channels floats to values. */
AUVNET_API auv_status auv_model_eval_basis(auv_model* model, int k, const float* uv, size_t n, float* values,
                                           size_t values_capacity, int* channels);

/* Preprocessed shape collections. */
AUVNET_API auv_status auv_dataset_load(const char* path, auv_dataset** out);
AUVNET_API void auv_dataset_free(auv_dataset* dataset);
AUVNET_API auv_status auv_dataset_size(const auv_dataset* dataset, int* count);
AUVNET_API auv_status auv_dataset_point_count(const auv_dataset* dataset, int index, int* count);

/* UV (n*2) and masks (n*K) of every sample of shape `index`. */
AUVNET_API auv_status auv_map_shape(auv_model* model, const auv_dataset* dataset, int index, float* uv,
                                    size_t uv_capacity, float* masks, size_t masks_capacity);

/* Pipeline command (gen-data, preprocess, train, train-toy, bake, transfer,
   fit-new, eval-seg, eval-landmarks, render-basis) configured by a JSON
   object. On success *report receives a JSON report (free with
   auv_string_free); report may be NULL. */
AUVNET_API auv_status auv_run(const char* command, const char* config_json, auv_log_fn log, void* user,
                              char** report);

/* NUL-separated, double-NUL-terminated list of command names. */
AUVNET_API const char* auv_commands(void);

AUVNET_API double auv_psnr(const float* a, const float* b, size_t n);

#ifdef __cplusplus
}
#endif

#endif
