/* C interface to the adapt3r observation encoder. */
#ifndef ADAPT3R_ADAPT3R_H
#define ADAPT3R_ADAPT3R_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define A3R_API __declspec(dllexport)
#else
#define A3R_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum a3r_status {
  A3R_OK = 0,
  A3R_ERR_PARSE = 1,
  A3R_ERR_DIMENSION = 2,
  A3R_ERR_IO = 3,
  A3R_ERR_INVALID_ARGUMENT = 4,
  A3R_ERR_BAD_MAGIC = 5,
  A3R_ERR_DTYPE = 6,
  A3R_ERR_TRUNCATED = 7,
  A3R_ERR_SHAPE = 8,
  A3R_ERR_NUMERIC = 9,
  A3R_ERR_STATE = 10,
  A3R_ERR_INVALID_HANDLE = 11,
  A3R_ERR_BUSY = 12,
  A3R_ERR_INTERNAL = 13
} a3r_status;

A3R_API const char* a3r_version(void);
A3R_API const char* a3r_status_string(a3r_status status);
/* Message of the last failed call on this thread; empty after a successful call. */
A3R_API const char* a3r_last_error(void);
/* Process exit code for a status: 0 ok, 1 parse/format, 2 dimension/shape, 3 I/O, 4 numeric, 5 other. */
A3R_API int a3r_exit_code(a3r_status status);

typedef struct a3r_encoder a3r_encoder;

/* config_json: EncoderConfig object; NULL or "" selects the defaults. */
A3R_API a3r_status a3r_encoder_create(const char* config_json, a3r_encoder** out);
/* Destroying NULL or an already destroyed handle is a no-op. */
A3R_API void a3r_encoder_destroy(a3r_encoder* enc);
/* *out_json is released with a3r_free_string. */
A3R_API a3r_status a3r_encoder_config(const a3r_encoder* enc, char** out_json);
A3R_API a3r_status a3r_encoder_dims(const a3r_encoder* enc, size_t* d, size_t* d_e, size_t* p, size_t* token_width);
A3R_API a3r_status a3r_encoder_save_checkpoint(const a3r_encoder* enc, const char* dir);
A3R_API a3r_status a3r_encoder_load_checkpoint(a3r_encoder* enc, const char* dir);

typedef struct a3r_camera_view {
  uint32_t width, height;
  const float* rgb;          /* height x width x 3, values in [0, 1] */
  const float* depth;        /* height x width, meters; NaN or <= 0 is invalid */
  double fx, fy, cx, cy;
  const double* extrinsic;   /* 16 values, row-major 4x4 camera -> base */
  const float* features;     /* feature_h x feature_w x feature_d, or NULL for the built-in backbone */
  uint32_t feature_h, feature_w, feature_d;
} a3r_camera_view;

typedef struct a3r_observation_view {
  const a3r_camera_view* cameras;
  size_t n_cameras;
  const double* ee_pose;     /* 16 values, row-major 4x4 end effector -> base */
  double gripper;
  const char* instruction;   /* used when language is NULL and the language flag is on */
  const float* language;     /* optional precomputed embedding of length language_dim (= d) */
  size_t language_dim;
} a3r_observation_view;

/* Encodes one observation in the configured precision. z has d_e entries, attention p entries;
 * either output may be NULL. Keeps the tokens for a3r_grad_z. */
A3R_API a3r_status a3r_encode(a3r_encoder* enc, const a3r_observation_view* obs, double* z, size_t z_len,
                              double* attention, size_t attention_len);

/* Backpropagates an upstream gradient dL/dz (d_e entries) from the last a3r_encode in f64.
 * Results are read with a3r_param_grad and a3r_token_grad. A3R_ERR_STATE before any encode. */
A3R_API a3r_status a3r_grad_z(a3r_encoder* enc, const double* upstream, size_t len);

A3R_API a3r_status a3r_param_count(const a3r_encoder* enc, size_t* count);
/* *name stays valid for the handle's lifetime. */
A3R_API a3r_status a3r_param_info(const a3r_encoder* enc, size_t index, const char** name, size_t* numel,
                                  int* trainable);
A3R_API a3r_status a3r_param_value(const a3r_encoder* enc, size_t index, double* out, size_t len);
A3R_API a3r_status a3r_param_set_value(a3r_encoder* enc, size_t index, const double* values, size_t len);
A3R_API a3r_status a3r_param_grad(const a3r_encoder* enc, size_t index, double* out, size_t len);
/* Gradient w.r.t. the p x token_width token matrix, row-major. */
A3R_API a3r_status a3r_token_grad(const a3r_encoder* enc, double* out, size_t len);

/* Runs a whole command (encode, bench, train, ablate, make-dataset, render) from a JSON request.
 * *manifest_json receives the run manifest and is released with a3r_free_string. */
A3R_API a3r_status a3r_run(const char* command, const char* request_json, char** manifest_json);

A3R_API void a3r_free_string(char* s);

#ifdef __cplusplus
}
#endif

#endif /* ADAPT3R_ADAPT3R_H */
