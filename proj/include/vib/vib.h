/* C interface to the variational information bottleneck library. */
#ifndef VIB_VIB_H
#define VIB_VIB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(VIB_BUILDING_LIBRARY)
#    define VIB_API __declspec(dllexport)
#  else
#    define VIB_API __declspec(dllimport)
#  endif
#else
#  define VIB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. The numeric values double as CLI exit codes. */
typedef enum vib_status {
    VIB_OK = 0,
    VIB_ERR_INVALID = 1, /* bad argument or null handle */
    VIB_ERR_CONFIG = 2,
    VIB_ERR_NUMERIC = 3,
    VIB_ERR_IO = 4
} vib_status;

typedef enum vib_marginal { VIB_MARGINAL_GAUSSIAN = 0, VIB_MARGINAL_STUDENT = 1 } vib_marginal;

typedef struct vib_dataset vib_dataset;
typedef struct vib_model vib_model;

typedef struct vib_fit_options {
    double gamma;
    int n_units;
    int max_iters;
    double rel_tol;
    uint64_t seed;
    vib_marginal marginal;
} vib_fit_options;

/* Library version string, e.g. "0.1.0". */
VIB_API const char* vib_version(void);

/* Message of the last failed call on this thread ("" if none). */
VIB_API const char* vib_last_error(void);

/* Releases buffers returned by the library (strings, matrices). */
VIB_API void vib_free(void* ptr);

/* Number of threads used by the linear algebra kernels (0: default). */
VIB_API vib_status vib_set_num_threads(int n);

/* Matrices cross the boundary as row-major double buffers. */
VIB_API vib_status vib_matrix_read(const char* path, double** data, size_t* rows, size_t* cols);
VIB_API vib_status vib_matrix_write(const char* path, const double* data, size_t rows, size_t cols);

/* Copies X (n×dx) and Y (n×dy) and caches their second moments. */
VIB_API vib_status vib_dataset_create(const double* X, const double* Y, size_t n, size_t dx, size_t dy,
                                      vib_dataset** out);
VIB_API void vib_dataset_free(vib_dataset* data);

VIB_API void vib_fit_options_default(vib_fit_options* opts);

/* Alternating fit of a linear-encoder bottleneck. */
VIB_API vib_status vib_fit_linear(const vib_dataset* data, const vib_fit_options* opts, vib_model** out);

VIB_API vib_status vib_model_load(const char* path, vib_model** out);
VIB_API vib_status vib_model_save(const vib_model* model, const char* path);
VIB_API void vib_model_free(vib_model* model);
VIB_API vib_status vib_model_dims(const vib_model* model, size_t* n_units, size_t* dx, size_t* dy);

/* responses (n×n_units) = mean encoder responses for X (n×dx). */
VIB_API vib_status vib_model_encode(const vib_model* model, const double* X, size_t n, double* responses);
/* recon (n×dy) = decoder posterior mean for responses (n×n_units). */
VIB_API vib_status vib_model_decode(const vib_model* model, const double* responses, size_t n, double* recon);

/* Relevance and compression bounds (nats) and objective on a data set. */
VIB_API vib_status vib_model_bounds(const vib_model* model, const vib_dataset* data, double* relevance,
                                    double* compression, double* objective);

/* Experiment config JSON for a named preset; release with vib_free. */
VIB_API vib_status vib_preset_config(const char* name, char** json);
/* Newline-separated list of preset names; release with vib_free. */
VIB_API vib_status vib_preset_names(char** names);
/* Applies a JSON merge patch to a config; release with vib_free. */
VIB_API vib_status vib_config_merge(const char* base, const char* patch, char** merged);
/* Validates a config; on success writes the normalized form (may be NULL). */
VIB_API vib_status vib_config_check(const char* config_json, char** normalized);

/* Runs an experiment into out_dir. With sweep == 0 any γ grid is ignored. */
VIB_API vib_status vib_experiment_run(const char* config_json, const char* out_dir, int sweep);
VIB_API vib_status vib_experiment_gen_data(const char* config_json, const char* out_dir);
VIB_API vib_status vib_experiment_report(const char* run_dir);
/* probe_json may be NULL for the default probe. Energies (left, right,
   both) are written to energy[0..2] when energy is not NULL. */
VIB_API vib_status vib_experiment_probe(const char* model_path, const char* probe_json, const char* out_dir,
                                        double* energy);
VIB_API vib_status vib_experiment_compare(const char* const* run_dirs, size_t n_runs, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* VIB_VIB_H */
