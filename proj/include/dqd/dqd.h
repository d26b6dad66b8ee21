#ifndef DQD_DQD_H
#define DQD_DQD_H

#include <stddef.h>

#if defined(_WIN32)
#define DQD_API __declspec(dllexport)
#else
#define DQD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dqd_status {
  DQD_OK = 0,
  DQD_ERR_INVALID_ARGUMENT,
  DQD_ERR_DIMENSION,
  DQD_ERR_INSTABILITY,
  DQD_ERR_SOLVER,
  DQD_ERR_CALIBRATION,
  DQD_ERR_CONFIGURATION,
  DQD_ERR_IO,
  DQD_ERR_SWEEP_RANGE,
  DQD_ERR_SUBSPACE,
  DQD_ERR_DECOMPOSITION,
  DQD_ERR_DEGENERATE,
  DQD_ERR_INTERNAL
} dqd_status;

typedef struct dqd_session dqd_session;

DQD_API const char* dqd_version(void);
DQD_API const char* dqd_status_name(dqd_status status);
/* Message of the last failed call on this thread; "" after a success. */
DQD_API const char* dqd_last_error(void);

/* config_json may be NULL for the defaults. */
DQD_API dqd_status dqd_session_create(const char* config_json, dqd_session** out);
DQD_API dqd_status dqd_session_load(const char* config_path, dqd_session** out);
DQD_API void dqd_session_destroy(dqd_session* session);

DQD_API dqd_status dqd_session_set_output_dir(dqd_session* session, const char* dir);
/* 0 selects the hardware thread count. */
DQD_API dqd_status dqd_session_set_workers(dqd_session* session, unsigned workers);

/* One of: eigens, calibrate, basis, prepare, sweep, tomography, bench. */
DQD_API dqd_status dqd_run(dqd_session* session, const char* verb);

/* JSON report of the last successful command. The pointer stays valid until
   the next command on the session or its destruction. */
DQD_API const char* dqd_session_report(const dqd_session* session);

DQD_API dqd_status dqd_readout(dqd_session* session, double p_right, double* beta2, double* alpha2, int* leakage);
DQD_API dqd_status dqd_readout_trace(dqd_session* session, const char* trace_path, double* beta2, double* alpha2,
                                     int* leakage);

DQD_API dqd_status dqd_calibration(dqd_session* session, double* lambda, double* delta_ueV,
                                   double* max_relative_residual);
DQD_API dqd_status dqd_basis_constants(dqd_session* session, double* alpha0, double* beta0, double* p0, double* p1);

#ifdef __cplusplus
}
#endif

#endif
