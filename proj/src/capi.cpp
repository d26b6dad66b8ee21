#include "dqd/dqd.h"

#include <exception>
#include <new>
#include <string>

#include "dqd/experiments.hpp"

struct dqd_session {
  dqd::Session session;
  std::string report = "{}";
  explicit dqd_session(dqd::RunConfig c) : session(std::move(c)) {}
};

namespace {

thread_local std::string g_last_error;

dqd_status status_of(dqd::ErrorCode code) {
  return static_cast<dqd_status>(static_cast<int>(code) + 1);
}

template <class F>
dqd_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return DQD_OK;
  } catch (const dqd::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DQD_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DQD_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return DQD_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw dqd::Error(dqd::ErrorCode::invalid_argument, std::string(what) + " must not be NULL");
}

dqd::ReadoutResult do_readout(dqd_session* s, const dqd::ReadoutRequest& req) {
  auto r = s->session.readout(req);
  s->report = r.report_json;
  return dqd::readout_coefficients(req.p_right ? *req.p_right : dqd::last_p_right(*req.trace_path),
                                   s->session.basis());
}

}  // namespace

extern "C" {

const char* dqd_version(void) { return dqd::version_string(); }

const char* dqd_status_name(dqd_status status) {
  if (status == DQD_OK) return "ok";
  if (status == DQD_ERR_INTERNAL) return "internal";
  if (status > DQD_OK && status < DQD_ERR_INTERNAL)
    return dqd::to_string(static_cast<dqd::ErrorCode>(static_cast<int>(status) - 1));
  return "unknown";
}

const char* dqd_last_error(void) { return g_last_error.c_str(); }

dqd_status dqd_session_create(const char* config_json, dqd_session** out) {
  return guarded([&] {
    need(out, "out");
    *out = nullptr;
    dqd::RunConfig c = config_json ? dqd::config_from_json(config_json) : dqd::RunConfig{};
    *out = new dqd_session(std::move(c));
  });
}

dqd_status dqd_session_load(const char* config_path, dqd_session** out) {
  return guarded([&] {
    need(out, "out");
    need(config_path, "config_path");
    *out = nullptr;
    *out = new dqd_session(dqd::load_config(config_path));
  });
}

void dqd_session_destroy(dqd_session* session) { delete session; }

dqd_status dqd_session_set_output_dir(dqd_session* session, const char* dir) {
  return guarded([&] {
    need(session, "session");
    need(dir, "dir");
    session->session.set_output_dir(dir);
  });
}

dqd_status dqd_session_set_workers(dqd_session* session, unsigned workers) {
  return guarded([&] {
    need(session, "session");
    session->session.set_workers(workers);
  });
}

dqd_status dqd_run(dqd_session* session, const char* verb) {
  return guarded([&] {
    need(session, "session");
    need(verb, "verb");
    session->report = session->session.run(verb).report_json;
  });
}

const char* dqd_session_report(const dqd_session* session) { return session ? session->report.c_str() : ""; }

dqd_status dqd_readout(dqd_session* session, double p_right, double* beta2, double* alpha2, int* leakage) {
  return guarded([&] {
    need(session, "session");
    dqd::ReadoutRequest req;
    req.p_right = p_right;
    const auto r = do_readout(session, req);
    if (beta2) *beta2 = r.beta2;
    if (alpha2) *alpha2 = r.alpha2;
    if (leakage) *leakage = r.leakage ? 1 : 0;
  });
}

dqd_status dqd_readout_trace(dqd_session* session, const char* trace_path, double* beta2, double* alpha2,
                             int* leakage) {
  return guarded([&] {
    need(session, "session");
    need(trace_path, "trace_path");
    dqd::ReadoutRequest req;
    req.trace_path = std::string(trace_path);
    const auto r = do_readout(session, req);
    if (beta2) *beta2 = r.beta2;
    if (alpha2) *alpha2 = r.alpha2;
    if (leakage) *leakage = r.leakage ? 1 : 0;
  });
}

dqd_status dqd_calibration(dqd_session* session, double* lambda, double* delta_ueV, double* max_relative_residual) {
  return guarded([&] {
    need(session, "session");
    const auto& c = session->session.calibration();
    if (lambda) *lambda = c.lambda;
    if (delta_ueV) *delta_ueV = 1000.0 * c.delta_meV;
    if (max_relative_residual) *max_relative_residual = c.max_relative_residual;
  });
}

dqd_status dqd_basis_constants(dqd_session* session, double* alpha0, double* beta0, double* p0, double* p1) {
  return guarded([&] {
    need(session, "session");
    const auto& b = session->session.basis();
    if (alpha0) *alpha0 = b.alpha0;
    if (beta0) *beta0 = b.beta0;
    if (p0) *p0 = b.P0;
    if (p1) *p1 = b.P1;
  });
}

}  // extern "C"
