#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dqd/dqd.h"

namespace {

int fail(dqd_status s) {
  std::fprintf(stderr, "error: code=%s message=%s\n", dqd_status_name(s), dqd_last_error());
  return static_cast<int>(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double quantum dot charge-qubit simulator"};
  app.set_version_flag("--version", std::string(dqd_version()));
  app.require_subcommand(1, 1);

  std::string config_path, out_dir;
  bool serial = false;
  std::optional<unsigned> workers;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  auto* serial_flag = app.add_flag("--serial", serial, "single worker, deterministic order");
  app.add_option("--workers", workers, "worker threads (0: hardware threads)")->excludes(serial_flag);

  for (const char* verb : {"eigens", "calibrate", "basis", "prepare", "sweep", "tomography", "bench"})
    app.add_subcommand(verb);
  auto* readout = app.add_subcommand("readout", "|beta|^2 from a right-dot probability");
  std::optional<double> p_right;
  std::string trace;
  auto* p_opt = readout->add_option("--p-right", p_right, "measured right-dot probability");
  auto* t_opt = readout->add_option("--trace", trace, "trace CSV; the last p_right is used")->check(CLI::ExistingFile);
  p_opt->excludes(t_opt);
  readout->require_option(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: code=usage message=%s\n", e.what());
    return static_cast<int>(DQD_ERR_INVALID_ARGUMENT);
  }

  dqd_session* s = nullptr;
  dqd_status st = config_path.empty() ? dqd_session_create(nullptr, &s) : dqd_session_load(config_path.c_str(), &s);
  if (st != DQD_OK) return fail(st);
  if (!out_dir.empty() && (st = dqd_session_set_output_dir(s, out_dir.c_str())) != DQD_OK) return fail(st);
  if (serial) st = dqd_session_set_workers(s, 1);
  else if (workers) st = dqd_session_set_workers(s, *workers);
  if (st != DQD_OK) return fail(st);

  const std::string verb = app.get_subcommands().front()->get_name();
  if (verb == "readout") {
    double beta2 = 0.0, alpha2 = 0.0;
    int leak = 0;
    st = p_right ? dqd_readout(s, *p_right, &beta2, &alpha2, &leak)
                 : dqd_readout_trace(s, trace.c_str(), &beta2, &alpha2, &leak);
  } else {
    st = dqd_run(s, verb.c_str());
  }
  if (st != DQD_OK) {
    const int code = fail(st);
    dqd_session_destroy(s);
    return code;
  }
  std::printf("%s\n", dqd_session_report(s));
  dqd_session_destroy(s);
  return 0;
}
