#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dqd/config.hpp"
#include "dqd/control.hpp"
#include "dqd/potential.hpp"
#include "dqd/qubit_basis.hpp"

namespace dqd {

const char* version_string() noexcept;

struct CommandResult {
  std::string verb;
  std::string report_json;  // also written to <verb>.manifest.json under "report"
  std::vector<std::string> files;
  double wall_s = 0.0;
};

struct ReadoutRequest {
  std::optional<double> p_right;
  std::optional<std::string> trace_path;  // uses the p_right column of the last row
};

/// Lazily built calibration, device, basis and evolvers for one config.
class Session {
 public:
  explicit Session(RunConfig config);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const RunConfig& config() const { return config_; }
  void set_output_dir(const std::string& dir);
  void set_workers(unsigned workers);
  unsigned workers() const;

  const CalibrationResult& calibration();
  double lambda();
  const DeviceModel& device();
  const QubitBasis& basis();
  const FullEvolver& full_evolver();
  const LsmEvolver& lsm_evolver();
  const ProbeEvolver& evolver();  // selected by config.evolver
  double baseline_ueV();
  double dt_ps();

  CommandResult run(const std::string& verb);
  CommandResult eigens();
  CommandResult calibrate();
  CommandResult basis_report();
  CommandResult prepare();
  CommandResult sweep();
  CommandResult tomography();
  CommandResult readout(const ReadoutRequest& request);
  CommandResult bench();

 private:
  struct Cache;
  CommandResult finish(const std::string& verb, const std::string& report_json, std::vector<std::string> files,
                       double wall_s);
  std::string path(const std::string& name) const;

  RunConfig config_;
  std::unique_ptr<Cache> cache_;
};

/// Last p_right value of a trace CSV with a header row.
double last_p_right(const std::string& trace_path);

}  // namespace dqd
