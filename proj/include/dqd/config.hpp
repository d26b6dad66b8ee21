#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dqd/control.hpp"
#include "dqd/core.hpp"
#include "dqd/potential.hpp"

namespace dqd {

/// Run configuration. Key names in the JSON form carry their units.
struct RunConfig {
  double w1_nm = 130.0;
  double w2_nm = 240.0;
  double z0_meV = 0.865;
  double z2_meV = 6.92;
  double effective_mass_ratio = 0.067;

  double x_min_nm = -264.0;
  double x_max_nm = 264.0;
  std::size_t n_points = 257;
  double dt_ps = 0.0;  // 0: dt_safety·ħ/E_max at max_detuning_ueV
  double dt_safety = 0.8;
  double max_detuning_ueV = 210.0;
  int plateau_states = 6;

  double lambda = 0.0;  // 0: calibrate
  double calibration_slope_min_meV = -0.5;
  double calibration_slope_max_meV = 0.5;
  std::size_t calibration_samples = 21;

  double eigens_slope_min_meV = -0.5;
  double eigens_slope_max_meV = 0.5;
  std::size_t eigens_samples = 41;

  double d_map_max_ueV = 200.0;
  std::size_t d_map_points = 81;
  double fidelity_threshold = 0.99;
  double range_search_max_ueV = 400.0;
  std::size_t range_samples = 81;

  double tau_ps = 90.0;
  double baseline_slope_meV = 0.06508;
  std::string evolver = "full";  // full | lsm

  double prep_amplitude_min_ueV = -40.0;
  double prep_amplitude_max_ueV = 40.0;
  std::size_t prep_amplitude_points = 81;
  double prep_tp_min_ps = 400.0;
  double prep_tp_max_ps = 700.0;
  double prep_tp_step_ps = 2.0;
  int prep_rounds = 3;

  std::string sweep_kind = "spin_echo";
  double sweep_counter_min_ueV = -200.0;
  double sweep_counter_max_ueV = 200.0;
  std::size_t sweep_counter_points = 11;
  double sweep_amplitude_min_ueV = -200.0;
  double sweep_amplitude_max_ueV = 200.0;
  std::size_t sweep_amplitude_points = 11;
  double sweep_hold_min_ps = 0.0;
  double sweep_hold_max_ps = 1000.0;
  double sweep_hold_step_ps = 2.0;
  std::size_t refine_candidates = 4;
  int refine_max_evaluations = 60;

  std::string tomography_kind = "spin_echo";
  double tomography_counter_ueV = -167.4;
  double tomography_amplitude_ueV = 16.5;
  double tomography_plateau_ps = 400.0;
  double tomography_rise_ps = 90.0;

  std::vector<std::size_t> bench_grid_sizes{256, 1024, 8192};
  std::int64_t bench_steps = 2000;
  unsigned bench_workers = 8;

  unsigned workers = 0;  // 0: hardware threads
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  void validate() const;
  DqdParams params() const;
  UnitSystem units() const;
  Grid grid() const;
};

/// Unknown keys raise `configuration`; missing keys keep their defaults.
RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);

}  // namespace dqd
