#include "dqd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dqd {

#define DQD_CONFIG_FIELDS(X)                                                                              \
  X(w1_nm) X(w2_nm) X(z0_meV) X(z2_meV) X(effective_mass_ratio) X(x_min_nm) X(x_max_nm) X(n_points)      \
  X(dt_ps) X(dt_safety) X(max_detuning_ueV) X(plateau_states) X(lambda) X(calibration_slope_min_meV)     \
  X(calibration_slope_max_meV) X(calibration_samples) X(eigens_slope_min_meV) X(eigens_slope_max_meV)    \
  X(eigens_samples) X(d_map_max_ueV) X(d_map_points) X(fidelity_threshold) X(range_search_max_ueV)      \
  X(range_samples) X(tau_ps) X(baseline_slope_meV) X(evolver) X(prep_amplitude_min_ueV)                  \
  X(prep_amplitude_max_ueV) X(prep_amplitude_points) X(prep_tp_min_ps) X(prep_tp_max_ps)                 \
  X(prep_tp_step_ps) X(prep_rounds) X(sweep_kind) X(sweep_counter_min_ueV) X(sweep_counter_max_ueV)      \
  X(sweep_counter_points) X(sweep_amplitude_min_ueV) X(sweep_amplitude_max_ueV)                          \
  X(sweep_amplitude_points) X(sweep_hold_min_ps) X(sweep_hold_max_ps) X(sweep_hold_step_ps)              \
  X(refine_candidates) X(refine_max_evaluations) X(tomography_kind) X(tomography_counter_ueV)            \
  X(tomography_amplitude_ueV) X(tomography_plateau_ps) X(tomography_rise_ps) X(bench_grid_sizes)        \
  X(bench_steps) X(bench_workers) X(workers) X(seed) X(output_dir)

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::configuration, "config: " + what);
}

}  // namespace

void RunConfig::validate() const {
  params().validate();
  units().validate();
  grid().validate();
  require(dt_ps >= 0.0, "dt_ps must be >= 0");
  require(dt_safety > 0.0 && dt_safety <= 1.0, "dt_safety must lie in (0, 1]");
  require(max_detuning_ueV > 0.0, "max_detuning_ueV must be positive");
  require(plateau_states >= 2, "plateau_states must be >= 2");
  require(lambda >= 0.0, "lambda must be >= 0 (0 selects calibration)");
  require(calibration_slope_max_meV > calibration_slope_min_meV && calibration_samples >= 2,
          "calibration needs an interval and >= 2 samples");
  require(eigens_slope_max_meV > eigens_slope_min_meV && eigens_samples >= 1, "eigens sweep is empty");
  require(d_map_max_ueV > 0.0 && d_map_points >= 2, "d map needs a positive range and >= 2 points");
  require(fidelity_threshold > 0.0 && fidelity_threshold <= 1.0, "fidelity_threshold must lie in (0, 1]");
  require(range_search_max_ueV > 0.0 && range_samples >= 2, "range search needs a positive range");
  require(tau_ps >= 0.0 && tomography_rise_ps >= 0.0, "rise times must be >= 0");
  require(evolver == "full" || evolver == "lsm", "evolver must be 'full' or 'lsm'");
  require(prep_amplitude_points >= 1 && prep_amplitude_max_ueV >= prep_amplitude_min_ueV, "bad prep amplitude grid");
  require(prep_tp_step_ps > 0.0 && prep_tp_max_ps >= prep_tp_min_ps && prep_tp_min_ps >= 0.0, "bad prep t_p grid");
  require(prep_rounds >= 0, "prep_rounds must be >= 0");
  pulse_kind_from_string(sweep_kind);
  pulse_kind_from_string(tomography_kind);
  require(sweep_counter_points >= 1 && sweep_amplitude_points >= 1, "sweep grids must be non-empty");
  require(sweep_hold_step_ps > 0.0 && sweep_hold_max_ps >= sweep_hold_min_ps && sweep_hold_min_ps >= 0.0,
          "bad sweep hold grid");
  require(tomography_plateau_ps >= 0.0, "tomography_plateau_ps must be >= 0");
  require(!bench_grid_sizes.empty() && bench_steps >= 1, "bench needs grid sizes and steps");
  for (auto n : bench_grid_sizes) require(n >= 3, "bench grid sizes must be >= 3");
  require(!output_dir.empty(), "output_dir must not be empty");
}

DqdParams RunConfig::params() const {
  DqdParams p;
  p.w1_nm = w1_nm;
  p.w2_nm = w2_nm;
  p.z0_meV = z0_meV;
  p.z2_meV = z2_meV;
  return p;
}

UnitSystem RunConfig::units() const {
  UnitSystem u;
  u.effective_mass_ratio = effective_mass_ratio;
  return u;
}

Grid RunConfig::grid() const {
  Grid g;
  g.x_min = x_min_nm;
  g.x_max = x_max_nm;
  g.n_points = n_points;
  g.dt = dt_ps;
  return g;
}

RunConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::configuration, std::string("config: invalid JSON: ") + e.what());
  }
  require(j.is_object(), "top level must be an object");
  static const std::set<std::string> known = {
#define DQD_NAME(f) #f,
      DQD_CONFIG_FIELDS(DQD_NAME)
#undef DQD_NAME
  };
  for (const auto& [key, value] : j.items())
    require(known.count(key) > 0, "unknown key '" + key + "'");

  RunConfig c;
  try {
#define DQD_READ(f) \
  if (j.contains(#f)) j.at(#f).get_to(c.f);
    DQD_CONFIG_FIELDS(DQD_READ)
#undef DQD_READ
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::configuration, std::string("config: wrong value type: ") + e.what());
  }
  c.validate();
  return c;
}

std::string config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
#define DQD_WRITE(f) j[#f] = c.f;
  DQD_CONFIG_FIELDS(DQD_WRITE)
#undef DQD_WRITE
  return j.dump(2);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

}  // namespace dqd
