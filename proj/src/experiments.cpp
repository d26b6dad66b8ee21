#include "dqd/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dqd/bench.hpp"
#include "dqd/parallel.hpp"

#ifndef DQD_VERSION
#define DQD_VERSION "0.0.0"
#endif

namespace dqd {

using json = nlohmann::ordered_json;

const char* version_string() noexcept { return DQD_VERSION; }

namespace {

// Published reference values; comparisons are reported, never enforced.
constexpr double kRefLambda = 0.42254;
constexpr double kRefDeltaUeV = 12.0;
constexpr double kRefPrepTp = 537.0;
constexpr double kRefPrepA = 11.5;
constexpr double kRefSigmaXTheta0 = -1.416;
constexpr double kRefSigmaXKappa = -0.031;
constexpr double kRefSigmaZTheta0 = 2.658;
constexpr double kRefSigmaZKappa = 0.359;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path), path_(path) {
    if (!out_) throw Error(ErrorCode::io, "cannot write '" + path + "'");
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }
  CsvWriter& cell(double v) { return raw(fmt(v)); }
  CsvWriter& cell(const std::string& s) { return raw(s); }
  CsvWriter& cell(int v) { return raw(std::to_string(v)); }
  void end() {
    out_ << '\n';
    first_ = true;
    if (!out_) throw Error(ErrorCode::io, "write failed for '" + path_ + "'");
  }

 private:
  CsvWriter& raw(const std::string& s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
    return *this;
  }
  std::ofstream out_;
  std::string path_;
  bool first_ = true;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path + "'");
}

void write_state(const std::string& path, const Wavefunction& psi, const Grid& grid) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path + "'");
  out << "x_nm re im\n";
  for (std::size_t m = 0; m < psi.size(); ++m) out << fmt(grid.x(m)) << ' ' << fmt(psi.re[m]) << ' ' << fmt(psi.im[m]) << '\n';
}

json compare(double value, double reference, double rel_tol) {
  const double rel = std::abs(value - reference) / std::abs(reference);
  return {{"value", value}, {"reference", reference}, {"relative_error", rel}, {"tolerance", rel_tol},
          {"within_tolerance", rel <= rel_tol}};
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json mat_json(const Eigen::Matrix3d& m) {
  json rows = json::array();
  for (int i = 0; i < 3; ++i) rows.push_back(json::array({m(i, 0), m(i, 1), m(i, 2)}));
  return rows;
}

json fit_json(const RotationFamilyFit& f) {
  return {{"axis", vec_json(f.axis)},
          {"kappa_rad_per_ps", f.kappa},
          {"theta0_rad", f.theta0},
          {"fixed_axis", vec_json(f.fixed_axis_angle.axis)},
          {"fixed_angle_rad", f.fixed_axis_angle.angle},
          {"residual_rad", f.residual_rad},
          {"ok", f.ok},
          {"message", f.message}};
}

json pulse_json(const PulseSpec& p) {
  return {{"kind", to_string(p.kind)},     {"baseline_ueV", p.baseline_ueV}, {"counter_ueV", p.counter_ueV},
          {"amplitude_ueV", p.amplitude_ueV}, {"plateau_ps", p.plateau_ps}, {"rise_ps", p.rise_ps}};
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

}  // namespace

double last_p_right(const std::string& trace_path) {
  std::ifstream in(trace_path);
  if (!in) throw Error(ErrorCode::io, "cannot open trace '" + trace_path + "'");
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::io, "trace '" + trace_path + "' is empty");
  const auto cols = split_csv(header);
  const auto it = std::find(cols.begin(), cols.end(), "p_right");
  if (it == cols.end()) throw Error(ErrorCode::io, "trace '" + trace_path + "' has no p_right column");
  const auto col = static_cast<std::size_t>(it - cols.begin());
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  const auto cells = split_csv(last);
  if (last.empty() || cells.size() <= col) throw Error(ErrorCode::io, "trace '" + trace_path + "' has no data rows");
  try {
    return std::stod(cells[col]);
  } catch (const std::exception&) {
    throw Error(ErrorCode::io, "trace '" + trace_path + "': bad p_right value '" + cells[col] + "'");
  }
}

struct Session::Cache {
  std::optional<CalibrationResult> calibration;
  std::optional<double> dt;
  std::unique_ptr<DeviceModel> device;
  std::unique_ptr<QubitBasis> basis;
  std::unique_ptr<FullEvolver> full;
  std::unique_ptr<LsmEvolver> lsm;
};

Session::Session(RunConfig config) : config_(std::move(config)), cache_(std::make_unique<Cache>()) {
  config_.validate();
}

Session::~Session() = default;

void Session::set_output_dir(const std::string& dir) {
  if (dir.empty()) throw Error(ErrorCode::configuration, "output directory must not be empty");
  config_.output_dir = dir;
}

void Session::set_workers(unsigned workers) { config_.workers = workers; }

unsigned Session::workers() const { return resolve_workers(config_.workers); }

const CalibrationResult& Session::calibration() {
  if (!cache_->calibration)
    cache_->calibration = calibrate_lambda(config_.params(), config_.units(), config_.grid(),
                                           config_.calibration_slope_min_meV, config_.calibration_slope_max_meV,
                                           config_.calibration_samples);
  return *cache_->calibration;
}

double Session::lambda() { return config_.lambda > 0.0 ? config_.lambda : calibration().lambda; }

const DeviceModel& Session::device() {
  if (!cache_->device)
    cache_->device = std::make_unique<DeviceModel>(config_.params(), config_.units(), config_.grid(), lambda());
  return *cache_->device;
}

const QubitBasis& Session::basis() {
  if (!cache_->basis) {
    auto b = std::make_unique<QubitBasis>(build_basis(device()));
    const OperatingRange r = operating_range(device(), *b, config_.fidelity_threshold, config_.range_search_max_ueV,
                                             config_.range_samples, workers());
    b->operating_range = {r.lo_ueV, r.hi_ueV};
    cache_->basis = std::move(b);
  }
  return *cache_->basis;
}

double Session::dt_ps() {
  if (!cache_->dt) {
    const DeviceModel& d = device();
    cache_->dt = config_.dt_ps > 0.0 ? config_.dt_ps
                                     : max_stable_dt(d.field, d.slope_for(config_.max_detuning_ueV), d.grid, d.units,
                                                     config_.dt_safety);
  }
  return *cache_->dt;
}

const FullEvolver& Session::full_evolver() {
  if (!cache_->full) {
    PropagationOptions o;
    o.dt = dt_ps();
    o.safety_factor = config_.dt_safety;
    const QubitBasis& b = basis();
    cache_->full = std::make_unique<FullEvolver>(device(), b, o, config_.plateau_states);
  }
  return *cache_->full;
}

const LsmEvolver& Session::lsm_evolver() {
  if (!cache_->lsm) cache_->lsm = std::make_unique<LsmEvolver>(device().delta_ueV, device().hbar_ueV_ps());
  return *cache_->lsm;
}

const ProbeEvolver& Session::evolver() {
  if (config_.evolver == "lsm") return lsm_evolver();
  return full_evolver();
}

double Session::baseline_ueV() { return device().detuning_for(config_.baseline_slope_meV); }

std::string Session::path(const std::string& name) const {
  return (std::filesystem::path(config_.output_dir) / name).string();
}

CommandResult Session::finish(const std::string& verb, const std::string& report_json, std::vector<std::string> files,
                              double wall_s) {
  CommandResult r{verb, report_json, std::move(files), wall_s};
  json manifest;
  manifest["verb"] = verb;
  manifest["version"] = version_string();
  manifest["wall_time_s"] = wall_s;
  manifest["workers"] = workers();
  manifest["config"] = json::parse(config_to_json(config_));
  manifest["report"] = json::parse(report_json);
  manifest["files"] = r.files;
  const std::string manifest_path = path(verb + ".manifest.json");
  write_text(manifest_path, manifest.dump(2) + "\n");
  r.files.push_back(manifest_path);
  return r;
}

CommandResult Session::run(const std::string& verb) {
  if (verb == "eigens") return eigens();
  if (verb == "calibrate") return calibrate();
  if (verb == "basis") return basis_report();
  if (verb == "prepare") return prepare();
  if (verb == "sweep") return sweep();
  if (verb == "tomography") return tomography();
  if (verb == "bench") return bench();
  if (verb == "readout") throw Error(ErrorCode::invalid_argument, "readout needs a p_right value or a trace file");
  throw Error(ErrorCode::invalid_argument, "unknown command '" + verb + "'");
}

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create output directory '" + dir + "': " + ec.message());
}

}  // namespace

CommandResult Session::eigens() {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(config_.output_dir);
  const DeviceModel& d = device();
  const auto slopes = linspace(config_.eigens_slope_min_meV, config_.eigens_slope_max_meV, config_.eigens_samples);
  struct Row {
    double e_b = NAN, e_ab = NAN;
    std::string status = "ok";
  };
  std::vector<Row> rows(slopes.size());
  parallel_for(slopes.size(), workers(), [&](std::size_t i) {
    try {
      const auto p = d.eigenpairs(slopes[i], 2);
      rows[i].e_b = p[0].energy;
      rows[i].e_ab = p[1].energy;
    } catch (const Error& e) {
      rows[i].status = std::string(to_string(e.code())) + ": " + e.what();
      std::replace(rows[i].status.begin(), rows[i].status.end(), ',', ';');
    }
  });

  const std::string csv = path("eigens.csv");
  CsvWriter w(csv, {"v_slope_meV", "epsilon_ueV", "E_B_meV", "E_AB_meV", "splitting_ueV", "status"});
  std::size_t failures = 0, imin = 0;
  for (std::size_t i = 0; i < slopes.size(); ++i) {
    const double split = 1000.0 * (rows[i].e_ab - rows[i].e_b);
    w.cell(slopes[i]).cell(d.detuning_for(slopes[i])).cell(rows[i].e_b).cell(rows[i].e_ab).cell(split).cell(rows[i].status);
    w.end();
    if (rows[i].status != "ok") ++failures;
    else if (!(1000.0 * (rows[imin].e_ab - rows[imin].e_b) <= split)) imin = i;
  }
  const std::string gp = path("eigens.gp");
  write_text(gp,
             "set datafile separator ','\nset xlabel 'V_slope (meV)'\nset ylabel 'E (meV)'\n"
             "plot 'eigens.csv' every ::1 using 1:3 with lines title 'E_B', "
             "'' every ::1 using 1:4 with lines title 'E_AB'\n");
  json rep = {{"samples", slopes.size()},
              {"failures", failures},
              {"lambda", d.lambda},
              {"delta_ueV", d.delta_ueV},
              {"min_splitting_v_slope_meV", slopes[imin]}};
  return finish("eigens", rep.dump(), {csv, gp}, seconds_since(t0));
}

CommandResult Session::calibrate() {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(config_.output_dir);
  const CalibrationResult& c = calibration();
  const std::string csv = path("calibration.csv");
  CsvWriter w(csv, {"v_slope_meV", "splitting_meV", "detuning_meV", "fit_detuning_meV"});
  for (const auto& s : c.samples) {
    w.cell(s.v_slope_meV).cell(s.splitting_meV).cell(s.detuning_meV).cell(c.lambda * s.v_slope_meV);
    w.end();
  }
  const double delta_ueV = 1000.0 * c.delta_meV;
  json rep = {{"lambda", c.lambda},
              {"delta_ueV", delta_ueV},
              {"max_relative_residual", c.max_relative_residual},
              {"unexplained_variance", c.unexplained_variance},
              {"effective_mass_ratio", config_.effective_mass_ratio},
              {"reference_lambda", compare(c.lambda, kRefLambda, 0.05)},
              {"reference_delta", compare(delta_ueV, kRefDeltaUeV, 0.15)}};
  return finish("calibrate", rep.dump(), {csv}, seconds_since(t0));
}

CommandResult Session::basis_report() {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(config_.output_dir);
  const DeviceModel& d = device();
  const QubitBasis& b = basis();
  const Grid& g = d.grid;
  std::vector<std::string> files{path("psi0.dat"), path("psi1.dat")};
  write_state(files[0], b.psi0, g);
  write_state(files[1], b.psi1, g);

  const CorrelationMap map =
      correlation_map(d, config_.d_map_max_ueV, config_.d_map_points, OverlapReading::squared_overlap, workers());
  const std::string dcsv = path("d_map.csv");
  {
    CsvWriter w(dcsv, {"epsilon_ueV", "epsilon_prime_ueV", "D"});
    for (std::size_t i = 0; i < map.epsilon_ueV.size(); ++i)
      for (std::size_t j = 0; j < map.epsilon_ueV.size(); ++j) {
        w.cell(map.epsilon_ueV[i]).cell(map.epsilon_ueV[j]).cell(map.d[i][j]);
        w.end();
      }
  }
  const std::string ccsv = path("d_column_average.csv");
  {
    CsvWriter w(ccsv, {"epsilon_prime_ueV", "column_average"});
    for (std::size_t j = 0; j < map.epsilon_ueV.size(); ++j) {
      w.cell(map.epsilon_ueV[j]).cell(map.column_average[j]);
      w.end();
    }
  }

  const auto& eps = map.epsilon_ueV;
  std::vector<LocalizedPair> pairs(eps.size());
  parallel_for(eps.size(), workers(), [&](std::size_t i) { pairs[i] = localized_pair(d, eps[i]); });
  const std::string lcsv = path("localization.csv");
  {
    CsvWriter w(lcsv, {"epsilon_ueV", "p_right_R", "p_left_L", "p_right_bonding", "p_right_antibonding",
                       "overlap_R_psi0", "overlap_L_psi1"});
    for (std::size_t i = 0; i < eps.size(); ++i) {
      const auto& p = pairs[i];
      w.cell(eps[i])
          .cell(half_line_probability(p.R, g, Side::right))
          .cell(half_line_probability(p.L, g, Side::left))
          .cell(half_line_probability(p.psi_b, g, Side::right))
          .cell(half_line_probability(p.psi_ab, g, Side::right))
          .cell(std::norm(inner_product(p.R, b.psi0, g)))
          .cell(std::norm(inner_product(p.L, b.psi1, g)));
      w.end();
    }
  }

  const auto fid = linspace(-config_.range_search_max_ueV, config_.range_search_max_ueV, config_.range_samples);
  std::vector<FidelitySample> fs(fid.size());
  parallel_for(fid.size(), workers(), [&](std::size_t i) { fs[i] = lsm_fidelity(d, b, fid[i]); });
  const std::string fcsv = path("fidelity.csv");
  {
    CsvWriter w(fcsv, {"epsilon_ueV", "fidelity_bonding", "fidelity_antibonding"});
    for (const auto& s : fs) {
      w.cell(s.epsilon_ueV).cell(s.bonding).cell(s.antibonding);
      w.end();
    }
  }
  const std::string gp = path("basis.gp");
  write_text(gp,
             "set datafile separator ','\n"
             "set multiplot layout 2,1\n"
             "set xlabel 'epsilon (ueV)'\nset ylabel 'probability'\n"
             "plot 'localization.csv' every ::1 using 1:2 with lines title 'P_R(R)', "
             "'' every ::1 using 1:6 with lines title '|<R,psi0>|^2'\n"
             "set ylabel 'column average of D'\n"
             "plot 'd_column_average.csv' every ::1 using 1:2 with lines notitle\n"
             "unset multiplot\n");
  files.insert(files.end(), {dcsv, ccsv, lcsv, fcsv, gp});

  json rep = {{"alpha0", b.alpha0},
              {"beta0", b.beta0},
              {"P0", b.P0},
              {"P1", b.P1},
              {"P0_plus_P1", b.P0 + b.P1},
              {"delta_ueV", b.delta_ueV},
              {"lambda", d.lambda},
              {"operating_range_ueV", json::array({b.operating_range.first, b.operating_range.second})},
              {"d_map_optimal_epsilon_ueV", map.optimal_epsilon_ueV}};
  return finish("basis", rep.dump(), files, seconds_since(t0));
}

CommandResult Session::prepare() {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(config_.output_dir);
  const auto amps = linspace(config_.prep_amplitude_min_ueV, config_.prep_amplitude_max_ueV, config_.prep_amplitude_points);
  const HoldGrid tps{config_.prep_tp_min_ps, config_.prep_tp_max_ps, config_.prep_tp_step_ps};
  const double base = baseline_ueV();
  const PreparationResult r =
      prepare_qubit(evolver(), base, config_.tau_ps, amps, tps, workers(), config_.prep_rounds);
  const std::string csv = path("prepare_grid.csv");
  {
    CsvWriter w(csv, {"amplitude_ueV", "best_plateau_ps", "distance"});
    for (const auto& s : r.grid) {
      w.cell(s.amplitude_ueV).cell(s.plateau_ps).cell(s.distance);
      w.end();
    }
  }
  auto sample = [](const PrepSample& s) {
    return json{{"amplitude_ueV", s.amplitude_ueV}, {"plateau_ps", s.plateau_ps}, {"distance", s.distance}};
  };
  json rep = {{"evolver", evolver().id()},
              {"baseline_ueV", base},
              {"grid_best", sample(r.grid_best)},
              {"refined", sample(r.refined)},
              {"rounds", r.rounds},
              {"reference_plateau", compare(r.refined.plateau_ps, kRefPrepTp, 0.10)},
              {"reference_amplitude_magnitude", compare(std::abs(r.refined.amplitude_ueV), kRefPrepA, 0.10)},
              {"amplitude_sign_matches_reference", r.refined.amplitude_ueV > 0.0}};
  return finish("prepare", rep.dump(), {csv}, seconds_since(t0));
}

namespace {

const std::vector<std::string> kCellHeader = {"counter_ueV",  "amplitude_ueV", "oscillation_amplitude",
                                              "max_leakage",  "axis_x",        "axis_y",
                                              "axis_z",       "kappa_rad_per_ps", "theta0_rad",
                                              "fit_residual_rad", "axis_dev_x_deg", "axis_dev_z_deg",
                                              "azimuth_error_rad", "sigma_x",   "sigma_z"};

void write_cell(CsvWriter& w, const SweepCell& c) {
  const CellResult& r = c.result;
  w.cell(c.counter_ueV)
      .cell(c.amplitude_ueV)
      .cell(r.amplitude)
      .cell(r.max_leakage)
      .cell(r.fit.axis.x())
      .cell(r.fit.axis.y())
      .cell(r.fit.axis.z())
      .cell(r.fit.kappa)
      .cell(r.fit.theta0)
      .cell(r.fit.residual_rad)
      .cell(r.axis_dev_x_deg)
      .cell(r.axis_dev_z_deg)
      .cell(r.azimuth_error_rad)
      .cell(r.sigma_x ? 1 : 0)
      .cell(r.sigma_z ? 1 : 0);
  w.end();
}

json cell_json(const SweepCell& c) {
  return {{"counter_ueV", c.counter_ueV},          {"amplitude_ueV", c.amplitude_ueV},
          {"oscillation_amplitude", c.result.amplitude}, {"max_leakage", c.result.max_leakage},
          {"axis_dev_x_deg", c.result.axis_dev_x_deg}, {"axis_dev_z_deg", c.result.axis_dev_z_deg},
          {"azimuth_error_rad", c.result.azimuth_error_rad},
          {"sigma_x", c.result.sigma_x},           {"sigma_z", c.result.sigma_z},
          {"fit", fit_json(c.result.fit)}};
}

}  // namespace

CommandResult Session::sweep() {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(config_.output_dir);
  PulseSpec shape;
  shape.kind = pulse_kind_from_string(config_.sweep_kind);
  shape.baseline_ueV = baseline_ueV();
  shape.rise_ps = config_.tau_ps;
  shape = shape.with_hold(0.0);
  const HoldGrid holds{config_.sweep_hold_min_ps, config_.sweep_hold_max_ps, config_.sweep_hold_step_ps};
  const auto counters = linspace(config_.sweep_counter_min_ueV, config_.sweep_counter_max_ueV, config_.sweep_counter_points);
  const auto amps = linspace(config_.sweep_amplitude_min_ueV, config_.sweep_amplitude_max_ueV, config_.sweep_amplitude_points);
  const ProbeEvolver& ev = evolver();
  const SweepMap map = amplitude_sweep(ev, shape, counters, amps, holds, workers());

  const std::string csv = path("sweep.csv");
  {
    CsvWriter w(csv, kCellHeader);
    for (const auto& c : map.cells) write_cell(w, c);
  }

  // Candidates: highest oscillation amplitude first for σx, lowest for σz;
  // ties by grid order.
  auto candidates = [&](bool lowest) {
    std::vector<std::size_t> order(map.cells.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double x = map.cells[a].result.amplitude, y = map.cells[b].result.amplitude;
      return lowest ? x < y : x > y;
    });
    order.resize(std::min<std::size_t>(order.size(), config_.refine_candidates));
    return order;
  };
  const auto cx = candidates(false), cz = candidates(true);
  const double limit = std::max({std::abs(config_.sweep_counter_min_ueV), std::abs(config_.sweep_counter_max_ueV),
                                 std::abs(config_.sweep_amplitude_min_ueV), std::abs(config_.sweep_amplitude_max_ueV)});
  std::vector<RefinementResult> refined(cx.size() + cz.size());
  parallel_for(refined.size(), workers(), [&](std::size_t i) {
    const bool z = i >= cx.size();
    const SweepCell& c = map.cells[z ? cz[i - cx.size()] : cx[i]];
    refined[i] = (z ? refine_sigma_z : refine_sigma_x)(ev, shape, c.counter_ueV, c.amplitude_ueV, holds,
                                                     config_.refine_max_evaluations, 15.0, limit, CertificationLimits{});
  });
  const std::string rcsv = path("sweep_refined.csv");
  {
    CsvWriter w(rcsv, kCellHeader);
    for (const auto& r : refined) write_cell(w, r.cell);
  }
  const std::string gp = path("sweep.gp");
  write_text(gp,
             "set datafile separator ','\nset view map\nset xlabel 'counter (ueV)'\nset ylabel 'amplitude (ueV)'\n"
             "set cblabel 'oscillation amplitude'\n"
             "splot 'sweep.csv' every ::1 using 1:2:3 with points pointtype 5 palette notitle\n");

  std::size_t nx = 0, nz = 0;
  const SweepCell* best_x = nullptr;
  const SweepCell* best_z = nullptr;
  auto consider = [&](const SweepCell& c) {
    if (c.result.sigma_x && (!best_x || c.result.axis_dev_x_deg < best_x->result.axis_dev_x_deg)) best_x = &c;
    if (c.result.sigma_z && (!best_z || c.result.amplitude < best_z->result.amplitude)) best_z = &c;
  };
  for (const auto& c : map.cells) {
    nx += c.result.sigma_x;
    nz += c.result.sigma_z;
    consider(c);
  }
  std::size_t refined_x = 0, refined_z = 0;
  for (const auto& r : refined) {
    refined_x += r.cell.result.sigma_x;
    refined_z += r.cell.result.sigma_z;
    consider(r.cell);
  }
  double max_amp = 0.0, min_amp = 1.0;
  for (const auto& c : map.cells) {
    max_amp = std::max(max_amp, c.result.amplitude);
    min_amp = std::min(min_amp, c.result.amplitude);
  }
  json rep = {{"kind", to_string(map.kind)},
              {"evolver", ev.id()},
              {"cells", map.cells.size()},
              {"sigma_x_cells", nx},
              {"sigma_z_cells", nz},
              {"refined_sigma_x", refined_x},
              {"refined_sigma_z", refined_z},
              {"max_oscillation_amplitude", max_amp},
              {"min_oscillation_amplitude", min_amp}};
  if (best_x) {
    rep["best_sigma_x"] = cell_json(*best_x);
    rep["reference_sigma_x_kappa"] = compare(best_x->result.fit.kappa, kRefSigmaXKappa, 0.15);
    rep["reference_sigma_x_theta0"] = compare(best_x->result.fit.theta0, kRefSigmaXTheta0, 0.15);
  }
  if (best_z) {
    rep["best_sigma_z"] = cell_json(*best_z);
    rep["reference_sigma_z_kappa"] = compare(best_z->result.fit.kappa, kRefSigmaZKappa, 0.15);
    rep["reference_sigma_z_theta0"] = compare(best_z->result.fit.theta0, kRefSigmaZTheta0, 0.15);
  }
  return finish("sweep", rep.dump(), {csv, rcsv, gp}, seconds_since(t0));
}

CommandResult Session::tomography() {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(config_.output_dir);
  PulseSpec p;
  p.kind = pulse_kind_from_string(config_.tomography_kind);
  p.baseline_ueV = baseline_ueV();
  p.counter_ueV = config_.tomography_counter_ueV;
  p.amplitude_ueV = config_.tomography_amplitude_ueV;
  p.plateau_ps = config_.tomography_plateau_ps;
  p.rise_ps = config_.tomography_rise_ps;
  const ProbeEvolver& ev = evolver();
  const RotationEstimate est = dqd::tomography(p, ev);
  const Eigen::Matrix3d r = est.rotation;

  json rep = {{"pulse", pulse_json(p)},
              {"evolver", ev.id()},
              {"rotation", mat_json(r)},
              {"axis", vec_json(est.axis)},
              {"angle_rad", est.angle},
              {"leakage", est.leakage},
              {"residual", est.residual},
              {"non_rotation", est.non_rotation},
              {"orthogonality_error", (r.transpose() * r - Eigen::Matrix3d::Identity()).norm()},
              {"determinant", r.determinant()}};

  // Family over hold times around the configured pulse.
  const HoldGrid holds{0.0, 400.0, 10.0};
  try {
    const auto fam = ev.family(p, InitialStates::qubit_basis);
    const CellResult cell = analyze_family(*fam, holds);
    json f = fit_json(cell.fit);
    f["oscillation_amplitude"] = cell.amplitude;
    f["axis_dev_x_deg"] = cell.axis_dev_x_deg;
    f["axis_dev_z_deg"] = cell.axis_dev_z_deg;
    f["azimuth_error_rad"] = cell.azimuth_error_rad;
    f["sigma_x"] = cell.sigma_x;
    f["sigma_z"] = cell.sigma_z;
    if (cell.fit.ok) {
      const bool z_like = std::abs(cell.fit.axis.z()) > std::sqrt(0.5);
      f["reference_kappa"] = compare(cell.fit.kappa, z_like ? kRefSigmaZKappa : kRefSigmaXKappa, 0.15);
      f["reference_theta0"] = compare(cell.fit.theta0, z_like ? kRefSigmaZTheta0 : kRefSigmaXTheta0, 0.15);
    }
    rep["family"] = f;
  } catch (const Error& e) {
    rep["family"] = {{"ok", false}, {"message", std::string(to_string(e.code())) + ": " + e.what()}};
  }
  const std::string out = path("tomography.json");
  write_text(out, rep.dump(2) + "\n");
  return finish("tomography", rep.dump(), {out}, seconds_since(t0));
}

CommandResult Session::readout(const ReadoutRequest& req) {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(config_.output_dir);
  if (req.p_right.has_value() == req.trace_path.has_value())
    throw Error(ErrorCode::invalid_argument, "readout needs exactly one of a p_right value or a trace file");
  const double p = req.p_right ? *req.p_right : last_p_right(*req.trace_path);
  if (!std::isfinite(p)) throw Error(ErrorCode::invalid_argument, "readout: p_right must be finite");
  const QubitBasis& b = basis();
  const ReadoutResult r = readout_coefficients(p, b);
  json rep = {{"p_right", p}, {"P0", b.P0}, {"P1", b.P1}, {"beta2", r.beta2}, {"alpha2", r.alpha2},
              {"leakage", r.leakage}};
  if (req.trace_path) rep["trace"] = *req.trace_path;
  return finish("readout", rep.dump(), {}, seconds_since(t0));
}

CommandResult Session::bench() {
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(config_.output_dir);
  SerialExecutor serial;
  ThreadedExecutor threaded(config_.bench_workers);
  PermutedExecutor permuted(17, 0x5eed);
  std::vector<KernelExecutor*> backends{&serial, &threaded, &permuted};
  json gates = json::array();
  for (KernelExecutor* b : {static_cast<KernelExecutor*>(&threaded), static_cast<KernelExecutor*>(&permuted)}) {
    const GateResult g = correctness_gate(*b);
    gates.push_back({{"backend", g.backend}, {"passed", g.passed}, {"mismatches", g.mismatches},
                     {"max_abs_diff", g.max_abs_diff}});
  }
  const auto reports = run_bench(backends, config_.bench_grid_sizes, config_.bench_steps);
  const std::string csv = path("bench.csv");
  {
    std::ofstream out(csv);
    if (!out) throw Error(ErrorCode::io, "cannot write '" + csv + "'");
    write_bench_csv(out, reports);
  }
  json speedups = json::array();
  for (const auto& r : reports) {
    if (r.backend != threaded.id() || !r.valid) continue;
    for (const auto& s : reports)
      if (s.backend == "serial" && s.n_points == r.n_points && s.valid)
        speedups.push_back({{"n_points", r.n_points}, {"speedup", r.steps_per_s / s.steps_per_s}});
  }
  json rep = {{"hardware_concurrency", std::thread::hardware_concurrency()},
              {"bench_workers", config_.bench_workers},
              {"gates", gates},
              {"threaded_speedup", speedups}};
  return finish("bench", rep.dump(), {csv}, seconds_since(t0));
}

}  // namespace dqd
