#include "dqd/control.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_min.h>
#include <gsl/gsl_multimin.h>

#include "dqd/parallel.hpp"

namespace dqd {

const char* to_string(PulseKind kind) noexcept {
  return kind == PulseKind::trapezoid ? "trapezoid" : "spin_echo";
}

PulseKind pulse_kind_from_string(const std::string& s) {
  if (s == "trapezoid") return PulseKind::trapezoid;
  if (s == "spin_echo") return PulseKind::spin_echo;
  throw Error(ErrorCode::configuration, "unknown pulse kind '" + s + "' (expected trapezoid or spin_echo)");
}

void PulseSpec::validate() const {
  if (!(rise_ps >= 0.0)) throw Error(ErrorCode::invalid_argument, "pulse: rise time must be >= 0");
  if (!(plateau_ps >= 0.0)) throw Error(ErrorCode::invalid_argument, "pulse: plateau time must be >= 0");
  if (kind == PulseKind::spin_echo && plateau_ps < 4.0 * rise_ps - 1e-9)
    throw Error(ErrorCode::invalid_argument, "pulse: spin-echo plateau time must be >= 4 rise times");
  for (double v : {baseline_ueV, amplitude_ueV, counter_ueV, plateau_ps, rise_ps})
    if (!std::isfinite(v)) throw Error(ErrorCode::invalid_argument, "pulse: non-finite parameter");
}

double PulseSpec::duration() const {
  return kind == PulseKind::trapezoid ? plateau_ps + 2.0 * rise_ps : plateau_ps;
}

double PulseSpec::hold_ps() const {
  return kind == PulseKind::trapezoid ? plateau_ps : std::max(0.0, plateau_ps - 4.0 * rise_ps);
}

PulseSpec PulseSpec::with_hold(double hold) const {
  PulseSpec p = *this;
  p.plateau_ps = kind == PulseKind::trapezoid ? hold : hold + 4.0 * rise_ps;
  return p;
}

std::vector<std::pair<double, double>> PulseSpec::nodes() const {
  validate();
  const double t = rise_ps;
  const double h = hold_ps();
  if (kind == PulseKind::trapezoid)
    return {{0.0, baseline_ueV}, {t, amplitude_ueV}, {t + h, amplitude_ueV}, {2.0 * t + h, baseline_ueV}};
  return {{0.0, baseline_ueV},         {t, counter_ueV},           {2.0 * t, amplitude_ueV},
          {2.0 * t + h, amplitude_ueV}, {3.0 * t + h, counter_ueV}, {4.0 * t + h, baseline_ueV}};
}

DetuningSchedule PulseSpec::detuning_schedule() const { return {nodes()}; }

DetuningSchedule PulseSpec::head() const {
  validate();
  if (kind == PulseKind::trapezoid) return {{{0.0, baseline_ueV}, {rise_ps, amplitude_ueV}}};
  return {{{0.0, baseline_ueV}, {rise_ps, counter_ueV}, {2.0 * rise_ps, amplitude_ueV}}};
}

DetuningSchedule PulseSpec::tail() const {
  validate();
  if (kind == PulseKind::trapezoid) return {{{0.0, amplitude_ueV}, {rise_ps, baseline_ueV}}};
  return {{{0.0, amplitude_ueV}, {rise_ps, counter_ueV}, {2.0 * rise_ps, baseline_ueV}}};
}

double waveform(const PulseSpec& spec, double t) { return spec.detuning_schedule().at(t); }

double waveform_slope(const PulseSpec& spec, double t, double lambda) {
  return waveform(spec, t) / (1000.0 * lambda);
}

DetuningSchedule to_slope_schedule(const DetuningSchedule& eps, double lambda) {
  DetuningSchedule s = eps;
  for (auto& bp : s.breakpoints) bp.second /= 1000.0 * lambda;
  return s;
}

double SubspaceMap::leakage(const Eigen::VectorXcd& c) const {
  const double total = (c.adjoint() * gram * c)(0, 0).real();
  return std::max(0.0, total - project(c).squaredNorm());
}

// ---------------------------------------------------------------- full model

FullEvolver::FullEvolver(const DeviceModel& device, const QubitBasis& basis, PropagationOptions options,
                         int plateau_states)
    : device_(device), basis_(basis), options_(std::move(options)), plateau_states_(plateau_states) {
  options_.record_trace = false;
  if (plateau_states_ < 2) throw Error(ErrorCode::invalid_argument, "full evolver: need >= 2 plateau states");
}

std::vector<Wavefunction> FullEvolver::initial_states(const PulseSpec& pulse, InitialStates init) const {
  if (init == InitialStates::qubit_basis) return {basis_.psi0, basis_.psi1};
  return {device_.eigenpairs(device_.slope_for(pulse.baseline_ueV), 1)[0].state};
}

Wavefunction FullEvolver::run(const Wavefunction& psi, const DetuningSchedule& eps) const {
  const DetuningSchedule slope = to_slope_schedule(eps, device_.lambda);
  return propagate(psi, device_.field, device_.grid, device_.units, slope, slope.duration(), options_).state;
}

namespace {

SubspaceMap map_from_states(const std::vector<Wavefunction>& finals, const QubitBasis& basis, const Grid& grid) {
  const auto m = static_cast<Eigen::Index>(finals.size());
  SubspaceMap map;
  map.coeffs.resize(2, m);
  map.gram.resize(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    map.coeffs(0, i) = inner_product(basis.psi0, finals[i], grid);
    map.coeffs(1, i) = inner_product(basis.psi1, finals[i], grid);
    for (Eigen::Index j = 0; j < m; ++j) map.gram(i, j) = inner_product(finals[i], finals[j], grid);
  }
  return map;
}

class FullFamily final : public PlateauFamily {
 public:
  Eigen::MatrixXcd c;      // K × m expansion of the head states
  Eigen::MatrixXcd p;      // 2 × K projections of the evolved plateau states
  Eigen::MatrixXcd g;      // K × K Gram of the evolved plateau states
  Eigen::VectorXd energy;  // meV
  double hbar = kHbar;

  SubspaceMap at(double hold) const override {
    Eigen::MatrixXcd a = c;
    for (Eigen::Index j = 0; j < a.rows(); ++j)
      a.row(j) *= std::exp(std::complex<double>(0.0, -energy(j) * hold / hbar));
    SubspaceMap map;
    map.coeffs = p * a;
    map.gram = a.adjoint() * g * a;
    return map;
  }
};

}  // namespace

SubspaceMap FullEvolver::evolve(const PulseSpec& pulse, InitialStates init) const {
  const DetuningSchedule eps = pulse.detuning_schedule();
  std::vector<Wavefunction> finals;
  for (const auto& psi : initial_states(pulse, init)) finals.push_back(run(psi, eps));
  return map_from_states(finals, basis_, device_.grid);
}

std::unique_ptr<PlateauFamily> FullEvolver::family(const PulseSpec& shape, InitialStates init) const {
  const Grid& grid = device_.grid;
  const auto initial = initial_states(shape, init);
  const auto plateau = device_.eigenpairs(device_.slope_for(shape.amplitude_ueV), plateau_states_);
  const auto k = static_cast<Eigen::Index>(plateau.size());
  const auto m = static_cast<Eigen::Index>(initial.size());

  auto fam = std::make_unique<FullFamily>();
  fam->hbar = device_.units.hbar;
  fam->c.resize(k, m);
  fam->energy.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) fam->energy(j) = plateau[j].energy;

  const DetuningSchedule head = shape.head();
  for (Eigen::Index i = 0; i < m; ++i) {
    const Wavefunction h = run(initial[i], head);
    double kept = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      fam->c(j, i) = inner_product(plateau[j].state, h, grid);
      kept += std::norm(fam->c(j, i));
    }
    const double lost = norm_squared(h, grid) - kept;
    if (lost > 1e-6)
      throw Error(ErrorCode::subspace, "plateau expansion misses " + std::to_string(lost * 1e6) + "e-6" +
                                           " of the norm; raise the number of plateau states");
  }

  const DetuningSchedule tail = shape.tail();
  std::vector<Wavefunction> tails;
  for (const auto& e : plateau) tails.push_back(run(e.state, tail));
  fam->p.resize(2, k);
  fam->g.resize(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    fam->p(0, j) = inner_product(basis_.psi0, tails[j], grid);
    fam->p(1, j) = inner_product(basis_.psi1, tails[j], grid);
    for (Eigen::Index l = 0; l < k; ++l) fam->g(j, l) = inner_product(tails[j], tails[l], grid);
  }
  return fam;
}

// ----------------------------------------------------------------- two-level

LsmEvolver::LsmEvolver(double delta, double hbar, double substep) : delta_(delta), hbar_(hbar), substep_(substep) {
  if (!(delta > 0.0 && hbar > 0.0 && substep > 0.0))
    throw Error(ErrorCode::invalid_argument, "lsm evolver: delta, hbar and sub-step must be positive");
}

Eigen::MatrixXcd LsmEvolver::initial_states(const PulseSpec& pulse, InitialStates init) const {
  if (init == InitialStates::qubit_basis) return Eigen::MatrixXcd::Identity(2, 2);
  const auto ev = lsm_eigenvectors(pulse.baseline_ueV, delta_);
  Eigen::MatrixXcd c(2, 1);
  c << ev.bonding(0), ev.bonding(1);
  return c;
}

SubspaceMap LsmEvolver::evolve(const PulseSpec& pulse, InitialStates init) const {
  const Eigen::MatrixXcd c = initial_states(pulse, init);
  SubspaceMap map;
  map.coeffs = lsm_schedule_unitary(pulse.detuning_schedule(), delta_, hbar_, substep_) * c;
  map.gram = c.adjoint() * c;
  return map;
}

namespace {

class LsmFamily final : public PlateauFamily {
 public:
  Eigen::Matrix2cd head, tail;
  Eigen::MatrixXcd init;
  double level = 0.0, delta = 0.0, hbar = 1.0;

  SubspaceMap at(double hold) const override {
    const Eigen::Matrix2cd plateau = su2_exp(Vec3(-0.5 * delta, 0.0, 0.5 * level) * (hold / hbar));
    SubspaceMap map;
    map.coeffs = tail * plateau * head * init;
    map.gram = init.adjoint() * init;
    return map;
  }
};

}  // namespace

std::unique_ptr<PlateauFamily> LsmEvolver::family(const PulseSpec& shape, InitialStates init) const {
  auto fam = std::make_unique<LsmFamily>();
  fam->head = lsm_schedule_unitary(shape.head(), delta_, hbar_, substep_);
  fam->tail = lsm_schedule_unitary(shape.tail(), delta_, hbar_, substep_);
  fam->init = initial_states(shape, init);
  fam->level = shape.amplitude_ueV;
  fam->delta = delta_;
  fam->hbar = hbar_;
  return fam;
}

// ---------------------------------------------------------------- rotations

Eigen::Matrix3d rotation_about(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

AxisAngle axis_angle(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  AxisAngle out;
  out.angle = aa.angle();
  if (out.angle > 1e-14) out.axis = aa.axis();
  if (out.angle > kPi) {
    out.angle = 2.0 * kPi - out.angle;
    out.axis = -out.axis;
  }
  return out;
}

double rotation_distance(const Eigen::Matrix3d& r, const Eigen::Matrix3d& q) {
  return axis_angle(r.transpose() * q).angle;
}

Eigen::Matrix3d procrustes_rotation(const Eigen::Matrix3d& from, const Eigen::Matrix3d& to) {
  const Eigen::Matrix3d h = to * from.transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

namespace {

std::array<Eigen::Vector2cd, 3> probe_vectors() {
  const double r = 1.0 / std::sqrt(2.0);
  return {Eigen::Vector2cd(1.0, 0.0), Eigen::Vector2cd(r, r), Eigen::Vector2cd(r, std::complex<double>(0.0, r))};
}

}  // namespace

RotationEstimate estimate_rotation(const SubspaceMap& map, double max_leakage) {
  if (map.coeffs.rows() != 2 || map.coeffs.cols() != 2)
    throw Error(ErrorCode::dimension, "estimate_rotation: needs the map of ψ0 and ψ1");
  RotationEstimate est;
  const auto probes = probe_vectors();
  for (int j = 0; j < 3; ++j) {
    est.initial_bloch.col(j) = from_vec(probes[j]).bloch();
    const Eigen::Vector2cd f = map.project(probes[j]);
    if (f.squaredNorm() < 1e-12)
      throw Error(ErrorCode::subspace, "estimate_rotation: probe left the qubit subspace");
    est.final_bloch.col(j) = from_vec(f).bloch();
    est.leakage = std::max(est.leakage, map.leakage(probes[j]));
  }
  if (est.leakage > max_leakage)
    throw Error(ErrorCode::subspace, "estimate_rotation: leakage " + std::to_string(est.leakage) +
                                         " exceeds " + std::to_string(max_leakage));
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(est.final_bloch);
  if (svd.singularValues()(2) < 1e-6)
    throw Error(ErrorCode::degenerate, "estimate_rotation: final Bloch vectors are coplanar");
  est.rotation = procrustes_rotation(est.initial_bloch, est.final_bloch);
  est.residual = (est.rotation * est.initial_bloch - est.final_bloch).norm();
  est.non_rotation = est.residual > 0.01;
  const AxisAngle aa = axis_angle(est.rotation);
  est.axis = aa.axis;
  est.angle = aa.angle;
  return est;
}

RotationEstimate tomography(const PulseSpec& pulse, const ProbeEvolver& evolver) {
  return estimate_rotation(evolver.evolve(pulse, InitialStates::qubit_basis));
}

namespace {

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  return a;
}

// q = twist·swing with twist about the unit vector n.
std::pair<Eigen::Quaterniond, Eigen::Quaterniond> twist_swing(const Eigen::Quaterniond& q, const Vec3& n) {
  const double p = q.vec().dot(n);
  Eigen::Quaterniond twist(q.w(), p * n.x(), p * n.y(), p * n.z());
  if (twist.norm() < 1e-14)
    twist = Eigen::Quaterniond::Identity();
  else
    twist.normalize();
  return {twist, twist.conjugate() * q};
}

double swing_angle(const Eigen::Matrix3d& x, const Vec3& n) {
  const auto [twist, swing] = twist_swing(Eigen::Quaterniond(x), n);
  return 2.0 * std::asin(std::min(1.0, swing.vec().norm()));
}

}  // namespace

RotationFamilyFit fit_rotation_family(std::vector<RotationSample> samples, const Vec3& reference,
                                      const std::optional<Vec3>& hint) {
  RotationFamilyFit fit;
  if (samples.size() < 5) {
    fit.message = "need at least 5 samples at distinct hold times";
    return fit;
  }
  std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.hold_ps < b.hold_ps; });
  for (std::size_t i = 1; i < samples.size(); ++i)
    if (!(samples[i].hold_ps > samples[i - 1].hold_ps)) {
      fit.message = "hold times must be distinct";
      return fit;
    }

  std::vector<Vec3> inc;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const AxisAngle aa = axis_angle(samples[i].rotation * samples[i - 1].rotation.transpose());
    inc.push_back(aa.axis * aa.angle);
  }
  const auto largest = std::max_element(inc.begin(), inc.end(), [](const Vec3& a, const Vec3& b) {
    return a.norm() < b.norm();
  });
  if (largest->norm() < 1e-9) {
    fit.message = "rotation does not change with hold time";
    return fit;
  }
  Vec3 m = Vec3::Zero();
  for (const Vec3& d : inc) m += d.dot(*largest) >= 0.0 ? d : Vec3(-d);
  m.normalize();
  if (m.dot(reference) < 0.0) m = -m;

  // Cumulative angle about m, fitted through the first sample.
  std::vector<double> theta{0.0};
  for (const Vec3& d : inc) theta.push_back(theta.back() + (d.dot(m) >= 0.0 ? d.norm() : -d.norm()));
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double dh = samples[i].hold_ps - samples[0].hold_ps;
    sxy += dh * theta[i];
    sxx += dh * dh;
  }
  fit.axis = m;
  fit.kappa = sxy / sxx;

  const Eigen::Matrix3d& r0 = samples[0].rotation;
  double phi0 = 0.0;
  if (!hint) {
    const auto [twist, swing] = twist_swing(Eigen::Quaterniond(r0), m);
    phi0 = 2.0 * std::atan2(twist.vec().dot(m), twist.w());
    fit.fixed = swing.toRotationMatrix();
  } else {
    const Vec3 n = hint->normalized();
    auto misfit = [&](double phi) { return swing_angle(rotation_about(m, -phi) * r0, n); };
    const int scan = 720;
    double best = 0.0, best_val = std::numeric_limits<double>::infinity();
    for (int i = 0; i < scan; ++i) {
      const double phi = -kPi + 2.0 * kPi * i / scan;
      const double v = misfit(phi);
      if (v < best_val) {
        best_val = v;
        best = phi;
      }
    }
    double lo = best - 2.0 * kPi / scan, hi = best + 2.0 * kPi / scan;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 80; ++it) {
      const double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
      if (misfit(a) < misfit(b))
        hi = b;
      else
        lo = a;
    }
    phi0 = 0.5 * (lo + hi);
    const auto [twist, swing] = twist_swing(Eigen::Quaterniond(rotation_about(m, -phi0) * r0), n);
    fit.fixed = twist.toRotationMatrix();
  }
  fit.fixed_axis_angle = axis_angle(fit.fixed);
  fit.theta0 = wrap_angle(phi0 - fit.kappa * samples[0].hold_ps);

  for (const auto& s : samples)
    fit.residual_rad = std::max(fit.residual_rad, rotation_distance(fit.model(s.hold_ps), s.rotation));
  fit.ok = fit.residual_rad <= 0.05;
  if (!fit.ok) fit.message = "angle growth is not linear (residual " + std::to_string(fit.residual_rad) + " rad)";
  return fit;
}

RotationFamilyFit decompose_rotation(std::vector<RotationSample> samples, const Vec3& reference,
                                     const std::optional<Vec3>& hint) {
  if (samples.size() < 5)
    throw Error(ErrorCode::invalid_argument, "decompose_rotation: need at least 5 tomography estimates");
  RotationFamilyFit fit = fit_rotation_family(std::move(samples), reference, hint);
  if (!fit.ok) throw Error(ErrorCode::decomposition, "decompose_rotation: " + fit.message);
  return fit;
}

// -------------------------------------------------------------------- sweeps

std::vector<double> HoldGrid::values() const {
  if (!(step_ps > 0.0) || !(max_ps >= min_ps) || !(min_ps >= 0.0))
    throw Error(ErrorCode::invalid_argument, "hold grid: need 0 <= min <= max and step > 0");
  std::vector<double> v;
  const auto n = static_cast<std::size_t>(std::floor((max_ps - min_ps) / step_ps + 1e-9));
  for (std::size_t i = 0; i <= n; ++i) v.push_back(min_ps + step_ps * static_cast<double>(i));
  return v;
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 1) return {lo};
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

namespace {

double azimuth(const Vec3& v) { return std::atan2(v.y(), v.x()); }

double degrees(double rad) { return rad * 180.0 / kPi; }

}  // namespace

CellResult analyze_family(const PlateauFamily& family, const HoldGrid& holds, const CertificationLimits& limits) {
  CellResult cell;
  double pmin = 1.0, pmax = 0.0;
  std::vector<RotationSample> samples;
  std::vector<Vec3> equatorial;
  bool rotations_ok = true;
  for (double h : holds.values()) {
    const SubspaceMap map = family.at(h);
    const double p1 = std::norm(map.coeffs(1, 0));
    pmin = std::min(pmin, p1);
    pmax = std::max(pmax, p1);
    try {
      const RotationEstimate est = estimate_rotation(map, std::numeric_limits<double>::infinity());
      cell.max_leakage = std::max(cell.max_leakage, est.leakage);
      samples.push_back({h, est.rotation});
      equatorial.push_back(est.final_bloch.col(1));
    } catch (const Error&) {
      rotations_ok = false;
    }
  }
  cell.amplitude = pmax - pmin;
  if (!rotations_ok) {
    cell.fit.message = "tomography failed for some hold times";
    return cell;
  }
  cell.fit = fit_rotation_family(samples);
  if (!cell.fit.ok) return cell;
  // Near-ẑ axes are reported pointing up; the model is unchanged by the flip.
  if (std::abs(cell.fit.axis.z()) > std::abs(cell.fit.axis.x()) && cell.fit.axis.z() < 0.0) {
    cell.fit.axis = -cell.fit.axis;
    cell.fit.kappa = -cell.fit.kappa;
    cell.fit.theta0 = -cell.fit.theta0;
  }

  cell.axis_dev_x_deg = degrees(std::acos(std::min(1.0, std::abs(cell.fit.axis.x()))));
  cell.axis_dev_z_deg = degrees(std::acos(std::min(1.0, std::abs(cell.fit.axis.z()))));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Vec3 predicted = cell.fit.model(samples[i].hold_ps) * Vec3::UnitX();
    cell.azimuth_error_rad =
        std::max(cell.azimuth_error_rad, std::abs(wrap_angle(azimuth(equatorial[i]) - azimuth(predicted))));
  }
  const bool contained = cell.max_leakage <= 0.02;
  cell.sigma_x = contained && cell.amplitude >= limits.sigma_x_min_amplitude &&
                 cell.axis_dev_x_deg <= limits.max_axis_dev_deg;
  cell.sigma_z = contained && cell.amplitude <= limits.sigma_z_max_amplitude &&
                 cell.axis_dev_z_deg <= limits.max_axis_dev_deg &&
                 cell.azimuth_error_rad <= limits.max_azimuth_error_rad;
  return cell;
}

CellResult analyze_pulse(const ProbeEvolver& evolver, const PulseSpec& shape, const HoldGrid& holds,
                         const CertificationLimits& limits) {
  return analyze_family(*evolver.family(shape, InitialStates::qubit_basis), holds, limits);
}

SweepMap amplitude_sweep(const ProbeEvolver& evolver, const PulseSpec& shape, const std::vector<double>& counter_grid,
                         const std::vector<double>& amplitude_grid, const HoldGrid& holds, unsigned workers,
                         const CertificationLimits& limits) {
  SweepMap map;
  map.kind = shape.kind;
  map.counter_grid = shape.kind == PulseKind::trapezoid ? std::vector<double>{shape.counter_ueV} : counter_grid;
  map.amplitude_grid = amplitude_grid;
  if (map.counter_grid.empty() || map.amplitude_grid.empty())
    throw Error(ErrorCode::invalid_argument, "amplitude_sweep: empty grid");
  holds.values();
  const std::size_t na = amplitude_grid.size();
  map.cells.resize(map.counter_grid.size() * na);
  parallel_for(map.cells.size(), workers, [&](std::size_t idx) {
    PulseSpec p = shape;
    p.counter_ueV = map.counter_grid[idx / na];
    p.amplitude_ueV = amplitude_grid[idx % na];
    map.cells[idx] = {p.counter_ueV, p.amplitude_ueV, analyze_pulse(evolver, p, holds, limits)};
  });
  return map;
}

// ---------------------------------------------------------------- refinement

namespace {

struct NmContext {
  const ProbeEvolver* evolver;
  const PulseSpec* shape;
  const HoldGrid* holds;
  const CertificationLimits* limits;
  double limit;
  bool target_z;
  int max_evaluations;
  int evaluations = 0;
  double best_objective = std::numeric_limits<double>::infinity();
  SweepCell best;
};

double nm_objective(const gsl_vector* x, void* params) {
  auto& ctx = *static_cast<NmContext*>(params);
  PulseSpec p = *ctx.shape;
  p.counter_ueV = std::clamp(gsl_vector_get(x, 0), -ctx.limit, ctx.limit);
  p.amplitude_ueV = std::clamp(gsl_vector_get(x, 1), -ctx.limit, ctx.limit);
  if (ctx.evaluations >= ctx.max_evaluations) return 1e6;
  ++ctx.evaluations;
  CellResult r;
  try {
    r = analyze_pulse(*ctx.evolver, p, *ctx.holds, *ctx.limits);
  } catch (const Error&) {
    return 1e6;
  }
  double obj = 180.0;
  if (ctx.target_z) {
    if (r.fit.ok) obj = r.axis_dev_z_deg + 100.0 * r.azimuth_error_rad;
    obj += 1000.0 * std::max(0.0, r.amplitude - 0.005);
  } else {
    if (r.fit.ok) obj = r.axis_dev_x_deg;
    obj += 1000.0 * std::max(0.0, 0.995 - r.amplitude);
  }
  if (obj < ctx.best_objective) {
    ctx.best_objective = obj;
    ctx.best = {p.counter_ueV, p.amplitude_ueV, r};
  }
  return obj;
}

RefinementResult refine(const ProbeEvolver& evolver, const PulseSpec& shape, double counter0, double amplitude0,
                        const HoldGrid& holds, int max_evaluations, double step, double limit,
                        const CertificationLimits& limits, bool target_z) {
  gsl_set_error_handler_off();
  NmContext ctx{&evolver, &shape, &holds, &limits, limit, target_z, max_evaluations, 0, std::numeric_limits<double>::infinity(), {}};
  gsl_multimin_function f{nm_objective, 2, &ctx};
  gsl_vector* x = gsl_vector_alloc(2);
  gsl_vector* ss = gsl_vector_alloc(2);
  gsl_vector_set(x, 0, counter0);
  gsl_vector_set(x, 1, amplitude0);
  gsl_vector_set_all(ss, step);
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 2);
  gsl_multimin_fminimizer_set(s, &f, x, ss);
  while (ctx.evaluations < max_evaluations) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), 1e-3) == GSL_SUCCESS) break;
    const CellResult& b = ctx.best.result;
    if (!target_z && b.sigma_x && b.axis_dev_x_deg <= 0.5 * limits.max_axis_dev_deg && b.amplitude >= 0.995) break;
    if (target_z && b.sigma_z && b.axis_dev_z_deg <= 0.5 * limits.max_axis_dev_deg && b.amplitude <= 0.005) break;
  }
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(ss);
  gsl_vector_free(x);
  return {ctx.best, ctx.evaluations};
}

}  // namespace

RefinementResult refine_sigma_x(const ProbeEvolver& evolver, const PulseSpec& shape, double counter0,
                                double amplitude0, const HoldGrid& holds, int max_evaluations, double step,
                                double limit, const CertificationLimits& limits) {
  return refine(evolver, shape, counter0, amplitude0, holds, max_evaluations, step, limit, limits, false);
}

RefinementResult refine_sigma_z(const ProbeEvolver& evolver, const PulseSpec& shape, double counter0,
                                double amplitude0, const HoldGrid& holds, int max_evaluations, double step,
                                double limit, const CertificationLimits& limits) {
  return refine(evolver, shape, counter0, amplitude0, holds, max_evaluations, step, limit, limits, true);
}

// --------------------------------------------------------------- preparation

namespace {

struct Min1d {
  double x = 0.0;
  double f = 0.0;
};

// Minimizes f on [lo, hi] starting from a 9-point scan; Brent polish when bracketed.
Min1d minimize_1d(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const int n = 9;
  std::vector<double> xs(n), fs(n);
  for (int i = 0; i < n; ++i) {
    xs[i] = lo + (hi - lo) * i / (n - 1);
    fs[i] = f(xs[i]);
  }
  const int b = static_cast<int>(std::min_element(fs.begin(), fs.end()) - fs.begin());
  Min1d best{xs[b], fs[b]};
  if (b == 0 || b == n - 1 || !(fs[b] < fs[b - 1] && fs[b] < fs[b + 1])) return best;

  gsl_set_error_handler_off();
  struct Ctx {
    const std::function<double(double)>* f;
  } ctx{&f};
  gsl_function gf{[](double x, void* p) { return (*static_cast<Ctx*>(p)->f)(x); }, &ctx};
  gsl_min_fminimizer* s = gsl_min_fminimizer_alloc(gsl_min_fminimizer_brent);
  if (gsl_min_fminimizer_set_with_values(s, &gf, xs[b], fs[b], xs[b - 1], fs[b - 1], xs[b + 1], fs[b + 1]) ==
      GSL_SUCCESS) {
    for (int it = 0; it < 100; ++it) {
      if (gsl_min_fminimizer_iterate(s) != GSL_SUCCESS) break;
      const double a = gsl_min_fminimizer_x_lower(s), c = gsl_min_fminimizer_x_upper(s);
      if (gsl_min_test_interval(a, c, tol, 0.0) == GSL_SUCCESS) break;
    }
    const double fx = gsl_min_fminimizer_f_minimum(s);
    if (fx < best.f) best = {gsl_min_fminimizer_x_minimum(s), fx};
  }
  gsl_min_fminimizer_free(s);
  return best;
}

}  // namespace

PreparationResult prepare_qubit(const ProbeEvolver& evolver, double baseline, double rise,
                                const std::vector<double>& amplitude_grid, const HoldGrid& plateau_grid,
                                unsigned workers, int rounds) {
  if (amplitude_grid.empty()) throw Error(ErrorCode::invalid_argument, "prepare_qubit: empty amplitude grid");
  const std::vector<double> tps = plateau_grid.values();
  PulseSpec shape;
  shape.kind = PulseKind::trapezoid;
  shape.baseline_ueV = baseline;
  shape.rise_ps = rise;

  auto family_at = [&](double a) {
    PulseSpec p = shape;
    p.amplitude_ueV = a;
    return evolver.family(p, InitialStates::baseline_ground);
  };
  auto distance = [](const PlateauFamily& fam, double tp) {
    return 1.0 - std::norm(fam.at(std::max(0.0, tp)).coeffs(0, 0));
  };

  PreparationResult out;
  out.grid.resize(amplitude_grid.size());
  parallel_for(amplitude_grid.size(), workers, [&](std::size_t i) {
    const auto fam = family_at(amplitude_grid[i]);
    PrepSample best{amplitude_grid[i], tps.front(), 2.0};
    for (double tp : tps) {
      const double s = distance(*fam, tp);
      if (s < best.distance) best = {amplitude_grid[i], tp, s};
    }
    out.grid[i] = best;
  });
  out.grid_best = *std::min_element(out.grid.begin(), out.grid.end(),
                                    [](const auto& a, const auto& b) { return a.distance < b.distance; });
  if (!(out.grid_best.distance < 0.5))
    throw Error(ErrorCode::sweep_range, "prepare_qubit: no grid point reaches S < 0.5");

  double step_a = amplitude_grid.size() > 1 ? std::abs(amplitude_grid[1] - amplitude_grid[0]) : 1.0;
  double step_t = plateau_grid.step_ps;
  PrepSample cur = out.grid_best;
  for (int r = 0; r < rounds; ++r) {
    const auto fam = family_at(cur.amplitude_ueV);
    const Min1d t = minimize_1d([&](double tp) { return distance(*fam, tp); }, std::max(0.0, cur.plateau_ps - step_t),
                                cur.plateau_ps + step_t, 1e-6);
    cur.plateau_ps = t.x;
    cur.distance = t.f;

    double tp_at_best = cur.plateau_ps;
    auto profile = [&](double a) {
      const auto fa = family_at(a);
      const Min1d m = minimize_1d([&](double tp) { return distance(*fa, tp); },
                                  std::max(0.0, cur.plateau_ps - step_t), cur.plateau_ps + step_t, 1e-6);
      return m;
    };
    const Min1d a = minimize_1d(
        [&](double amp) {
          const Min1d m = profile(amp);
          return m.f;
        },
        cur.amplitude_ueV - step_a, cur.amplitude_ueV + step_a, 1e-6);
    if (a.f < cur.distance) {
      tp_at_best = profile(a.x).x;
      cur = {a.x, tp_at_best, a.f};
    }
    out.rounds = r + 1;
    step_a *= 0.25;
    step_t *= 0.5;
  }
  out.refined = cur;
  return out;
}

}  // namespace dqd
