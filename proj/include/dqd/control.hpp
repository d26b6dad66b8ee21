#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dqd/lsm.hpp"
#include "dqd/propagator.hpp"
#include "dqd/qubit_basis.hpp"

namespace dqd {

enum class PulseKind { trapezoid, spin_echo };

const char* to_string(PulseKind kind) noexcept;
PulseKind pulse_kind_from_string(const std::string& s);

/// Detuning pulse. Levels are absolute detunings in μeV. Trapezoid nodes:
/// (0, base) (τ, A) (τ+t_p, A) (2τ+t_p, base). Spin echo nodes, with
/// hold = t_p − 4τ: (0, base) (τ, Ā′) (2τ, A′) (2τ+hold, A′) (3τ+hold, Ā′)
/// (4τ+hold, base).
struct PulseSpec {
  PulseKind kind = PulseKind::trapezoid;
  double baseline_ueV = 0.0;
  double amplitude_ueV = 0.0;  // A or A′
  double counter_ueV = 0.0;    // Ā′
  double plateau_ps = 0.0;     // t_p
  double rise_ps = 90.0;       // τ

  void validate() const;
  double duration() const;
  /// Time spent at the plateau level; the variable of the linear angle model.
  double hold_ps() const;
  PulseSpec with_hold(double hold_ps) const;
  std::vector<std::pair<double, double>> nodes() const;
  DetuningSchedule detuning_schedule() const;  // μeV
  /// Segments before and after the plateau, each starting at t = 0.
  DetuningSchedule head() const;
  DetuningSchedule tail() const;
};

double waveform(const PulseSpec& spec, double t_ps);  // μeV
double waveform_slope(const PulseSpec& spec, double t_ps, double lambda);  // meV
DetuningSchedule to_slope_schedule(const DetuningSchedule& detuning_ueV, double lambda);

/// Final states of a set of initial states, seen through the qubit subspace.
struct SubspaceMap {
  Eigen::MatrixXcd coeffs;  // 2 × m: ⟨ψk, final_i⟩
  Eigen::MatrixXcd gram;    // m × m: ⟨final_i, final_j⟩

  Eigen::Vector2cd project(const Eigen::VectorXcd& c) const { return coeffs * c; }
  double leakage(const Eigen::VectorXcd& c) const;
};

enum class InitialStates {
  qubit_basis,       // ψ0, ψ1
  baseline_ground,   // ground state at the pulse baseline
};

class PlateauFamily {
 public:
  virtual ~PlateauFamily() = default;
  virtual SubspaceMap at(double hold_ps) const = 0;
};

class ProbeEvolver {
 public:
  virtual ~ProbeEvolver() = default;
  virtual SubspaceMap evolve(const PulseSpec& pulse, InitialStates init) const = 0;
  /// Same pulse shape for every hold time; head and tail are evolved once.
  virtual std::unique_ptr<PlateauFamily> family(const PulseSpec& shape, InitialStates init) const = 0;
  virtual std::string id() const = 0;
};

/// Grid evolution with the leapfrog propagator. Families expand the state at
/// the plateau start in the lowest `plateau_states` eigenstates of the plateau
/// Hamiltonian and raise `subspace` if more than 1e-6 of the norm is lost.
class FullEvolver final : public ProbeEvolver {
 public:
  FullEvolver(const DeviceModel& device, const QubitBasis& basis, PropagationOptions options = {},
              int plateau_states = 6);
  SubspaceMap evolve(const PulseSpec& pulse, InitialStates init) const override;
  std::unique_ptr<PlateauFamily> family(const PulseSpec& shape, InitialStates init) const override;
  std::string id() const override { return "full"; }

  std::vector<Wavefunction> initial_states(const PulseSpec& pulse, InitialStates init) const;
  Wavefunction run(const Wavefunction& psi, const DetuningSchedule& detuning_ueV) const;
  const DeviceModel& device() const { return device_; }
  const QubitBasis& basis() const { return basis_; }

 private:
  const DeviceModel& device_;
  const QubitBasis& basis_;
  PropagationOptions options_;
  int plateau_states_;
};

/// The two-level model with ε, Δ in μeV.
class LsmEvolver final : public ProbeEvolver {
 public:
  LsmEvolver(double delta_ueV, double hbar_ueV_ps, double max_substep_ps = 0.1);
  SubspaceMap evolve(const PulseSpec& pulse, InitialStates init) const override;
  std::unique_ptr<PlateauFamily> family(const PulseSpec& shape, InitialStates init) const override;
  std::string id() const override { return "lsm"; }

  Eigen::MatrixXcd initial_states(const PulseSpec& pulse, InitialStates init) const;
  double delta() const { return delta_; }
  double hbar() const { return hbar_; }
  double substep() const { return substep_; }

 private:
  double delta_;
  double hbar_;
  double substep_;
};

struct AxisAngle {
  Vec3 axis{1.0, 0.0, 0.0};
  double angle = 0.0;
};

Eigen::Matrix3d rotation_about(const Vec3& axis, double angle);
/// Angle in [0, π]; for angle 0 the axis is x̂.
AxisAngle axis_angle(const Eigen::Matrix3d& r);
/// Angle of Rᵀ·Q.
double rotation_distance(const Eigen::Matrix3d& r, const Eigen::Matrix3d& q);

/// det = +1 orthogonal R minimizing ‖R·from − to‖_F.
Eigen::Matrix3d procrustes_rotation(const Eigen::Matrix3d& from, const Eigen::Matrix3d& to);

struct RotationEstimate {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 axis{1.0, 0.0, 0.0};
  double angle = 0.0;
  double leakage = 0.0;
  double residual = 0.0;
  bool non_rotation = false;  // residual > 0.01
  Eigen::Matrix3d initial_bloch;  // probes as columns: ψ0, (ψ0+ψ1)/√2, (ψ0+iψ1)/√2
  Eigen::Matrix3d final_bloch;
};

/// Rotation fitted to the three probes of a qubit-basis map. Raises
/// `subspace` when any probe leaks more than max_leakage and `degenerate`
/// when the final Bloch vectors are coplanar.
RotationEstimate estimate_rotation(const SubspaceMap& map, double max_leakage = 0.02);
RotationEstimate tomography(const PulseSpec& pulse, const ProbeEvolver& evolver);

struct RotationSample {
  double hold_ps = 0.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
};

/// R(h) = R_m(ϑ0 + κ·h)·F with h the plateau hold time.
struct RotationFamilyFit {
  Vec3 axis{1.0, 0.0, 0.0};
  double kappa = 0.0;   // rad/ps
  double theta0 = 0.0;  // rad
  Eigen::Matrix3d fixed = Eigen::Matrix3d::Identity();
  AxisAngle fixed_axis_angle;
  double residual_rad = 0.0;
  bool ok = false;
  std::string message;

  Eigen::Matrix3d model(double hold_ps) const { return rotation_about(axis, theta0 + kappa * hold_ps) * fixed; }
};

/// Fits the linear family. The axis is oriented so axis·reference ≥ 0. With
/// a fixed-axis hint, F is restricted to rotations about the hint; otherwise
/// F has no component along the fitted axis.
RotationFamilyFit fit_rotation_family(std::vector<RotationSample> samples, const Vec3& reference = Vec3::UnitX(),
                                      const std::optional<Vec3>& fixed_axis_hint = std::nullopt);
/// As fit_rotation_family, raising `decomposition` on a residual above 0.05 rad.
RotationFamilyFit decompose_rotation(std::vector<RotationSample> samples, const Vec3& reference = Vec3::UnitX(),
                                     const std::optional<Vec3>& fixed_axis_hint = std::nullopt);

struct HoldGrid {
  double min_ps = 0.0;
  double max_ps = 1000.0;
  double step_ps = 2.0;
  std::vector<double> values() const;
};

struct CellResult {
  double amplitude = 0.0;  // max − min of |⟨ψ1, ψ_final⟩|² for the ψ0 probe
  double max_leakage = 0.0;
  RotationFamilyFit fit;
  double axis_dev_x_deg = 180.0;
  double axis_dev_z_deg = 180.0;
  double azimuth_error_rad = 0.0;  // equatorial probe vs the fitted model
  bool sigma_x = false;
  bool sigma_z = false;
};

struct CertificationLimits {
  double sigma_x_min_amplitude = 0.99;
  double sigma_z_max_amplitude = 0.01;
  double max_axis_dev_deg = 2.0;
  double max_azimuth_error_rad = 0.05;
};

/// Amplitude over the hold grid plus the rotation-family fit and certification.
CellResult analyze_family(const PlateauFamily& family, const HoldGrid& holds, const CertificationLimits& limits = {});
CellResult analyze_pulse(const ProbeEvolver& evolver, const PulseSpec& shape, const HoldGrid& holds,
                         const CertificationLimits& limits = {});

struct SweepCell {
  double counter_ueV = 0.0;
  double amplitude_ueV = 0.0;
  CellResult result;
};

struct SweepMap {
  PulseKind kind = PulseKind::spin_echo;
  std::vector<double> counter_grid;
  std::vector<double> amplitude_grid;
  std::vector<SweepCell> cells;  // counter-major
};

/// Trapezoid sweeps ignore counter_grid and use a single row.
SweepMap amplitude_sweep(const ProbeEvolver& evolver, const PulseSpec& shape, const std::vector<double>& counter_grid,
                         const std::vector<double>& amplitude_grid, const HoldGrid& holds, unsigned workers = 1,
                         const CertificationLimits& limits = {});

std::vector<double> linspace(double lo, double hi, std::size_t n);

struct RefinementResult {
  SweepCell cell;
  int evaluations = 0;
};

/// Nelder–Mead over (Ā′, A′) minimizing the axis deviation from ±x̂ plus a
/// penalty when the amplitude drops below 0.995; levels clamped to ±limit.
RefinementResult refine_sigma_x(const ProbeEvolver& evolver, const PulseSpec& shape, double counter0,
                                double amplitude0, const HoldGrid& holds, int max_evaluations = 150,
                                double initial_step_ueV = 15.0, double limit_ueV = 200.0,
                                const CertificationLimits& limits = {});
/// Same search toward a ẑ family: axis deviation from ±ẑ plus the azimuth
/// error, with a penalty once the amplitude exceeds 0.005.
RefinementResult refine_sigma_z(const ProbeEvolver& evolver, const PulseSpec& shape, double counter0,
                                double amplitude0, const HoldGrid& holds, int max_evaluations = 150,
                                double initial_step_ueV = 15.0, double limit_ueV = 200.0,
                                const CertificationLimits& limits = {});

struct PrepSample {
  double amplitude_ueV = 0.0;
  double plateau_ps = 0.0;
  double distance = 1.0;
};

struct PreparationResult {
  PrepSample grid_best;
  PrepSample refined;
  std::vector<PrepSample> grid;  // best t_p for each amplitude
  int rounds = 0;
};

/// Trapezoid from the baseline ground state toward ψ0, scored by
/// S = 1 − |⟨ψ0, ψ_final⟩|². Grid search then alternating refinement.
PreparationResult prepare_qubit(const ProbeEvolver& evolver, double baseline_ueV, double rise_ps,
                                const std::vector<double>& amplitude_grid, const HoldGrid& plateau_grid,
                                unsigned workers = 1, int rounds = 3);

}  // namespace dqd
