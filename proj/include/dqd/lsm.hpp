#pragma once

#include <array>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "dqd/core.hpp"
#include "dqd/propagator.hpp"

namespace dqd {

/// ½εσz − ½Δσx (+ offset) on (ψ0, ψ1); energies in μeV.
struct TwoLevelHamiltonian {
  double epsilon_ueV = 0.0;
  double delta_ueV = 0.0;
  double offset_ueV = 0.0;

  double splitting() const { return std::hypot(epsilon_ueV, delta_ueV); }
  Eigen::Matrix2cd matrix() const;
};

using Vec3 = Eigen::Vector3d;

struct QubitState {
  std::complex<double> a{1.0, 0.0};
  std::complex<double> b{0.0, 0.0};

  static QubitState from_angles(double theta, double phi);
  Eigen::Vector2cd vec() const { return {a, b}; }
  double norm_squared() const { return std::norm(a) + std::norm(b); }
  /// (2Re a*b, −2Im a*b, |a|² − |b|²) for a normalized copy.
  Vec3 bloch() const;
  double theta() const;
  double phi() const;  // in [0, 2π)
};

QubitState from_vec(const Eigen::Vector2cd& v);

struct LsmEigenvectors {
  Eigen::Vector2d bonding;
  Eigen::Vector2d antibonding;
  double e_bonding = 0.0;
  double e_antibonding = 0.0;
};

/// Eigenvectors of ½εσz − ½Δσx, each with a non-negative first component.
LsmEigenvectors lsm_eigenvectors(double epsilon_ueV, double delta_ueV);

/// exp(−iG) for G = g·σ.
Eigen::Matrix2cd su2_exp(const Vec3& g);

/// Propagator for ε ramping linearly from eps0 to eps1 over duration_ps,
/// using 4th-order Magnus sub-steps no longer than max_substep_ps. Exact
/// when eps0 == eps1.
Eigen::Matrix2cd lsm_segment_unitary(double eps0_ueV, double eps1_ueV, double duration_ps, double delta_ueV,
                                     double hbar_ueV_ps, double max_substep_ps = 0.1);

/// Time-ordered propagator of a piecewise-linear detuning schedule given in μeV.
Eigen::Matrix2cd lsm_schedule_unitary(const DetuningSchedule& eps_schedule, double delta_ueV, double hbar_ueV_ps,
                                      double max_substep_ps = 0.1);

struct LsmTracePoint {
  double time_ps = 0.0;
  QubitState state;
};

/// Evolves `initial` under ε(t) = 1000·λ·V_slope(t), sampling every
/// sample_stride_ps and at the end.
std::vector<LsmTracePoint> lsm_propagate(const QubitState& initial, const DetuningSchedule& slope_schedule,
                                         double lambda, double delta_ueV, double t_final_ps,
                                         const UnitSystem& units, double sample_stride_ps = 1.0,
                                         double max_substep_ps = 0.1);

/// Bloch-sphere rotation induced by a 2×2 unitary in the frame of QubitState::bloch.
Eigen::Matrix3d so3_from_unitary(const Eigen::Matrix2cd& u);

}  // namespace dqd
