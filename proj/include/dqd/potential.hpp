#pragma once

#include <optional>
#include <vector>

#include "dqd/core.hpp"

namespace dqd {

/// One side of the double-dot profile: inner half-width w1, outer half-width
/// w2 (nm), barrier height z0 and outer wall height z2 (meV).
struct DqdShape {
  double w1_nm = 130.0;
  double w2_nm = 240.0;
  double z0_meV = 0.865;
  double z2_meV = 6.92;
};

struct DqdParams {
  double w1_nm = 130.0;
  double w2_nm = 240.0;
  double z0_meV = 0.865;
  double z2_meV = 6.92;
  /// Replaces the four parameters for x > 0 when set (asymmetric dots).
  std::optional<DqdShape> right;

  DqdShape left_shape() const { return {w1_nm, w2_nm, z0_meV, z2_meV}; }
  DqdShape shape_for(double x) const { return (x > 0.0 && right) ? *right : left_shape(); }
  void validate() const;
};

struct BiasSpec {
  double v_slope_meV = 0.0;
  double lambda = 1.0;
  double detuning_meV() const { return lambda * v_slope_meV; }
};

/// Piecewise-cosine double-dot profile; held at z2 beyond |x| = w2.
double evaluate_dqd(double x_nm, const DqdParams& p);

/// Linear Stark shift v_slope·x/(2·w2).
double evaluate_bias(double x_nm, double v_slope_meV, double w2_nm);

double total_potential(double x_nm, const DqdParams& p, double v_slope_meV);

/// Static part and unit-slope profile of the potential on the grid, so that
/// V(x_m) = static[m] + v_slope·profile[m].
struct PotentialField {
  std::vector<double> static_part;
  std::vector<double> slope_profile;

  void sample(double v_slope_meV, std::vector<double>& out) const;
  std::vector<double> sample(double v_slope_meV) const;
  double max_abs(double max_abs_slope_meV) const;
};

PotentialField make_potential_field(const DqdParams& p, const Grid& grid);

struct CalibrationSample {
  double v_slope_meV = 0.0;
  double splitting_meV = 0.0;
  double detuning_meV = 0.0;
};

struct CalibrationResult {
  double lambda = 0.0;
  /// E_AB − E_B at zero slope, meV.
  double delta_meV = 0.0;
  /// max |ε − λ v| / |ε| over the non-zero samples.
  double max_relative_residual = 0.0;
  /// 1 − R² of the fit through the origin.
  double unexplained_variance = 0.0;
  std::vector<CalibrationSample> samples;
};

/// Fits ε = λ·v_slope from the bonding/antibonding splitting of the
/// stationary problem, inverting E_AB − E_B = √(ε² + Δ²).
CalibrationResult calibrate_lambda(const DqdParams& p, const UnitSystem& units, const Grid& grid,
                                   double slope_min_meV, double slope_max_meV,
                                   std::size_t n_samples);

}  // namespace dqd
