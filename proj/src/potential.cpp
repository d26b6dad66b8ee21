#include "dqd/potential.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dqd/stationary.hpp"

namespace dqd {

namespace {

void validate_shape(const DqdShape& s, const char* which) {
  if (!(s.w1_nm > 0.0 && s.w1_nm < s.w2_nm))
    throw Error(ErrorCode::configuration, std::string(which) + ": require 0 < w1 < w2");
  if (!(s.z0_meV > 0.0)) throw Error(ErrorCode::configuration, std::string(which) + ": z0 must be > 0");
  if (!(s.z2_meV > s.z0_meV))
    throw Error(ErrorCode::configuration, std::string(which) + ": require z2 > z0");
}

}  // namespace

void DqdParams::validate() const {
  validate_shape(left_shape(), "dqd");
  if (right) validate_shape(*right, "dqd right side");
}

double evaluate_dqd(double x_nm, const DqdParams& p) {
  const DqdShape s = p.shape_for(x_nm);
  const double ax = std::abs(x_nm);
  if (ax <= s.w1_nm) return 0.5 * s.z0_meV * (1.0 + std::cos(kPi * ax / s.w1_nm));
  if (ax <= s.w2_nm)
    return 0.5 * s.z2_meV * (1.0 - std::cos(kPi * (ax - s.w1_nm) / (s.w2_nm - s.w1_nm)));
  return s.z2_meV;
}

double evaluate_bias(double x_nm, double v_slope_meV, double w2_nm) {
  return v_slope_meV * x_nm / (2.0 * w2_nm);
}

double total_potential(double x_nm, const DqdParams& p, double v_slope_meV) {
  return evaluate_dqd(x_nm, p) + evaluate_bias(x_nm, v_slope_meV, p.w2_nm);
}

void PotentialField::sample(double v_slope_meV, std::vector<double>& out) const {
  out.resize(static_part.size());
  for (std::size_t m = 0; m < out.size(); ++m) out[m] = static_part[m] + v_slope_meV * slope_profile[m];
}

std::vector<double> PotentialField::sample(double v_slope_meV) const {
  std::vector<double> out;
  sample(v_slope_meV, out);
  return out;
}

double PotentialField::max_abs(double max_abs_slope_meV) const {
  double worst = 0.0;
  for (std::size_t m = 0; m < static_part.size(); ++m)
    worst = std::max(worst, std::abs(static_part[m]) + max_abs_slope_meV * std::abs(slope_profile[m]));
  return worst;
}

PotentialField make_potential_field(const DqdParams& p, const Grid& grid) {
  PotentialField f;
  f.static_part.resize(grid.n_points);
  f.slope_profile.resize(grid.n_points);
  for (std::size_t m = 0; m < grid.n_points; ++m) {
    const double x = grid.x(m);
    f.static_part[m] = evaluate_dqd(x, p);
    f.slope_profile[m] = evaluate_bias(x, 1.0, p.w2_nm);
  }
  return f;
}

CalibrationResult calibrate_lambda(const DqdParams& p, const UnitSystem& units, const Grid& grid,
                                   double slope_min_meV, double slope_max_meV,
                                   std::size_t n_samples) {
  if (n_samples < 2 || !(slope_max_meV > slope_min_meV))
    throw Error(ErrorCode::invalid_argument, "calibrate_lambda: need an interval and >= 2 samples");

  const PotentialField field = make_potential_field(p, grid);
  auto splitting = [&](double v) {
    const auto pairs = lowest_eigenpairs(build_hamiltonian(field.sample(v), grid, units), grid, 2);
    return pairs[1].energy - pairs[0].energy;
  };

  CalibrationResult result;
  result.delta_meV = splitting(0.0);

  result.samples.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double v = slope_min_meV + (slope_max_meV - slope_min_meV) * static_cast<double>(i) /
                                         static_cast<double>(n_samples - 1);
    const double s = splitting(v);
    const double eps2 = std::max(0.0, s * s - result.delta_meV * result.delta_meV);
    const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    result.samples[i] = {v, s, sign * std::sqrt(eps2)};
  }

  // The splitting has to grow with |v| on either side of the symmetric point.
  auto sorted = result.samples;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return std::abs(a.v_slope_meV) < std::abs(b.v_slope_meV); });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (std::abs(sorted[i].v_slope_meV) > std::abs(sorted[i - 1].v_slope_meV) &&
        sorted[i].splitting_meV < sorted[i - 1].splitting_meV - 1e-12)
      throw Error(ErrorCode::calibration, "calibrate_lambda: splitting is not monotone in |v_slope|");
  }

  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (const auto& s : result.samples) {
    sxy += s.v_slope_meV * s.detuning_meV;
    sxx += s.v_slope_meV * s.v_slope_meV;
    syy += s.detuning_meV * s.detuning_meV;
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::calibration, "calibrate_lambda: degenerate sample set");
  result.lambda = sxy / sxx;

  double ss_res = 0.0;
  for (const auto& s : result.samples) {
    const double r = s.detuning_meV - result.lambda * s.v_slope_meV;
    ss_res += r * r;
    if (s.detuning_meV != 0.0)
      result.max_relative_residual = std::max(result.max_relative_residual, std::abs(r / s.detuning_meV));
  }
  result.unexplained_variance = syy > 0.0 ? ss_res / syy : 0.0;
  return result;
}

}  // namespace dqd
