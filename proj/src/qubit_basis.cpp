#include "dqd/qubit_basis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dqd/lsm.hpp"
#include "dqd/parallel.hpp"

namespace dqd {

DeviceModel::DeviceModel(const DqdParams& p, const UnitSystem& u, const Grid& g, double lam)
    : params(p), units(u), grid(g), lambda(lam) {
  params.validate();
  units.validate();
  grid.validate();
  if (!(lambda > 0.0)) throw Error(ErrorCode::calibration, "device: lambda must be positive");
  field = make_potential_field(params, grid);
  const auto pairs = eigenpairs(0.0, 2);
  delta_ueV = 1000.0 * (pairs[1].energy - pairs[0].energy);
}

std::vector<EigenPair> DeviceModel::eigenpairs(double v_slope_meV, int k) const {
  auto pairs = lowest_eigenpairs(build_hamiltonian(field.sample(v_slope_meV), grid, units), grid, k);
  if (k >= 2 && pairs[1].energy - pairs[0].energy < 1e-9) {
    std::ostringstream msg;
    msg << "bonding and antibonding states are degenerate at v_slope = " << v_slope_meV << " meV";
    throw Error(ErrorCode::degenerate, msg.str());
  }
  return pairs;
}

std::complex<double> restricted_overlap(const Wavefunction& a, const Wavefunction& b, const Grid& grid,
                                        Side side) {
  if (a.size() != grid.n_points || b.size() != grid.n_points)
    throw Error(ErrorCode::dimension, "restricted_overlap: state does not match grid");
  std::complex<double> s{};
  for (std::size_t m = 0; m < grid.n_points; ++m) {
    const double w = right_weight(grid, m);
    s += (side == Side::right ? w : 1.0 - w) * std::conj(a.at(m)) * b.at(m);
  }
  return s * grid.dx();
}

LocalizedPair localized_pair(const DeviceModel& device, double eps) {
  const auto pairs = device.eigenpairs(device.slope_for(eps), 2);
  LocalizedPair out;
  out.epsilon_ueV = eps;
  out.psi_b = pairs[0].state;
  out.psi_ab = pairs[1].state;
  out.e_b = pairs[0].energy;
  out.e_ab = pairs[1].energy;

  const Grid& g = device.grid;
  const double p = restricted_overlap(out.psi_b, out.psi_b, g, Side::right).real();
  const double q = restricted_overlap(out.psi_b, out.psi_ab, g, Side::right).real();
  const double r = restricted_overlap(out.psi_ab, out.psi_ab, g, Side::right).real();
  const double half = 0.5 * (p - r);
  const double rad = std::hypot(half, q);
  if (2.0 * rad < 1e-12)
    throw Error(ErrorCode::degenerate, "localized_pair: right-half overlap matrix is degenerate");
  const double mu = 0.5 * (p + r) + rad;
  Eigen::Vector2d v1(q, mu - p), v2(mu - r, q);
  Eigen::Vector2d v = v1.norm() >= v2.norm() ? v1 : v2;
  v.normalize();
  if (v(0) < 0.0 || (v(0) == 0.0 && v(1) < 0.0)) v = -v;
  out.alpha = v(0);
  out.beta = v(1);
  out.R = combine(out.alpha, out.psi_b, out.beta, out.psi_ab);
  out.L = combine(out.beta, out.psi_b, -out.alpha, out.psi_ab);
  return out;
}

double right_probability_at_angle(const LocalizedPair& pair, const Grid& grid, double theta) {
  return half_line_probability(combine(std::cos(theta), pair.psi_b, std::sin(theta), pair.psi_ab), grid,
                               Side::right);
}

QubitBasis build_basis(const DeviceModel& device) {
  const LocalizedPair p0 = localized_pair(device, 0.0);
  QubitBasis b;
  b.psi0 = p0.R;
  b.psi1 = p0.L;
  b.alpha0 = p0.alpha;
  b.beta0 = p0.beta;
  b.delta_ueV = 1000.0 * (p0.e_ab - p0.e_b);
  b.P0 = half_line_probability(b.psi0, device.grid, Side::right);
  b.P1 = half_line_probability(b.psi1, device.grid, Side::right);
  return b;
}

double correlation_d(const LocalizedPair& a, const LocalizedPair& b, const Grid& grid, OverlapReading reading) {
  if (reading == OverlapReading::squared_overlap) {
    const double ll = std::norm(inner_product(a.L, b.L, grid));
    const double rr = std::norm(inner_product(a.R, b.R, grid));
    return 1.0 - 0.5 * (ll + rr);
  }
  double ll = 0.0;
  double rr = 0.0;
  for (std::size_t m = 0; m < grid.n_points; ++m) {
    ll += std::norm(a.L.at(m)) * std::norm(b.L.at(m));
    rr += std::norm(a.R.at(m)) * std::norm(b.R.at(m));
  }
  return 1.0 - 0.5 * (ll + rr) * grid.dx();
}

CorrelationMap correlation_map(const DeviceModel& device, double eps_max, std::size_t n, OverlapReading reading,
                               unsigned workers) {
  if (n < 2 || !(eps_max > 0.0)) throw Error(ErrorCode::invalid_argument, "correlation_map: need n >= 2 and eps_max > 0");
  CorrelationMap map;
  map.epsilon_ueV.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    map.epsilon_ueV[i] = -eps_max + 2.0 * eps_max * static_cast<double>(i) / static_cast<double>(n - 1);
  std::vector<LocalizedPair> pairs(n);
  parallel_for(n, workers, [&](std::size_t i) { pairs[i] = localized_pair(device, map.epsilon_ueV[i]); });

  map.d.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) map.d[i][j] = correlation_d(pairs[i], pairs[j], device.grid, reading);

  map.column_average.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) map.column_average[j] += map.d[i][j];
    map.column_average[j] /= static_cast<double>(n);
  }
  for (std::size_t j = 1; j < n; ++j) {
    const double cj = map.column_average[j];
    const double cb = map.column_average[map.optimal_index];
    if (cj < cb || (cj == cb && std::abs(map.epsilon_ueV[j]) < std::abs(map.epsilon_ueV[map.optimal_index])))
      map.optimal_index = j;
  }
  map.optimal_epsilon_ueV = map.epsilon_ueV[map.optimal_index];
  return map;
}

FidelitySample lsm_fidelity(const DeviceModel& device, const QubitBasis& basis, double eps) {
  const auto pairs = device.eigenpairs(device.slope_for(eps), 2);
  const LsmEigenvectors lsm = lsm_eigenvectors(eps, device.delta_ueV);
  const Wavefunction b = combine(lsm.bonding(0), basis.psi0, lsm.bonding(1), basis.psi1);
  const Wavefunction ab = combine(lsm.antibonding(0), basis.psi0, lsm.antibonding(1), basis.psi1);
  return {eps, std::norm(inner_product(b, pairs[0].state, device.grid)),
          std::norm(inner_product(ab, pairs[1].state, device.grid))};
}

OperatingRange operating_range(const DeviceModel& device, const QubitBasis& basis, double threshold,
                               double eps_max_search, std::size_t n_samples, unsigned workers) {
  if (n_samples < 2 || !(eps_max_search > 0.0))
    throw Error(ErrorCode::invalid_argument, "operating_range: need >= 2 samples and a positive search range");
  OperatingRange out;
  out.samples.resize(n_samples);
  parallel_for(n_samples, workers, [&](std::size_t i) {
    const double eps = -eps_max_search + 2.0 * eps_max_search * static_cast<double>(i) /
                                             static_cast<double>(n_samples - 1);
    out.samples[i] = lsm_fidelity(device, basis, eps);
  });

  const FidelitySample zero = lsm_fidelity(device, basis, 0.0);
  if (zero.bonding < threshold || zero.antibonding < threshold)
    throw Error(ErrorCode::configuration, "operating_range: fidelity threshold not reached even at zero detuning");

  // The first failing |ε| caps the interval; the largest passing |ε| below it is the edge.
  double first_fail = std::numeric_limits<double>::infinity();
  for (const auto& s : out.samples)
    if (s.bonding < threshold || s.antibonding < threshold)
      first_fail = std::min(first_fail, std::abs(s.epsilon_ueV));
  double edge = 0.0;
  for (const auto& s : out.samples)
    if (std::abs(s.epsilon_ueV) < first_fail) edge = std::max(edge, std::abs(s.epsilon_ueV));
  out.lo_ueV = -edge;
  out.hi_ueV = edge;
  return out;
}

ReadoutResult readout_coefficients(double p_right, const QubitBasis& basis) {
  const double span = basis.P1 - basis.P0;
  if (std::abs(span) < 1e-12)
    throw Error(ErrorCode::degenerate, "readout_coefficients: P0 and P1 coincide");
  ReadoutResult r;
  r.beta2 = (p_right - basis.P0) / span;
  r.alpha2 = 1.0 - r.beta2;
  const double lo = std::min(basis.P0, basis.P1);
  const double hi = std::max(basis.P0, basis.P1);
  r.leakage = p_right < lo - 1e-6 || p_right > hi + 1e-6;
  return r;
}

double distance_s(const Wavefunction& target, const Wavefunction& psi, const Grid& grid) {
  return 1.0 - std::norm(inner_product(target, psi, grid));
}

}  // namespace dqd
