#include "dqd/lsm.hpp"

#include <algorithm>
#include <cmath>

namespace dqd {

Eigen::Matrix2cd TwoLevelHamiltonian::matrix() const {
  Eigen::Matrix2cd h;
  h << 0.5 * epsilon_ueV + offset_ueV, -0.5 * delta_ueV, -0.5 * delta_ueV, -0.5 * epsilon_ueV + offset_ueV;
  return h;
}

QubitState QubitState::from_angles(double theta, double phi) {
  QubitState s;
  s.a = std::cos(0.5 * theta);
  // e^{−iφ} convention, matching bloch()
  s.b = std::sin(0.5 * theta) * std::exp(std::complex<double>(0.0, -phi));
  return s;
}

Vec3 QubitState::bloch() const {
  const double n = norm_squared();
  const std::complex<double> ab = std::conj(a) * b / n;
  return {2.0 * ab.real(), -2.0 * ab.imag(), (std::norm(a) - std::norm(b)) / n};
}

double QubitState::theta() const {
  const Vec3 r = bloch();
  return std::acos(std::clamp(r.z(), -1.0, 1.0));
}

double QubitState::phi() const {
  const Vec3 r = bloch();
  double p = std::atan2(r.y(), r.x());
  if (p < 0.0) p += 2.0 * kPi;
  return p;
}

QubitState from_vec(const Eigen::Vector2cd& v) { return {v(0), v(1)}; }

LsmEigenvectors lsm_eigenvectors(double eps, double delta) {
  if (!(delta > 0.0)) throw Error(ErrorCode::invalid_argument, "lsm_eigenvectors: delta must be positive");
  const double s = std::hypot(eps, delta);
  LsmEigenvectors out;
  out.e_bonding = -0.5 * s;
  out.e_antibonding = 0.5 * s;
  // Bonding ∝ (Δ, s + ε) ∝ (s − ε, Δ); pick the form without cancellation.
  const Eigen::Vector2d bond = eps >= 0.0 ? Eigen::Vector2d(delta, s + eps) : Eigen::Vector2d(s - eps, delta);
  out.bonding = bond.normalized();
  out.antibonding = Eigen::Vector2d(out.bonding(1), -out.bonding(0));
  if (out.antibonding(0) < 0.0) out.antibonding = -out.antibonding;
  return out;
}

Eigen::Matrix2cd su2_exp(const Vec3& g) {
  const double n = g.norm();
  const std::complex<double> i(0.0, 1.0);
  Eigen::Matrix2cd u;
  if (n == 0.0) return Eigen::Matrix2cd::Identity();
  const double c = std::cos(n);
  const double s = std::sin(n) / n;
  u(0, 0) = c - i * s * g.z();
  u(1, 1) = c + i * s * g.z();
  u(0, 1) = -i * s * std::complex<double>(g.x(), -g.y());
  u(1, 0) = -i * s * std::complex<double>(g.x(), g.y());
  return u;
}

Eigen::Matrix2cd lsm_segment_unitary(double eps0, double eps1, double duration, double delta, double hbar,
                                     double max_substep) {
  if (!(duration > 0.0)) return Eigen::Matrix2cd::Identity();
  if (eps0 == eps1) return su2_exp(Vec3(-0.5 * delta, 0.0, 0.5 * eps0) * (duration / hbar));
  const auto n = static_cast<int>(std::max(1.0, std::ceil(duration / max_substep - 1e-9)));
  const double h = duration / n;
  const double g1 = 0.5 - std::sqrt(3.0) / 6.0;
  const double g2 = 0.5 + std::sqrt(3.0) / 6.0;
  Eigen::Matrix2cd u = Eigen::Matrix2cd::Identity();
  for (int k = 0; k < n; ++k) {
    const double e1 = eps0 + (eps1 - eps0) * (k + g1) / n;
    const double e2 = eps0 + (eps1 - eps0) * (k + g2) / n;
    const Vec3 g(-h * delta / (2.0 * hbar), std::sqrt(3.0) * h * h * delta * (e1 - e2) / (24.0 * hbar * hbar),
                 h * (e1 + e2) / (4.0 * hbar));
    u = su2_exp(g) * u;
  }
  return u;
}

namespace {

Eigen::Matrix2cd interval_unitary(const DetuningSchedule& eps, double ta, double tb, double delta, double hbar,
                                  double max_substep) {
  Eigen::Matrix2cd u = Eigen::Matrix2cd::Identity();
  if (!(tb > ta)) return u;
  std::vector<double> cuts{ta};
  for (const auto& bp : eps.breakpoints)
    if (bp.first > ta && bp.first < tb) cuts.push_back(bp.first);
  cuts.push_back(tb);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    u = lsm_segment_unitary(eps.at(cuts[i]), eps.at(cuts[i + 1]), cuts[i + 1] - cuts[i], delta, hbar,
                            max_substep) *
        u;
  return u;
}

}  // namespace

Eigen::Matrix2cd lsm_schedule_unitary(const DetuningSchedule& eps, double delta, double hbar, double max_substep) {
  eps.validate();
  return interval_unitary(eps, eps.start(), eps.end(), delta, hbar, max_substep);
}

std::vector<LsmTracePoint> lsm_propagate(const QubitState& initial, const DetuningSchedule& slope_schedule,
                                         double lambda, double delta, double t_final, const UnitSystem& units,
                                         double stride, double max_substep) {
  slope_schedule.validate();
  DetuningSchedule eps = slope_schedule;
  for (auto& bp : eps.breakpoints) bp.second *= 1000.0 * lambda;
  const double hbar = units.hbar * 1000.0;
  const double t0 = eps.start();

  std::vector<LsmTracePoint> trace{{t0, initial}};
  Eigen::Vector2cd psi = initial.vec();
  if (!(stride > 0.0)) stride = std::max(t_final, 1.0);
  double t = t0;
  for (int k = 1; t < t0 + t_final; ++k) {
    const double next = std::min(t0 + k * stride, t0 + t_final);
    psi = interval_unitary(eps, t, next, delta, hbar, max_substep) * psi;
    t = next;
    trace.push_back({t, from_vec(psi)});
  }
  return trace;
}

Eigen::Matrix3d so3_from_unitary(const Eigen::Matrix2cd& u) {
  const double r = 1.0 / std::sqrt(2.0);
  const std::complex<double> i(0.0, 1.0);
  const Eigen::Vector2cd probes[3] = {{1.0, 0.0}, {r, r}, {r, i * r}};
  Eigen::Matrix3d b0, b1;
  for (int j = 0; j < 3; ++j) {
    b0.col(j) = from_vec(probes[j]).bloch();
    b1.col(j) = from_vec(u * probes[j]).bloch();
  }
  return b1 * b0.inverse();
}

}  // namespace dqd
