#include "dqd/core.hpp"

#include <cmath>

namespace dqd {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::dimension: return "dimension";
    case ErrorCode::instability: return "instability";
    case ErrorCode::solver: return "solver";
    case ErrorCode::calibration: return "calibration";
    case ErrorCode::configuration: return "configuration";
    case ErrorCode::io: return "io";
    case ErrorCode::sweep_range: return "sweep_range";
    case ErrorCode::subspace: return "subspace";
    case ErrorCode::decomposition: return "decomposition";
    case ErrorCode::degenerate: return "degenerate";
  }
  return "unknown";
}

void UnitSystem::validate() const {
  if (!(hbar > 0.0)) throw Error(ErrorCode::configuration, "hbar must be positive");
  if (!(effective_mass_ratio > 0.0))
    throw Error(ErrorCode::configuration, "effective_mass_ratio must be positive");
}

std::vector<double> Grid::positions() const {
  std::vector<double> xs(n_points);
  for (std::size_t m = 0; m < n_points; ++m) xs[m] = x(m);
  return xs;
}

void Grid::validate() const {
  if (n_points < 3) throw Error(ErrorCode::configuration, "grid needs at least 3 points");
  if (!(x_max > x_min)) throw Error(ErrorCode::configuration, "grid requires x_max > x_min");
  if (!(dt >= 0.0)) throw Error(ErrorCode::configuration, "grid dt must be non-negative");
}

Wavefunction Wavefunction::zeros(std::size_t n) {
  Wavefunction w;
  w.re.assign(n, 0.0);
  w.im.assign(n, 0.0);
  return w;
}

Wavefunction Wavefunction::from_real(std::vector<double> values) {
  Wavefunction w;
  w.im.assign(values.size(), 0.0);
  w.re = std::move(values);
  return w;
}

namespace {

void require_compatible(const Wavefunction& a, const Grid& grid, const char* what) {
  if (a.re.size() != grid.n_points || a.im.size() != grid.n_points)
    throw Error(ErrorCode::dimension, std::string(what) + ": wavefunction length " +
                                          std::to_string(a.re.size()) + " does not match grid of " +
                                          std::to_string(grid.n_points) + " points");
  if (a.staggered)
    throw Error(ErrorCode::invalid_argument,
                std::string(what) + ": staggered state must be de-staggered first");
}

}  // namespace

std::complex<double> inner_product(const Wavefunction& a, const Wavefunction& b, const Grid& grid) {
  require_compatible(a, grid, "inner_product");
  require_compatible(b, grid, "inner_product");
  double sr = 0.0;
  double si = 0.0;
  for (std::size_t m = 0; m < grid.n_points; ++m) {
    // conj(a)·b = (ar − i ai)(br + i bi)
    sr += a.re[m] * b.re[m] + a.im[m] * b.im[m];
    si += a.re[m] * b.im[m] - a.im[m] * b.re[m];
  }
  const double dx = grid.dx();
  return {sr * dx, si * dx};
}

double norm_squared(const Wavefunction& psi, const Grid& grid) {
  require_compatible(psi, grid, "norm_squared");
  double s = 0.0;
  for (std::size_t m = 0; m < grid.n_points; ++m) s += psi.re[m] * psi.re[m] + psi.im[m] * psi.im[m];
  return s * grid.dx();
}

void normalize(Wavefunction& psi, const Grid& grid) {
  const double n2 = norm_squared(psi, grid);
  if (!(n2 > 0.0)) throw Error(ErrorCode::invalid_argument, "cannot normalize a zero state");
  const double scale = 1.0 / std::sqrt(n2);
  for (auto& v : psi.re) v *= scale;
  for (auto& v : psi.im) v *= scale;
}

double right_weight(const Grid& grid, std::size_t m) {
  const double x = grid.x(m);
  const double tol = 1e-9 * grid.dx();
  if (x > tol) return 1.0;
  if (x < -tol) return 0.0;
  return 0.5;
}

double half_line_probability(const Wavefunction& psi, const Grid& grid, Side side) {
  require_compatible(psi, grid, "half_line_probability");
  double s = 0.0;
  for (std::size_t m = 0; m < grid.n_points; ++m) {
    const double w = right_weight(grid, m);
    const double density = psi.re[m] * psi.re[m] + psi.im[m] * psi.im[m];
    s += (side == Side::right ? w : 1.0 - w) * density;
  }
  return s * grid.dx();
}

Wavefunction destagger(const Wavefunction& psi, std::span<const double> im_previous) {
  if (!psi.staggered) return psi;
  if (im_previous.size() != psi.im.size())
    throw Error(ErrorCode::dimension, "destagger: previous imaginary part has wrong length");
  Wavefunction out = psi;
  for (std::size_t m = 0; m < out.im.size(); ++m) out.im[m] = 0.5 * (psi.im[m] + im_previous[m]);
  out.staggered = false;
  return out;
}

Wavefunction combine(std::complex<double> a, const Wavefunction& x, std::complex<double> b,
                     const Wavefunction& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::dimension, "combine: length mismatch");
  Wavefunction out = Wavefunction::zeros(x.size());
  for (std::size_t m = 0; m < x.size(); ++m) {
    const std::complex<double> v = a * x.at(m) + b * y.at(m);
    out.re[m] = v.real();
    out.im[m] = v.imag();
  }
  return out;
}

double l2_distance(const Wavefunction& a, const Wavefunction& b, const Grid& grid) {
  require_compatible(a, grid, "l2_distance");
  require_compatible(b, grid, "l2_distance");
  double s = 0.0;
  for (std::size_t m = 0; m < grid.n_points; ++m) {
    const double dr = a.re[m] - b.re[m];
    const double di = a.im[m] - b.im[m];
    s += dr * dr + di * di;
  }
  return std::sqrt(s * grid.dx());
}

}  // namespace dqd
