#include "dqd/stationary.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>

namespace dqd {

void Tridiagonal::apply(std::span<const double> x, std::span<double> y) const {
  const std::size_t n = diag.size();
  for (std::size_t i = 0; i < n; ++i) {
    double s = diag[i] * x[i];
    if (i > 0) s += off[i - 1] * x[i - 1];
    if (i + 1 < n) s += off[i] * x[i + 1];
    y[i] = s;
  }
}

std::pair<double, double> Tridiagonal::spectrum_bounds() const {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  const std::size_t n = diag.size();
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    if (i > 0) r += std::abs(off[i - 1]);
    if (i + 1 < n) r += std::abs(off[i]);
    lo = std::min(lo, diag[i] - r);
    hi = std::max(hi, diag[i] + r);
  }
  return {lo, hi};
}

Tridiagonal build_hamiltonian(std::span<const double> potential, const Grid& grid, const UnitSystem& units) {
  grid.validate();
  if (potential.size() != grid.n_points)
    throw Error(ErrorCode::dimension, "build_hamiltonian: potential length does not match grid");
  const double dx = grid.dx();
  const double k = units.kinetic_prefactor() / (dx * dx);
  const std::size_t n = grid.n_points - 2;
  Tridiagonal t;
  t.diag.resize(n);
  t.off.assign(n > 0 ? n - 1 : 0, -k);
  for (std::size_t i = 0; i < n; ++i) t.diag[i] = 2.0 * k + potential[i + 1];
  return t;
}

Tridiagonal build_hamiltonian(const DqdParams& p, double v_slope_meV, const Grid& grid,
                              const UnitSystem& units) {
  return build_hamiltonian(make_potential_field(p, grid).sample(v_slope_meV), grid, units);
}

std::size_t sturm_count(const Tridiagonal& t, double x) {
  const std::size_t n = t.diag.size();
  const double tiny = std::numeric_limits<double>::min();
  std::size_t count = 0;
  double q = t.diag[0] - x;
  if (q == 0.0) q = -tiny;
  if (q < 0.0) ++count;
  for (std::size_t i = 1; i < n; ++i) {
    q = t.diag[i] - x - t.off[i - 1] * t.off[i - 1] / q;
    if (q == 0.0) q = -tiny;
    if (q < 0.0) ++count;
  }
  return count;
}

double bisect_eigenvalue(const Tridiagonal& t, std::size_t index) {
  if (index >= t.size()) throw Error(ErrorCode::invalid_argument, "bisect_eigenvalue: index out of range");
  auto [lo, hi] = t.spectrum_bounds();
  const double scale = std::max(std::abs(lo), std::abs(hi));
  lo -= 1e-12 * scale;
  hi += 1e-12 * scale;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (sturm_count(t, mid) > index)
      hi = mid;
    else
      lo = mid;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * scale) break;
  }
  return 0.5 * (lo + hi);
}

double largest_eigenvalue(const Tridiagonal& t) { return bisect_eigenvalue(t, t.size() - 1); }

double power_iteration_max(const Tridiagonal& t, int max_iterations, double rel_tol) {
  const std::size_t n = t.size();
  // Shift so the top of the spectrum dominates in magnitude.
  const double shift = t.spectrum_bounds().first;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = (i % 2 == 0 ? 1.0 : -1.0) * (1.0 + 0.01 * std::sin(0.37 * i));
  double estimate = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    double nx = 0.0;
    for (double v : x) nx += v * v;
    nx = std::sqrt(nx);
    for (double& v : x) v /= nx;
    t.apply(x, y);
    double rq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      rq += x[i] * y[i];
      y[i] -= shift * x[i];
    }
    if (it > 0 && std::abs(rq - estimate) <= rel_tol * std::abs(rq)) return rq;
    estimate = rq;
    std::swap(x, y);
  }
  return estimate;
}

namespace {

// (T − σI) x = b by Gaussian elimination with partial pivoting.
void solve_shifted(const Tridiagonal& t, double sigma, std::vector<double>& b) {
  const std::size_t n = t.size();
  std::vector<double> dl(t.off), d(n), du(t.off), du2(n, 0.0);
  std::vector<std::size_t> ipiv(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = t.diag[i] - sigma;
    ipiv[i] = i;
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (std::abs(d[i]) >= std::abs(dl[i])) {
      if (d[i] != 0.0) {
        const double fact = dl[i] / d[i];
        dl[i] = fact;
        d[i + 1] -= fact * du[i];
      }
    } else {
      const double fact = d[i] / dl[i];
      d[i] = dl[i];
      dl[i] = fact;
      const double temp = du[i];
      du[i] = d[i + 1];
      d[i + 1] = temp - fact * d[i + 1];
      if (i + 2 < n) {
        du2[i] = du[i + 1];
        du[i + 1] = -fact * du[i + 1];
      }
      ipiv[i] = i + 1;
    }
  }
  const auto [lo, hi] = t.spectrum_bounds();
  const double tiny = std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi));
  for (double& v : d)
    if (std::abs(v) < tiny) v = v < 0.0 ? -tiny : tiny;

  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t ip = ipiv[i];
    const double temp = b[2 * i + 1 - ip] - dl[i] * b[ip];
    b[i] = b[ip];
    b[i + 1] = temp;
  }
  b[n - 1] /= d[n - 1];
  if (n > 1) b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
  for (std::size_t ii = n; ii-- > 2;) {
    const std::size_t i = ii - 2;
    b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void scale_to_unit(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  for (double& x : v) x /= n;
}

}  // namespace

std::vector<EigenPair> lowest_eigenpairs(const Tridiagonal& t, const Grid& grid, int k) {
  if (k < 1) throw Error(ErrorCode::invalid_argument, "lowest_eigenpairs: k must be >= 1");
  if (t.size() + 2 != grid.n_points)
    throw Error(ErrorCode::dimension, "lowest_eigenpairs: matrix does not match grid");
  const std::size_t n = t.size();
  if (static_cast<std::size_t>(k) > n) throw Error(ErrorCode::invalid_argument, "lowest_eigenpairs: k exceeds dimension");

  std::vector<double> energies(k);
  for (int j = 0; j < k; ++j) energies[j] = bisect_eigenvalue(t, static_cast<std::size_t>(j));
  for (int j = 1; j < k; ++j) {
    if (!(energies[j] - energies[j - 1] > 1e-12))
      throw Error(ErrorCode::solver, "lowest_eigenpairs: eigenvalues " + std::to_string(j - 1) + " and " +
                                         std::to_string(j) + " are not separated");
  }

  std::vector<std::vector<double>> vecs;
  vecs.reserve(k);
  std::vector<double> hx(n);
  const double dx = grid.dx();
  const auto [lo, hi] = t.spectrum_bounds();
  const double norm_t = std::max(std::abs(lo), std::abs(hi));

  std::vector<EigenPair> out;
  for (int j = 0; j < k; ++j) {
    std::vector<double> v(n);
    std::uint64_t state = 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(j);
    for (double& x : v) {
      state = state * 6364136223846793005ull + 1442695040888963407ull;
      x = static_cast<double>(state >> 11) / 9007199254740992.0 - 0.5;
    }
    scale_to_unit(v);
    for (int it = 0; it < 4; ++it) {
      solve_shifted(t, energies[j], v);
      for (const auto& prev : vecs) {
        const double c = dot(prev, v);
        for (std::size_t i = 0; i < n; ++i) v[i] -= c * prev[i];
      }
      scale_to_unit(v);
    }
    t.apply(v, hx);
    double res = 0.0;
    double nhx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = hx[i] - energies[j] * v[i];
      res += r * r;
      nhx += hx[i] * hx[i];
    }
    res = std::sqrt(res);
    nhx = std::sqrt(nhx);
    if (!(res <= 1e-8 * nhx + 1e-13 * norm_t)) {
      std::ostringstream msg;
      msg << "lowest_eigenpairs: inverse iteration did not converge for state " << j << " (residual " << res
          << ", |Hx| " << nhx << ")";
      throw Error(ErrorCode::solver, msg.str());
    }
    vecs.push_back(v);

    EigenPair pair;
    pair.energy = energies[j];
    pair.index = j;
    std::vector<double> full(grid.n_points, 0.0);
    const double scale = 1.0 / std::sqrt(dx);
    for (std::size_t i = 0; i < n; ++i) full[i + 1] = v[i] * scale;

    double sign_ref = 0.0;
    if (j == 0) {
      // value at x = 0 (interpolated when no grid point sits there)
      const double pos = -grid.x_min / dx;
      const double fl = std::floor(pos);
      const std::size_t m = static_cast<std::size_t>(std::clamp(fl, 0.0, static_cast<double>(grid.n_points - 2)));
      const double frac = pos - static_cast<double>(m);
      sign_ref = (1.0 - frac) * full[m] + frac * full[m + 1];
      if (sign_ref == 0.0)
        for (double x : full) sign_ref += x;
    } else {
      for (std::size_t m = 0; m < grid.n_points; ++m) {
        if (right_weight(grid, m) == 1.0 && std::abs(full[m]) > 1e-6) {
          sign_ref = full[m];
          break;
        }
      }
    }
    if (sign_ref < 0.0)
      for (double& x : full) x = -x;
    pair.state = Wavefunction::from_real(std::move(full));
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace dqd
