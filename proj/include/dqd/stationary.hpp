#pragma once

#include <span>
#include <vector>

#include "dqd/core.hpp"
#include "dqd/potential.hpp"

namespace dqd {

/// Symmetric tridiagonal matrix over the interior grid points (walls excluded).
struct Tridiagonal {
  std::vector<double> diag;
  std::vector<double> off;  // size diag.size() - 1

  std::size_t size() const { return diag.size(); }
  void apply(std::span<const double> x, std::span<double> y) const;
  /// Gershgorin interval containing the whole spectrum.
  std::pair<double, double> spectrum_bounds() const;
};

/// Three-point Laplacian plus potential: diag = 2K/dx² + V(x_m), off = −K/dx².
Tridiagonal build_hamiltonian(std::span<const double> potential, const Grid& grid, const UnitSystem& units);
Tridiagonal build_hamiltonian(const DqdParams& p, double v_slope_meV, const Grid& grid,
                              const UnitSystem& units);

struct EigenPair {
  double energy = 0.0;  // meV
  Wavefunction state;   // real, normalized, walls included
  int index = 0;
};

/// Number of eigenvalues strictly below x.
std::size_t sturm_count(const Tridiagonal& t, double x);

/// Eigenvalue `index` (0 = lowest) by Sturm-sequence bisection.
double bisect_eigenvalue(const Tridiagonal& t, std::size_t index);

double largest_eigenvalue(const Tridiagonal& t);

/// Rayleigh-quotient estimate of the largest eigenvalue from power iteration.
double power_iteration_max(const Tridiagonal& t, int max_iterations = 20000, double rel_tol = 1e-12);

/// The k lowest eigenpairs with energies increasing. The ground state is
/// positive at x = 0; every other state is positive at the first point
/// right of x = 0 where its magnitude exceeds 1e-6.
std::vector<EigenPair> lowest_eigenpairs(const Tridiagonal& t, const Grid& grid, int k);

}  // namespace dqd
