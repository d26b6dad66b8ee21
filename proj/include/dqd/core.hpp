#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dqd {

enum class ErrorCode {
  invalid_argument,
  dimension,
  instability,
  solver,
  calibration,
  configuration,
  io,
  sweep_range,
  subspace,
  decomposition,
  degenerate,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Reduced Planck constant in meV·ps.
inline constexpr double kHbar = 0.6582119569;
/// ħ²/(2 m_e) in meV·nm².
inline constexpr double kFreeElectronKinetic = 38.0998;
inline constexpr double kPi = 3.14159265358979323846;
/// h in μeV·ps.
inline constexpr double kPlanckUeVPs = 2.0 * kPi * kHbar * 1000.0;

struct UnitSystem {
  double hbar = kHbar;
  double effective_mass_ratio = 0.067;

  /// ħ²/(2m*) in meV·nm².
  double kinetic_prefactor() const { return kFreeElectronKinetic / effective_mass_ratio; }
  void validate() const;
};

/// Uniform 1D grid with Dirichlet walls at both end points. dt is in ps.
struct Grid {
  double x_min = -264.0;
  double x_max = 264.0;
  std::size_t n_points = 1024;
  double dt = 0.0;

  double dx() const { return (x_max - x_min) / static_cast<double>(n_points - 1); }
  double x(std::size_t m) const { return x_min + static_cast<double>(m) * dx(); }
  std::vector<double> positions() const;
  void validate() const;

  bool same_space(const Grid& other) const {
    return x_min == other.x_min && x_max == other.x_max && n_points == other.n_points;
  }
};

/// Complex amplitudes split into real and imaginary arrays. When `staggered`
/// is set, `im` is sampled half a time step after `re`.
struct Wavefunction {
  std::vector<double> re;
  std::vector<double> im;
  bool staggered = false;

  static Wavefunction zeros(std::size_t n);
  static Wavefunction from_real(std::vector<double> values);

  std::size_t size() const { return re.size(); }
  std::complex<double> at(std::size_t m) const { return {re[m], im[m]}; }
};

/// ∑ conj(a_m) b_m dx.
std::complex<double> inner_product(const Wavefunction& a, const Wavefunction& b, const Grid& grid);
double norm_squared(const Wavefunction& psi, const Grid& grid);
void normalize(Wavefunction& psi, const Grid& grid);

enum class Side { left, right };

/// Weight of grid point m on the right half line: 1 for x > 0, 0 for x < 0,
/// and 1/2 for a point sitting on x = 0.
double right_weight(const Grid& grid, std::size_t m);

double half_line_probability(const Wavefunction& psi, const Grid& grid, Side side);

/// Moves a staggered state to the common time of `re` by averaging the two
/// imaginary samples that bracket it.
Wavefunction destagger(const Wavefunction& psi, std::span<const double> im_previous);

/// a·x + b·y.
Wavefunction combine(std::complex<double> a, const Wavefunction& x, std::complex<double> b,
                     const Wavefunction& y);

/// L2 distance ‖a − b‖ on the grid.
double l2_distance(const Wavefunction& a, const Wavefunction& b, const Grid& grid);

}  // namespace dqd
