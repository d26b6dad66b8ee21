#pragma once

#include <complex>
#include <utility>
#include <vector>

#include "dqd/core.hpp"
#include "dqd/potential.hpp"
#include "dqd/stationary.hpp"

namespace dqd {

/// Potential, grid and calibration bundled for repeated solves. Detunings are
/// in μeV and map to slopes by ε = 1000·λ·V_slope.
struct DeviceModel {
  DqdParams params;
  UnitSystem units;
  Grid grid;
  PotentialField field;
  double lambda = 0.0;
  double delta_ueV = 0.0;

  DeviceModel(const DqdParams& p, const UnitSystem& u, const Grid& g, double lambda);

  double slope_for(double eps_ueV) const { return eps_ueV / (1000.0 * lambda); }
  double detuning_for(double slope_meV) const { return 1000.0 * lambda * slope_meV; }
  double hbar_ueV_ps() const { return 1000.0 * units.hbar; }
  /// Lowest k states at the given slope; raises `degenerate` when k ≥ 2 and
  /// E_AB − E_B < 1e-9 meV.
  std::vector<EigenPair> eigenpairs(double v_slope_meV, int k = 2) const;
};

struct LocalizedPair {
  double epsilon_ueV = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  Wavefunction R;
  Wavefunction L;
  Wavefunction psi_b;
  Wavefunction psi_ab;
  double e_b = 0.0;  // meV
  double e_ab = 0.0;
};

/// R = αψ_B + βψ_AB maximizing the right-half probability, L = βψ_B − αψ_AB.
LocalizedPair localized_pair(const DeviceModel& device, double epsilon_ueV);

/// Right-half probability of cos θ·ψ_B + sin θ·ψ_AB.
double right_probability_at_angle(const LocalizedPair& pair, const Grid& grid, double theta);

struct QubitBasis {
  Wavefunction psi0;
  Wavefunction psi1;
  double delta_ueV = 0.0;
  double alpha0 = 0.0;
  double beta0 = 0.0;
  double P0 = 0.0;
  double P1 = 0.0;
  std::pair<double, double> operating_range{0.0, 0.0};
};

QubitBasis build_basis(const DeviceModel& device);

/// Σ w_m conj(a_m) b_m dx restricted to one half line (x = 0 point at half weight).
std::complex<double> restricted_overlap(const Wavefunction& a, const Wavefunction& b, const Grid& grid, Side side);

enum class OverlapReading {
  squared_overlap,  // 1 − (|⟨L,L′⟩|² + |⟨R,R′⟩|²)/2
  literal_density,  // products of densities; not dimensionless, comparison only
};

double correlation_d(const LocalizedPair& a, const LocalizedPair& b, const Grid& grid,
                     OverlapReading reading = OverlapReading::squared_overlap);

struct CorrelationMap {
  std::vector<double> epsilon_ueV;
  std::vector<std::vector<double>> d;  // d[i][j] = D(ε_i, ε′_j)
  std::vector<double> column_average;
  std::size_t optimal_index = 0;
  double optimal_epsilon_ueV = 0.0;
};

/// D on an n×n uniform grid over ±eps_max. The optimal column minimizes the
/// column average; ties go to the smallest |ε|.
CorrelationMap correlation_map(const DeviceModel& device, double eps_max_ueV, std::size_t n,
                               OverlapReading reading = OverlapReading::squared_overlap, unsigned workers = 1);

struct FidelitySample {
  double epsilon_ueV = 0.0;
  double bonding = 0.0;
  double antibonding = 0.0;
};

struct OperatingRange {
  double lo_ueV = 0.0;
  double hi_ueV = 0.0;
  std::vector<FidelitySample> samples;
};

/// |⟨a_ε ψ0 + b_ε ψ1, ψ_B(ε)⟩|² with (a_ε, b_ε) the two-level bonding vector.
FidelitySample lsm_fidelity(const DeviceModel& device, const QubitBasis& basis, double epsilon_ueV);

/// Largest symmetric interval, on n uniform samples over ±eps_max_search,
/// where both fidelities stay at or above threshold.
OperatingRange operating_range(const DeviceModel& device, const QubitBasis& basis, double threshold,
                               double eps_max_search_ueV, std::size_t n_samples = 81, unsigned workers = 1);

struct ReadoutResult {
  double beta2 = 0.0;
  double alpha2 = 0.0;
  /// P_R fell outside [min(P0,P1), max(P0,P1)] by more than 1e-6.
  bool leakage = false;
};

ReadoutResult readout_coefficients(double p_right, const QubitBasis& basis);

/// 1 − |⟨target, ψ⟩|².
double distance_s(const Wavefunction& target, const Wavefunction& psi, const Grid& grid);

}  // namespace dqd
