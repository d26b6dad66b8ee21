#include <doctest.h>

#include <cmath>
#include <random>

#include "dqd/lsm.hpp"
#include "dqd/qubit_basis.hpp"
#include "oracles.hpp"

using namespace dqd;

namespace {

struct Fixture {
  Grid grid;
  DeviceModel device;
  QubitBasis basis;
  static Grid make_grid() {
    Grid g;
    g.n_points = 257;
    return g;
  }
  Fixture() : grid(make_grid()), device(DqdParams{}, UnitSystem{}, grid, 0.4222), basis(build_basis(device)) {}
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_SUITE("qubit_basis") {
  TEST_CASE("basis coefficients are equal at zero detuning") {
    const auto& f = fixture();
    CHECK(std::abs(f.basis.alpha0 - 1.0 / std::sqrt(2.0)) < 1e-6);
    CHECK(std::abs(f.basis.beta0 - 1.0 / std::sqrt(2.0)) < 1e-6);
  }

  TEST_CASE("psi0 and psi1 are mirror images") {
    const auto& f = fixture();
    const std::size_t n = f.grid.n_points;
    double worst = 0.0;
    for (std::size_t m = 0; m < n; ++m) worst = std::max(worst, std::abs(f.basis.psi0.re[m] - f.basis.psi1.re[n - 1 - m]));
    CHECK(worst < 1e-6);
  }

  TEST_CASE("basis is orthonormal and P0 + P1 = 1") {
    const auto& f = fixture();
    CHECK(norm_squared(f.basis.psi0, f.grid) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(norm_squared(f.basis.psi1, f.grid) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(inner_product(f.basis.psi0, f.basis.psi1, f.grid)) < 1e-9);
    CHECK(f.basis.P0 + f.basis.P1 == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(f.basis.P0 > 0.5);
    CHECK(f.basis.P0 < 1.0);
  }

  TEST_CASE("restricted cross overlaps vanish") {
    const auto& f = fixture();
    CHECK(std::abs(restricted_overlap(f.basis.psi0, f.basis.psi1, f.grid, Side::left)) < 1e-6);
    CHECK(std::abs(restricted_overlap(f.basis.psi0, f.basis.psi1, f.grid, Side::right)) < 1e-6);
  }

  TEST_CASE("localized pair maximizes the right probability against a brute-force scan") {
    const auto& f = fixture();
    for (double eps : {0.0, 40.0, -120.0}) {
      const LocalizedPair p = localized_pair(f.device, eps);
      const double got = half_line_probability(p.R, f.grid, Side::right);
      double best = 0.0, worst = 1.0;
      const int n = 100000;
      for (int i = 0; i < n; ++i) {
        const double th = kPi * i / n;
        const double pr = right_probability_at_angle(p, f.grid, th);
        best = std::max(best, pr);
        worst = std::min(worst, pr);
      }
      CHECK(got >= best - 1e-9);
      CHECK(got - best < 1e-6);
      // L is the orthogonal partner, so it minimizes the right probability.
      CHECK(half_line_probability(p.L, f.grid, Side::left) == doctest::Approx(1.0 - worst).epsilon(1e-6));
      if (eps == 0.0)
        CHECK(half_line_probability(p.L, f.grid, Side::left) == doctest::Approx(got).epsilon(1e-9));
      CHECK(std::abs(inner_product(p.R, p.L, f.grid)) < 1e-9);
    }
  }

  TEST_CASE("localized pair at zero detuning is the qubit basis") {
    const auto& f = fixture();
    const LocalizedPair p = localized_pair(f.device, 0.0);
    CHECK(half_line_probability(p.R, f.grid, Side::right) == doctest::Approx(f.basis.P0).epsilon(1e-9));
    CHECK(half_line_probability(p.L, f.grid, Side::left) == doctest::Approx(f.basis.P0).epsilon(1e-9));
  }

  TEST_CASE("D map is zero on the diagonal, symmetric and optimal at zero") {
    const auto& f = fixture();
    const CorrelationMap map = correlation_map(f.device, 200.0, 21, OverlapReading::squared_overlap, 2);
    for (std::size_t i = 0; i < 21; ++i) {
      CHECK(std::abs(map.d[i][i]) < 1e-12);
      for (std::size_t j = 0; j < 21; ++j) {
        CHECK(map.d[i][j] == doctest::Approx(map.d[j][i]).epsilon(1e-12));
        CHECK(map.d[i][j] >= -1e-12);
        CHECK(map.d[i][j] <= 1.0 + 1e-12);
      }
    }
    CHECK(map.optimal_epsilon_ueV == 0.0);
  }

  TEST_CASE("literal density reading is available and differs") {
    const auto& f = fixture();
    const LocalizedPair a = localized_pair(f.device, -50.0), b = localized_pair(f.device, 50.0);
    const double sq = correlation_d(a, b, f.grid, OverlapReading::squared_overlap);
    const double lit = correlation_d(a, b, f.grid, OverlapReading::literal_density);
    CHECK(std::isfinite(lit));
    CHECK(lit != doctest::Approx(sq));
  }

  TEST_CASE("operating range reaches at least 200 ueV each side") {
    const auto& f = fixture();
    const OperatingRange r = operating_range(f.device, f.basis, 0.99, 400.0, 41, 2);
    CHECK(r.hi_ueV >= 200.0);
    CHECK(r.lo_ueV <= -200.0);
    CHECK(r.samples.size() == 41);
  }

  TEST_CASE("two-level fidelity is one at zero detuning") {
    const auto& f = fixture();
    const FidelitySample s = lsm_fidelity(f.device, f.basis, 0.0);
    CHECK(s.bonding == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(s.antibonding == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("readout round trip for random superpositions") {
    const auto& f = fixture();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
      const double b2 = unit(rng);
      const double phase = 2.0 * kPi * unit(rng);
      const std::complex<double> a = std::sqrt(1.0 - b2) * std::exp(std::complex<double>(0.0, 2.0 * kPi * unit(rng)));
      const std::complex<double> b = std::sqrt(b2) * std::exp(std::complex<double>(0.0, phase));
      const Wavefunction psi = combine(a, f.basis.psi0, b, f.basis.psi1);
      const double pr = half_line_probability(psi, f.grid, Side::right);
      const ReadoutResult r = readout_coefficients(pr, f.basis);
      CHECK(std::abs(r.beta2 - b2) < 1e-6);
      CHECK_FALSE(r.leakage);
    }
  }

  TEST_CASE("readout end points and leakage flag") {
    const auto& f = fixture();
    CHECK(readout_coefficients(f.basis.P0, f.basis).beta2 == doctest::Approx(0.0));
    CHECK(readout_coefficients(f.basis.P1, f.basis).beta2 == doctest::Approx(1.0));
    CHECK(readout_coefficients(0.5 * (f.basis.P0 + f.basis.P1), f.basis).beta2 == doctest::Approx(0.5));
    CHECK(readout_coefficients(1.0, f.basis).leakage);
  }

  TEST_CASE("distance between basis states") {
    const auto& f = fixture();
    CHECK(distance_s(f.basis.psi0, f.basis.psi0, f.grid) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(distance_s(f.basis.psi0, f.basis.psi1, f.grid) == doctest::Approx(1.0).epsilon(1e-12));
    const Wavefunction s = combine(std::sqrt(0.5), f.basis.psi0, std::sqrt(0.5), f.basis.psi1);
    CHECK(distance_s(f.basis.psi0, s, f.grid) == doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("device requires a positive lambda") {
    Grid g;
    g.n_points = 65;
    CHECK_THROWS_AS(DeviceModel(DqdParams{}, UnitSystem{}, g, 0.0), Error);
  }
}
