#include <doctest.h>

#include <cmath>
#include <random>

#include "dqd/control.hpp"
#include "oracles.hpp"

using namespace dqd;

namespace {

constexpr double kDelta = 12.0;
const double kHb = 1000.0 * kHbar;

const LsmEvolver& lsm() {
  static const LsmEvolver e(kDelta, kHb, 0.1);
  return e;
}

PulseSpec square(double level, double hold) {
  PulseSpec p;
  p.kind = PulseKind::trapezoid;
  p.baseline_ueV = level;
  p.amplitude_ueV = level;
  p.rise_ps = 0.0;
  p.plateau_ps = hold;
  return p;
}

struct FullFixture {
  Grid grid;
  DeviceModel device;
  QubitBasis basis;
  FullEvolver evolver;
  static Grid make_grid() {
    Grid g;
    g.n_points = 257;
    return g;
  }
  static PropagationOptions options(const DeviceModel& d) {
    PropagationOptions o;
    o.dt = max_stable_dt(d.field, d.slope_for(210.0), d.grid, d.units);
    return o;
  }
  FullFixture()
      : grid(make_grid()),
        device(DqdParams{}, UnitSystem{}, grid, 0.4222),
        basis(build_basis(device)),
        evolver(device, basis, options(device), 6) {}
};

const FullFixture& full() {
  static const FullFixture f;
  return f;
}

}  // namespace

TEST_SUITE("pulses") {
  TEST_CASE("trapezoid and spin-echo node tables") {
    PulseSpec t;
    t.kind = PulseKind::trapezoid;
    t.baseline_ueV = 27.0;
    t.amplitude_ueV = -12.0;
    t.rise_ps = 90.0;
    t.plateau_ps = 500.0;
    const auto n = t.nodes();
    REQUIRE(n.size() == 4);
    CHECK(n[1] == std::pair{90.0, -12.0});
    CHECK(n[3] == std::pair{680.0, 27.0});
    CHECK(t.duration() == 680.0);
    CHECK(t.hold_ps() == 500.0);

    PulseSpec s = t;
    s.kind = PulseKind::spin_echo;
    s.counter_ueV = -160.0;
    s.plateau_ps = 400.0;
    const auto e = s.nodes();
    REQUIRE(e.size() == 6);
    CHECK(e[1] == std::pair{90.0, -160.0});
    CHECK(e[2] == std::pair{180.0, -12.0});
    CHECK(e[3] == std::pair{220.0, -12.0});
    CHECK(e[5] == std::pair{400.0, 27.0});
    CHECK(s.hold_ps() == 40.0);
    CHECK(s.with_hold(100.0).plateau_ps == 460.0);
    CHECK(waveform(s, 135.0) == doctest::Approx(-86.0));
  }

  TEST_CASE("invalid pulses are rejected") {
    PulseSpec s;
    s.kind = PulseKind::spin_echo;
    s.rise_ps = 90.0;
    s.plateau_ps = 300.0;
    CHECK_THROWS_AS(s.validate(), Error);
    PulseSpec t;
    t.rise_ps = -1.0;
    CHECK_THROWS_AS(t.validate(), Error);
    CHECK_THROWS_AS(pulse_kind_from_string("ramsey"), Error);
  }

  TEST_CASE("head, hold and tail reproduce the full schedule") {
    PulseSpec s;
    s.kind = PulseKind::spin_echo;
    s.baseline_ueV = 27.0;
    s.counter_ueV = -150.0;
    s.amplitude_ueV = 30.0;
    s.rise_ps = 50.0;
    s.plateau_ps = 260.0;
    const auto u_full = lsm_schedule_unitary(s.detuning_schedule(), kDelta, kHb);
    const auto u_split = lsm_schedule_unitary(s.tail(), kDelta, kHb) *
                         lsm_segment_unitary(30.0, 30.0, s.hold_ps(), kDelta, kHb) *
                         lsm_schedule_unitary(s.head(), kDelta, kHb);
    CHECK((u_full - u_split).norm() < 1e-12);
  }
}

TEST_SUITE("tomography") {
  TEST_CASE("axis-angle round trip") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    for (int k = 0; k < 50; ++k) {
      const Vec3 axis = Vec3(n01(rng), n01(rng), n01(rng)).normalized();
      const double angle = std::uniform_real_distribution<double>(0.01, kPi - 0.01)(rng);
      const AxisAngle aa = axis_angle(rotation_about(axis, angle));
      CHECK(aa.angle == doctest::Approx(angle).epsilon(1e-10));
      CHECK((aa.axis - axis).norm() < 1e-8);
    }
  }

  TEST_CASE("Procrustes recovers a rotation and stays proper with a reflection input") {
    const Eigen::Matrix3d r = rotation_about(Vec3(1, 2, 3), 1.1);
    const Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
    CHECK((procrustes_rotation(a, r * a) - r).norm() < 1e-12);
    Eigen::Matrix3d refl = Eigen::Matrix3d::Identity();
    refl(2, 2) = -1.0;
    CHECK(procrustes_rotation(a, refl).determinant() == doctest::Approx(1.0));
  }

  TEST_CASE("null pulse gives the identity") {
    for (const ProbeEvolver* ev : {static_cast<const ProbeEvolver*>(&lsm()), static_cast<const ProbeEvolver*>(&full().evolver)}) {
      const RotationEstimate est = tomography(square(0.0, 0.0), *ev);
      CHECK((est.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-6);
      CHECK(est.leakage < 1e-6);
    }
  }

  TEST_CASE("zero-detuning square pulse is R_x(Delta t / hbar)") {
    for (double t : {50.0, 120.0, 333.0}) {
      const RotationEstimate est = tomography(square(0.0, t), lsm());
      CHECK((est.rotation - rotation_about(Vec3::UnitX(), kDelta * t / kHb)).norm() < 1e-6);
      CHECK((est.rotation.transpose() * est.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-6);
      CHECK(est.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(est.residual < 1e-9);
    }
  }

  TEST_CASE("tomography agrees with the SU(2) map") {
    PulseSpec p = square(40.0, 80.0);
    const auto u = lsm_schedule_unitary(p.detuning_schedule(), kDelta, kHb);
    CHECK((tomography(p, lsm()).rotation - so3_from_unitary(u)).norm() < 1e-9);
  }

  TEST_CASE("leaky and degenerate maps raise errors") {
    SubspaceMap leaky;
    leaky.coeffs = Eigen::MatrixXcd::Identity(2, 2) * 0.8;
    leaky.gram = Eigen::MatrixXcd::Identity(2, 2);
    try {
      (void)estimate_rotation(leaky);
      FAIL("expected a subspace error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::subspace);
    }
    SubspaceMap flat;
    flat.coeffs = Eigen::MatrixXcd::Zero(2, 2);
    flat.coeffs(0, 0) = flat.coeffs(0, 1) = std::sqrt(0.5);
    flat.gram = flat.coeffs.adjoint() * flat.coeffs;
    try {
      (void)estimate_rotation(flat);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK((e.code() == ErrorCode::degenerate || e.code() == ErrorCode::subspace));
    }
  }
}

TEST_SUITE("families") {
  TEST_CASE("synthetic linear family is recovered") {
    const Vec3 m = Vec3(0.9, 0.3, 0.2).normalized();
    const Vec3 n = m.cross(Vec3::UnitZ()).normalized();
    const Eigen::Matrix3d f = rotation_about(n, 0.7);
    const double kappa = 0.031, theta0 = -1.2;
    std::vector<RotationSample> samples;
    for (int i = 0; i < 21; ++i) {
      const double h = 10.0 * i;
      samples.push_back({h, rotation_about(m, theta0 + kappa * h) * f});
    }
    const RotationFamilyFit fit = decompose_rotation(samples);
    CHECK(fit.ok);
    CHECK((fit.axis - m).norm() < 1e-9);
    CHECK(fit.kappa == doctest::Approx(kappa).epsilon(1e-9));
    CHECK(fit.theta0 == doctest::Approx(theta0).epsilon(1e-9));
    CHECK((fit.fixed - f).norm() < 1e-9);
    CHECK(fit.residual_rad < 1e-9);
  }

  TEST_CASE("fixed factor about a hinted axis") {
    const Vec3 m = Vec3::UnitX();
    const Eigen::Matrix3d f = rotation_about(Vec3::UnitZ(), kPi - 0.1);
    std::vector<RotationSample> samples;
    for (int i = 0; i < 11; ++i) samples.push_back({20.0 * i, rotation_about(m, 0.4 + 0.02 * 20.0 * i) * f});
    const RotationFamilyFit fit = decompose_rotation(samples, Vec3::UnitX(), Vec3::UnitZ());
    CHECK(fit.residual_rad < 1e-8);
    CHECK(fit.fixed_axis_angle.angle == doctest::Approx(kPi - 0.1).epsilon(1e-7));
  }

  TEST_CASE("nonlinear angle growth fails the decomposition") {
    std::vector<RotationSample> samples;
    for (int i = 0; i < 11; ++i) {
      const double h = 20.0 * i;
      samples.push_back({h, rotation_about(Vec3::UnitX(), 2e-5 * h * h)});
    }
    CHECK_FALSE(fit_rotation_family(samples).ok);
    CHECK_THROWS_AS(decompose_rotation(samples), Error);
    CHECK_THROWS_AS(decompose_rotation({samples.begin(), samples.begin() + 3}), Error);
  }

  TEST_CASE("two-level family matches direct evolution") {
    PulseSpec s;
    s.kind = PulseKind::spin_echo;
    s.baseline_ueV = 27.5;
    s.counter_ueV = -167.4;
    s.amplitude_ueV = 16.5;
    s.rise_ps = 90.0;
    s.plateau_ps = 360.0;
    const auto fam = lsm().family(s, InitialStates::qubit_basis);
    for (double h : {0.0, 37.0, 410.0}) {
      const auto a = fam->at(h).coeffs;
      const auto b = lsm().evolve(s.with_hold(h), InitialStates::qubit_basis).coeffs;
      CHECK((a - b).norm() < 1e-9);
    }
  }

  TEST_CASE("grid family matches direct evolution") {
    PulseSpec s;
    s.kind = PulseKind::spin_echo;
    s.baseline_ueV = 27.5;
    s.counter_ueV = -100.0;
    s.amplitude_ueV = 20.0;
    s.rise_ps = 30.0;
    s.plateau_ps = 120.0;
    const auto& f = full();
    const auto fam = f.evolver.family(s, InitialStates::qubit_basis);
    const auto a = fam->at(60.0);
    const auto b = f.evolver.evolve(s.with_hold(60.0), InitialStates::qubit_basis);
    CHECK((a.coeffs - b.coeffs).norm() < 1e-5);
  }

  TEST_CASE("grid solver tracks the two-level model at zero detuning") {
    const auto& f = full();
    const LsmEvolver model(f.device.delta_ueV, f.device.hbar_ueV_ps());
    const PulseSpec p = square(0.0, 150.0);
    const auto a = f.evolver.evolve(p, InitialStates::qubit_basis).coeffs;
    const auto b = model.evolve(p, InitialStates::qubit_basis).coeffs;
    for (int j = 0; j < 2; ++j) {
      CHECK(std::abs(std::norm(a(1, j)) - std::norm(b(1, j))) < 1e-3);
    }
  }
}

TEST_SUITE("certification") {
  TEST_CASE("zero-detuning square family certifies as sigma_x") {
    PulseSpec shape = square(0.0, 0.0);
    const CellResult c = analyze_pulse(lsm(), shape, HoldGrid{0.0, 800.0, 4.0});
    CHECK(c.amplitude > 0.999);
    CHECK(c.axis_dev_x_deg < 1e-6);
    CHECK(c.fit.kappa == doctest::Approx(kDelta / kHb).epsilon(1e-9));
    CHECK(c.sigma_x);
    CHECK_FALSE(c.sigma_z);
  }

  TEST_CASE("far-detuned square family certifies as sigma_z") {
    const CellResult c = analyze_pulse(lsm(), square(500.0, 0.0), HoldGrid{0.0, 100.0, 1.0});
    CHECK(c.amplitude < 0.01);
    CHECK(c.axis_dev_z_deg < 2.0);
    CHECK(c.azimuth_error_rad < 0.05);
    CHECK(c.sigma_z);
    CHECK_FALSE(c.sigma_x);
  }

  TEST_CASE("static baseline amplitude follows the Rabi formula") {
    PulseSpec shape;
    shape.kind = PulseKind::spin_echo;
    shape.baseline_ueV = 27.5;
    shape.counter_ueV = 27.5;
    shape.amplitude_ueV = 27.5;
    shape.rise_ps = 90.0;
    shape.plateau_ps = 360.0;
    const CellResult c = analyze_pulse(lsm(), shape, HoldGrid{0.0, 1000.0, 0.5});
    const double e = 27.5;
    CHECK(c.amplitude == doctest::Approx(kDelta * kDelta / (e * e + kDelta * kDelta)).epsilon(2e-3));
  }

  TEST_CASE("sweep cells are counter-major and trapezoid sweeps use one row") {
    PulseSpec shape;
    shape.kind = PulseKind::spin_echo;
    shape.baseline_ueV = 27.5;
    shape.rise_ps = 20.0;
    shape.plateau_ps = 80.0;
    const SweepMap m = amplitude_sweep(lsm(), shape, {-10.0, 10.0}, {-5.0, 0.0, 5.0}, HoldGrid{0.0, 200.0, 10.0}, 2);
    REQUIRE(m.cells.size() == 6);
    CHECK(m.cells[1].counter_ueV == -10.0);
    CHECK(m.cells[1].amplitude_ueV == 0.0);
    CHECK(m.cells[3].counter_ueV == 10.0);
    shape.kind = PulseKind::trapezoid;
    const SweepMap t = amplitude_sweep(lsm(), shape, {-10.0, 10.0}, {-5.0, 0.0, 5.0}, HoldGrid{0.0, 200.0, 10.0}, 1);
    CHECK(t.cells.size() == 3);
  }

  TEST_CASE("sweeps are deterministic across worker counts") {
    PulseSpec shape;
    shape.kind = PulseKind::spin_echo;
    shape.baseline_ueV = 27.5;
    shape.rise_ps = 20.0;
    shape.plateau_ps = 80.0;
    const auto a = amplitude_sweep(lsm(), shape, {-50.0, 50.0}, {-20.0, 20.0}, HoldGrid{0.0, 300.0, 10.0}, 1);
    const auto b = amplitude_sweep(lsm(), shape, {-50.0, 50.0}, {-20.0, 20.0}, HoldGrid{0.0, 300.0, 10.0}, 3);
    for (std::size_t i = 0; i < a.cells.size(); ++i) CHECK(a.cells[i].result.amplitude == b.cells[i].result.amplitude);
  }

  TEST_CASE("refinement improves the sigma_x axis deviation") {
    PulseSpec shape;
    shape.kind = PulseKind::spin_echo;
    shape.baseline_ueV = 27.5;
    shape.rise_ps = 90.0;
    shape.plateau_ps = 360.0;
    const HoldGrid holds{0.0, 1000.0, 4.0};
    PulseSpec start = shape;
    start.counter_ueV = 0.0;
    start.amplitude_ueV = -200.0;
    const CellResult before = analyze_pulse(lsm(), start, holds);
    const RefinementResult r = refine_sigma_x(lsm(), shape, 0.0, -200.0, holds, 80);
    CHECK(r.evaluations <= 80);
    const auto objective = [](const CellResult& c) {
      return c.axis_dev_x_deg + 1000.0 * std::max(0.0, 0.995 - c.amplitude);
    };
    CHECK(objective(r.cell.result) <= objective(before));
    CHECK(std::abs(r.cell.counter_ueV) <= 200.0);
    CHECK(std::abs(r.cell.amplitude_ueV) <= 200.0);
  }

  TEST_CASE("sigma_z refinement stays within budget and does not worsen its objective") {
    PulseSpec shape;
    shape.kind = PulseKind::spin_echo;
    shape.baseline_ueV = 27.5;
    shape.rise_ps = 90.0;
    shape.plateau_ps = 360.0;
    const HoldGrid holds{0.0, 1000.0, 4.0};
    PulseSpec start = shape.with_hold(0.0);
    start.counter_ueV = -120.0;
    start.amplitude_ueV = 120.0;
    const auto objective = [](const CellResult& c) {
      return c.axis_dev_z_deg + 100.0 * c.azimuth_error_rad + 1000.0 * std::max(0.0, c.amplitude - 0.005);
    };
    const CellResult before = analyze_pulse(lsm(), start, holds);
    const RefinementResult r = refine_sigma_z(lsm(), shape.with_hold(0.0), -120.0, 120.0, holds, 40);
    CHECK(r.evaluations <= 40);
    CHECK(objective(r.cell.result) <= objective(before));
  }

  TEST_CASE("two-level preparation reaches the target") {
    std::vector<double> amps;
    for (int a = -30; a <= 30; a += 2) amps.push_back(a);
    const PreparationResult r = prepare_qubit(lsm(), 27.5, 90.0, amps, HoldGrid{400.0, 700.0, 2.0}, 2);
    CHECK(r.refined.distance <= r.grid_best.distance);
    CHECK(r.refined.distance < 1e-4);
  }

  TEST_CASE("preparation outside any useful range is an error") {
    const std::vector<double> amps{500.0};
    try {
      (void)prepare_qubit(lsm(), 27.5, 90.0, amps, HoldGrid{0.0, 10.0, 5.0}, 1);
      FAIL("expected a sweep_range error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::sweep_range);
    }
  }
}
