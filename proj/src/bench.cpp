#include "dqd/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace dqd {

BenchWorkload make_bench_workload(std::size_t n_points, const DqdParams& params, const UnitSystem& units) {
  BenchWorkload w;
  w.grid.n_points = n_points;
  w.units = units;
  w.grid.validate();
  const PotentialField field = make_potential_field(params, w.grid);
  w.potential = field.sample(0.0);

  Wavefunction psi = Wavefunction::zeros(n_points);
  const double x0 = -60.0, sigma = 20.0, k0 = 0.05;
  for (std::size_t m = 1; m + 1 < n_points; ++m) {
    const double x = w.grid.x(m);
    const double env = std::exp(-0.25 * (x - x0) * (x - x0) / (sigma * sigma));
    psi.re[m] = env * std::cos(k0 * x);
    psi.im[m] = env * std::sin(k0 * x);
  }
  normalize(psi, w.grid);
  const double dt = max_stable_dt(field, 0.0, w.grid, units);
  w.initial = start_leapfrog(psi, w.potential, w.grid, units, dt);
  return w;
}

std::uint64_t state_checksum(const LeapfrogState& s) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const std::vector<double>& v) {
    for (double d : v) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &d, sizeof d);
      for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
      }
    }
  };
  mix(s.u_curr);
  mix(s.v_curr);
  return h;
}

double leapfrog_norm(const LeapfrogState& s, double dx) {
  double n = 0.0;
  for (std::size_t m = 0; m < s.u_curr.size(); ++m) n += s.u_curr[m] * s.u_curr[m] + s.v_curr[m] * s.v_curr[m];
  return n * dx;
}

GateResult correctness_gate(KernelExecutor& backend, std::size_t n_points, std::int64_t steps) {
  const BenchWorkload w = make_bench_workload(n_points);
  SerialExecutor serial;
  LeapfrogState ref = w.initial;
  LeapfrogState got = w.initial;
  for (std::int64_t k = 0; k < steps; ++k) {
    step(ref, w.potential, serial);
    step(got, w.potential, backend);
  }
  GateResult g;
  g.backend = backend.id();
  g.checksum = state_checksum(got);
  g.reference_checksum = state_checksum(ref);
  for (std::size_t m = 0; m < n_points; ++m) {
    const double du = std::abs(got.u_curr[m] - ref.u_curr[m]);
    const double dv = std::abs(got.v_curr[m] - ref.v_curr[m]);
    g.max_abs_diff = std::max({g.max_abs_diff, du, dv});
    if (std::memcmp(&got.u_curr[m], &ref.u_curr[m], sizeof(double)) != 0 ||
        std::memcmp(&got.v_curr[m], &ref.v_curr[m], sizeof(double)) != 0)
      ++g.mismatches;
  }
  g.passed = g.mismatches == 0 && g.checksum == g.reference_checksum;
  return g;
}

std::vector<BenchReport> run_bench(const std::vector<KernelExecutor*>& backends,
                                   const std::vector<std::size_t>& grid_sizes, std::int64_t steps,
                                   std::int64_t warmup_steps) {
  if (steps < 1) throw Error(ErrorCode::invalid_argument, "run_bench: steps must be >= 1");
  std::vector<BenchReport> out;
  for (KernelExecutor* backend : backends) {
    const GateResult gate = correctness_gate(*backend);
    for (std::size_t n : grid_sizes) {
      BenchReport r;
      r.backend = backend->id();
      r.n_points = n;
      r.steps = steps;
      if (!gate.passed) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "correctness gate failed: %zu mismatches, max diff %.3g", gate.mismatches,
                      gate.max_abs_diff);
        r.note = buf;
        out.push_back(r);
        continue;
      }
      const BenchWorkload w = make_bench_workload(n);
      LeapfrogState s = w.initial;
      for (std::int64_t k = 0; k < warmup_steps; ++k) step(s, w.potential, *backend);
      const double dx = w.grid.dx();
      const double n0 = leapfrog_norm(s, dx);
      const std::int64_t probe = std::max<std::int64_t>(1, steps / 16);
      const auto t0 = std::chrono::steady_clock::now();
      for (std::int64_t k = 1; k <= steps; ++k) {
        step(s, w.potential, *backend);
        if (k % probe == 0) r.norm_drift = std::max(r.norm_drift, std::abs(leapfrog_norm(s, dx) - n0));
      }
      r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      r.norm_drift = std::max(r.norm_drift, std::abs(leapfrog_norm(s, dx) - n0));
      r.steps_per_s = static_cast<double>(steps) / r.wall_s;
      r.checksum = state_checksum(s);
      r.valid = r.norm_drift <= 1e-6 && std::isfinite(r.norm_drift);
      if (!r.valid) r.note = "norm drift above 1e-6";
      out.push_back(r);
    }
  }
  return out;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchReport>& reports) {
  os << "backend,n_points,steps,wall_s,steps_per_s,norm_drift,checksum,valid,note\n";
  char buf[256];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%lld,%.6g,%.6g,%.3g,%016llx,%d,%s\n", r.backend.c_str(), r.n_points,
                  static_cast<long long>(r.steps), r.wall_s, r.steps_per_s, r.norm_drift,
                  static_cast<unsigned long long>(r.checksum), r.valid ? 1 : 0, r.note.c_str());
    os << buf;
  }
}

}  // namespace dqd
