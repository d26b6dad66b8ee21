#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "dqd/core.hpp"
#include "dqd/potential.hpp"
#include "dqd/propagator.hpp"

namespace dqd {

struct BenchReport {
  std::string backend;
  std::size_t n_points = 0;
  std::int64_t steps = 0;
  double wall_s = 0.0;
  double steps_per_s = 0.0;
  double norm_drift = 0.0;
  std::uint64_t checksum = 0;
  bool valid = false;  // gate passed and drift ≤ 1e-6
  std::string note;
};

struct GateResult {
  std::string backend;
  bool passed = false;
  double max_abs_diff = 0.0;
  std::size_t mismatches = 0;
  std::uint64_t checksum = 0;
  std::uint64_t reference_checksum = 0;
};

/// Gaussian packet in the zero-bias double dot on an n-point grid, with dt
/// at 0.8·ħ/E_max.
struct BenchWorkload {
  Grid grid;
  UnitSystem units;
  std::vector<double> potential;
  LeapfrogState initial;
};

BenchWorkload make_bench_workload(std::size_t n_points, const DqdParams& params = {}, const UnitSystem& units = {});

/// FNV-1a over the bytes of both current arrays.
std::uint64_t state_checksum(const LeapfrogState& s);

double leapfrog_norm(const LeapfrogState& s, double dx);

/// Compares `backend` with the serial kernel after `steps` steps on an
/// n-point workload; bit identity is required.
GateResult correctness_gate(KernelExecutor& backend, std::size_t n_points = 256, std::int64_t steps = 10000);

/// Times every gated backend on every grid size. Warm-up steps are excluded.
std::vector<BenchReport> run_bench(const std::vector<KernelExecutor*>& backends,
                                   const std::vector<std::size_t>& grid_sizes, std::int64_t steps,
                                   std::int64_t warmup_steps = 200);

void write_bench_csv(std::ostream& os, const std::vector<BenchReport>& reports);

}  // namespace dqd
