#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dqd/core.hpp"
#include "dqd/potential.hpp"

namespace dqd {

/// Piecewise-linear V_slope(t) in meV; clamps outside its time range.
struct DetuningSchedule {
  std::vector<std::pair<double, double>> breakpoints;  // (t_ps, v_slope_meV)

  static DetuningSchedule constant(double v_slope_meV, double duration_ps);
  double at(double t_ps) const;
  double start() const { return breakpoints.front().first; }
  double end() const { return breakpoints.back().first; }
  double duration() const { return end() - start(); }
  double max_abs() const;
  void validate() const;
};

/// Two time levels of the split real/imaginary iteration.
struct LeapfrogState {
  std::vector<double> u_prev, u_curr;
  std::vector<double> v_prev, v_curr;
  std::int64_t k = 0;
  double a_x = 0.0;  // 2·K·dt/(ħ·dx²)
  double b = 0.0;    // 2·dt/ħ, per meV
  double dt = 0.0;
  double t = 0.0;    // time of the `curr` level, ps
};

/// In-place update of one time level. On entry u_out/v_out hold level k−1;
/// on exit they hold level k+1. Element m reads u/v at {m−1, m, m+1} and the
/// out arrays at m only; points 0 and n−1 are never written.
struct KernelArgs {
  std::span<const double> u;
  std::span<const double> v;
  std::span<const double> potential;
  std::span<double> u_out;
  std::span<double> v_out;
  double a_x = 0.0;
  double b = 0.0;
};

/// Applies the kernel to interior indices [begin, end).
void leapfrog_kernel(const KernelArgs& args, std::size_t begin, std::size_t end);

class KernelExecutor {
 public:
  virtual ~KernelExecutor() = default;
  virtual void run(const KernelArgs& args) = 0;
  virtual std::string id() const = 0;
};

class SerialExecutor final : public KernelExecutor {
 public:
  void run(const KernelArgs& args) override;
  std::string id() const override { return "serial"; }
};

/// Splits the grid into contiguous chunks handled by persistent worker threads.
class ThreadedExecutor final : public KernelExecutor {
 public:
  explicit ThreadedExecutor(unsigned workers);
  ~ThreadedExecutor() override;
  ThreadedExecutor(const ThreadedExecutor&) = delete;
  ThreadedExecutor& operator=(const ThreadedExecutor&) = delete;

  void run(const KernelArgs& args) override;
  std::string id() const override;
  unsigned workers() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Serial execution over fixed-size chunks visited in a seeded random order.
class PermutedExecutor final : public KernelExecutor {
 public:
  PermutedExecutor(std::size_t chunk, std::uint64_t seed);
  void run(const KernelArgs& args) override;
  std::string id() const override { return "permuted"; }

 private:
  std::size_t chunk_;
  std::uint64_t state_;
};

std::unique_ptr<KernelExecutor> make_executor(const std::string& id, unsigned workers);

/// H·ψ for the real three-point Hamiltonian on the full grid (walls held at 0).
void apply_hamiltonian(std::span<const double> potential, double kinetic_over_dx2, std::span<const double> in,
                       std::span<double> out);

/// Builds levels 0 and 1 from ψ. Level 1 comes from a 6th-order Taylor
/// expansion of exp(−i·dt·H/ħ) with the potential sampled at t0 + dt/2.
LeapfrogState start_leapfrog(const Wavefunction& psi, std::span<const double> potential_half, const Grid& grid,
                             const UnitSystem& units, double dt, double t0 = 0.0);

/// Advances one level with no stability precondition.
void step(LeapfrogState& state, std::span<const double> potential, KernelExecutor& exec);

Wavefunction current_state(const LeapfrogState& state);

/// Largest eigenvalue of H over slopes in [−max_abs_slope, max_abs_slope].
double max_hamiltonian_eigenvalue(const PotentialField& field, double max_abs_slope_meV, const Grid& grid,
                                  const UnitSystem& units);

double max_stable_dt(const DqdParams& p, double max_abs_slope_meV, const Grid& grid, const UnitSystem& units,
                     double safety_factor = 0.8);
double max_stable_dt(const PotentialField& field, double max_abs_slope_meV, const Grid& grid,
                     const UnitSystem& units, double safety_factor = 0.8);

struct TraceRow {
  double time_ps = 0.0;
  double norm = 0.0;
  double p_left = 0.0;
  double p_right = 0.0;
  std::vector<std::complex<double>> projections;
};

struct PropagationOptions {
  double dt = 0.0;  // ps; 0 selects max_stable_dt for the schedule
  double safety_factor = 0.8;
  KernelExecutor* executor = nullptr;  // serial when null
  bool record_trace = false;
  double observer_stride_ps = 1.0;
  std::vector<Wavefunction> projections;
  int finite_check_interval = 64;
};

struct PropagationResult {
  Wavefunction state;
  std::vector<TraceRow> trace;
  std::int64_t steps = 0;
  double dt = 0.0;
};

/// Evolves ψ0 from schedule.start() for t_final ps. The step is shortened to
/// t_final/ceil(t_final/dt) so the run ends exactly at t_final.
PropagationResult propagate(const Wavefunction& psi0, const PotentialField& field, const Grid& grid,
                            const UnitSystem& units, const DetuningSchedule& schedule, double t_final,
                            const PropagationOptions& options = {});

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace);

}  // namespace dqd
