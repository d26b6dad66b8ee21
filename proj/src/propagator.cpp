#include "dqd/propagator.hpp"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <thread>

#include "dqd/stationary.hpp"

namespace dqd {

DetuningSchedule DetuningSchedule::constant(double v_slope_meV, double duration_ps) {
  DetuningSchedule s;
  s.breakpoints = {{0.0, v_slope_meV}, {std::max(duration_ps, 0.0), v_slope_meV}};
  return s;
}

double DetuningSchedule::at(double t_ps) const {
  if (breakpoints.empty()) return 0.0;
  if (t_ps <= breakpoints.front().first) return breakpoints.front().second;
  if (t_ps >= breakpoints.back().first) return breakpoints.back().second;
  auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t_ps,
                             [](double t, const auto& bp) { return t < bp.first; });
  const auto& [t1, v1] = *it;
  const auto& [t0, v0] = *(it - 1);
  if (t1 == t0) return v1;
  return v0 + (v1 - v0) * (t_ps - t0) / (t1 - t0);
}

double DetuningSchedule::max_abs() const {
  double m = 0.0;
  for (const auto& bp : breakpoints) m = std::max(m, std::abs(bp.second));
  return m;
}

void DetuningSchedule::validate() const {
  if (breakpoints.empty()) throw Error(ErrorCode::invalid_argument, "schedule has no breakpoints");
  for (std::size_t i = 1; i < breakpoints.size(); ++i)
    if (!(breakpoints[i].first >= breakpoints[i - 1].first))
      throw Error(ErrorCode::invalid_argument, "schedule times must be non-decreasing");
  for (const auto& bp : breakpoints)
    if (!std::isfinite(bp.first) || !std::isfinite(bp.second))
      throw Error(ErrorCode::invalid_argument, "schedule contains a non-finite value");
}

void leapfrog_kernel(const KernelArgs& a, std::size_t begin, std::size_t end) {
  const double ax = a.a_x;
  const double b = a.b;
  const double* u = a.u.data();
  const double* v = a.v.data();
  const double* pot = a.potential.data();
  double* uo = a.u_out.data();
  double* vo = a.v_out.data();
  for (std::size_t m = begin; m < end; ++m) {
    const double diag = 2.0 * ax + b * pot[m];
    uo[m] = uo[m] + (diag * v[m] - ax * (v[m + 1] + v[m - 1]));
    vo[m] = vo[m] - (diag * u[m] - ax * (u[m + 1] + u[m - 1]));
  }
}

void SerialExecutor::run(const KernelArgs& args) { leapfrog_kernel(args, 1, args.u.size() - 1); }

struct ThreadedExecutor::Impl {
  unsigned workers;
  std::barrier<> start;
  std::barrier<> done;
  std::atomic<bool> stop{false};
  const KernelArgs* args = nullptr;
  std::vector<std::thread> threads;

  explicit Impl(unsigned w) : workers(w), start(w), done(w) {}

  void chunk(unsigned i) const {
    const std::size_t interior = args->u.size() - 2;
    const std::size_t lo = 1 + interior * i / workers;
    const std::size_t hi = 1 + interior * (i + 1) / workers;
    leapfrog_kernel(*args, lo, hi);
  }
};

ThreadedExecutor::ThreadedExecutor(unsigned workers) : impl_(std::make_unique<Impl>(std::max(1u, workers))) {
  for (unsigned i = 1; i < impl_->workers; ++i) {
    impl_->threads.emplace_back([this, i] {
      Impl& s = *impl_;
      for (;;) {
        s.start.arrive_and_wait();
        if (s.stop.load(std::memory_order_acquire)) return;
        s.chunk(i);
        s.done.arrive_and_wait();
      }
    });
  }
}

ThreadedExecutor::~ThreadedExecutor() {
  impl_->stop.store(true, std::memory_order_release);
  impl_->start.arrive_and_wait();
  for (auto& t : impl_->threads) t.join();
}

void ThreadedExecutor::run(const KernelArgs& args) {
  impl_->args = &args;
  impl_->start.arrive_and_wait();
  impl_->chunk(0);
  impl_->done.arrive_and_wait();
}

std::string ThreadedExecutor::id() const { return "threaded-" + std::to_string(impl_->workers); }
unsigned ThreadedExecutor::workers() const { return impl_->workers; }

PermutedExecutor::PermutedExecutor(std::size_t chunk, std::uint64_t seed)
    : chunk_(std::max<std::size_t>(1, chunk)), state_(seed) {}

void PermutedExecutor::run(const KernelArgs& args) {
  const std::size_t n = args.u.size();
  std::vector<std::size_t> starts;
  for (std::size_t s = 1; s < n - 1; s += chunk_) starts.push_back(s);
  std::mt19937_64 rng(state_++);
  std::shuffle(starts.begin(), starts.end(), rng);
  for (std::size_t s : starts) leapfrog_kernel(args, s, std::min(s + chunk_, n - 1));
}

std::unique_ptr<KernelExecutor> make_executor(const std::string& id, unsigned workers) {
  if (id == "serial") return std::make_unique<SerialExecutor>();
  if (id == "threaded") return std::make_unique<ThreadedExecutor>(workers);
  if (id == "permuted") return std::make_unique<PermutedExecutor>(17, 0x5eedull);
  throw Error(ErrorCode::invalid_argument, "unknown kernel backend '" + id + "'");
}

void apply_hamiltonian(std::span<const double> potential, double kdx2, std::span<const double> in,
                       std::span<double> out) {
  const std::size_t n = in.size();
  out[0] = 0.0;
  out[n - 1] = 0.0;
  for (std::size_t m = 1; m + 1 < n; ++m)
    out[m] = (2.0 * kdx2 + potential[m]) * in[m] - kdx2 * (in[m + 1] + in[m - 1]);
}

LeapfrogState start_leapfrog(const Wavefunction& psi, std::span<const double> potential_half, const Grid& grid,
                             const UnitSystem& units, double dt, double t0) {
  const std::size_t n = grid.n_points;
  if (psi.size() != n || potential_half.size() != n)
    throw Error(ErrorCode::dimension, "start_leapfrog: state or potential does not match grid");
  if (psi.staggered) throw Error(ErrorCode::invalid_argument, "start_leapfrog: expects a de-staggered state");
  if (!(dt > 0.0)) throw Error(ErrorCode::invalid_argument, "start_leapfrog: dt must be positive");

  const double dx = grid.dx();
  const double kdx2 = units.kinetic_prefactor() / (dx * dx);
  LeapfrogState s;
  s.dt = dt;
  s.a_x = 2.0 * units.kinetic_prefactor() * dt / (units.hbar * dx * dx);
  s.b = 2.0 * dt / units.hbar;
  s.u_prev = psi.re;
  s.v_prev = psi.im;
  s.u_prev.front() = s.u_prev.back() = 0.0;
  s.v_prev.front() = s.v_prev.back() = 0.0;

  s.u_curr = s.u_prev;
  s.v_curr = s.v_prev;
  std::vector<double> tr = s.u_prev, ti = s.v_prev, hr(n), hi(n);
  for (int j = 1; j <= 6; ++j) {
    // term ← (−i·dt·H/(ħ·j))·term
    const double c = dt / (units.hbar * j);
    apply_hamiltonian(potential_half, kdx2, tr, hr);
    apply_hamiltonian(potential_half, kdx2, ti, hi);
    for (std::size_t m = 0; m < n; ++m) {
      tr[m] = c * hi[m];
      ti[m] = -c * hr[m];
      s.u_curr[m] += tr[m];
      s.v_curr[m] += ti[m];
    }
  }
  s.k = 1;
  s.t = t0 + dt;
  return s;
}

void step(LeapfrogState& s, std::span<const double> potential, KernelExecutor& exec) {
  KernelArgs args{s.u_curr, s.v_curr, potential, s.u_prev, s.v_prev, s.a_x, s.b};
  exec.run(args);
  std::swap(s.u_prev, s.u_curr);
  std::swap(s.v_prev, s.v_curr);
  ++s.k;
  s.t += s.dt;
}

Wavefunction current_state(const LeapfrogState& s) {
  Wavefunction w;
  w.re = s.u_curr;
  w.im = s.v_curr;
  return w;
}

double max_hamiltonian_eigenvalue(const PotentialField& field, double max_abs_slope_meV, const Grid& grid,
                                  const UnitSystem& units) {
  const double s = std::abs(max_abs_slope_meV);
  // The top eigenvalue is convex in the slope, so the interval ends bound it.
  const double hi = largest_eigenvalue(build_hamiltonian(field.sample(s), grid, units));
  if (s == 0.0) return hi;
  return std::max(hi, largest_eigenvalue(build_hamiltonian(field.sample(-s), grid, units)));
}

double max_stable_dt(const PotentialField& field, double max_abs_slope_meV, const Grid& grid,
                     const UnitSystem& units, double safety_factor) {
  if (!(safety_factor > 0.0 && safety_factor <= 1.0))
    throw Error(ErrorCode::configuration, "dt safety factor must lie in (0, 1]");
  return safety_factor * units.hbar / max_hamiltonian_eigenvalue(field, max_abs_slope_meV, grid, units);
}

double max_stable_dt(const DqdParams& p, double max_abs_slope_meV, const Grid& grid, const UnitSystem& units,
                     double safety_factor) {
  return max_stable_dt(make_potential_field(p, grid), max_abs_slope_meV, grid, units, safety_factor);
}

namespace {

TraceRow observe(const Wavefunction& psi, const Grid& grid, double t, const std::vector<Wavefunction>& targets) {
  TraceRow r;
  r.time_ps = t;
  r.norm = norm_squared(psi, grid);
  r.p_left = half_line_probability(psi, grid, Side::left);
  r.p_right = half_line_probability(psi, grid, Side::right);
  for (const auto& target : targets) r.projections.push_back(inner_product(target, psi, grid));
  return r;
}

bool all_finite(const LeapfrogState& s) {
  for (std::size_t m = 0; m < s.u_curr.size(); ++m)
    if (!std::isfinite(s.u_curr[m]) || !std::isfinite(s.v_curr[m])) return false;
  return true;
}

}  // namespace

PropagationResult propagate(const Wavefunction& psi0, const PotentialField& field, const Grid& grid,
                            const UnitSystem& units, const DetuningSchedule& schedule, double t_final,
                            const PropagationOptions& options) {
  schedule.validate();
  if (psi0.size() != grid.n_points) throw Error(ErrorCode::dimension, "propagate: state does not match grid");
  if (!(t_final >= 0.0)) throw Error(ErrorCode::invalid_argument, "propagate: t_final must be >= 0");

  PropagationResult result;
  const double t0 = schedule.start();
  if (t_final == 0.0) {
    result.state = psi0;
    if (options.record_trace) result.trace.push_back(observe(psi0, grid, t0, options.projections));
    return result;
  }

  const double e_max = max_hamiltonian_eigenvalue(field, schedule.max_abs(), grid, units);
  double dt = options.dt > 0.0 ? options.dt : options.safety_factor * units.hbar / e_max;
  if (dt * e_max / units.hbar > 1.0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "propagate: dt = %.6g ps exceeds the stability bound hbar/E_max = %.6g ps", dt,
                  units.hbar / e_max);
    throw Error(ErrorCode::instability, buf);
  }
  const auto n_steps = static_cast<std::int64_t>(std::ceil(t_final / dt - 1e-9));
  dt = t_final / static_cast<double>(n_steps);
  result.dt = dt;

  SerialExecutor serial;
  KernelExecutor& exec = options.executor ? *options.executor : serial;

  std::vector<double> pot;
  field.sample(schedule.at(t0 + 0.5 * dt), pot);
  LeapfrogState s = start_leapfrog(psi0, pot, grid, units, dt, t0);

  const double stride = options.observer_stride_ps > 0.0 ? options.observer_stride_ps : t_final;
  double next_obs = t0 + stride;
  if (options.record_trace) result.trace.push_back(observe(psi0, grid, t0, options.projections));

  double v_cached = std::numeric_limits<double>::quiet_NaN();
  const int check = std::max(1, options.finite_check_interval);
  while (s.k < n_steps) {
    if (options.record_trace && s.t >= next_obs - 1e-9 * dt) {
      result.trace.push_back(observe(current_state(s), grid, s.t, options.projections));
      while (next_obs <= s.t + 1e-9 * dt) next_obs += stride;
    }
    const double v = schedule.at(s.t);
    if (!(std::abs(v - v_cached) <= 1e-12)) {
      field.sample(v, pot);
      v_cached = v;
    }
    step(s, pot, exec);
    if (s.k % check == 0 && !all_finite(s))
      throw Error(ErrorCode::instability, "propagate: non-finite amplitude at step " + std::to_string(s.k));
  }
  if (!all_finite(s))
    throw Error(ErrorCode::instability, "propagate: non-finite amplitude at step " + std::to_string(s.k));

  result.steps = s.k;
  result.state = current_state(s);
  if (options.record_trace) result.trace.push_back(observe(result.state, grid, t0 + t_final, options.projections));
  return result;
}

void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "time_ps,norm,p_left,p_right,re_psi0,im_psi0,re_psi1,im_psi1\n";
  char buf[64];
  auto put = [&](double x, bool last) {
    std::snprintf(buf, sizeof buf, "%.12g", x);
    os << buf << (last ? '\n' : ',');
  };
  for (const auto& r : trace) {
    put(r.time_ps, false);
    put(r.norm, false);
    put(r.p_left, false);
    put(r.p_right, false);
    for (std::size_t j = 0; j < 2; ++j) {
      const auto c = j < r.projections.size() ? r.projections[j] : std::complex<double>{};
      put(c.real(), false);
      put(c.imag(), j == 1);
    }
  }
}

}  // namespace dqd
