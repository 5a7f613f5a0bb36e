#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "csb/errors.hpp"
#include "csb/rng.hpp"

namespace csb {

/// Uniform grid on [0,1] with n_steps intervals (n_steps+1 knots).
struct TimeGrid {
  int n_steps = 200;
  double t(int k) const { return static_cast<double>(k) / static_cast<double>(n_steps); }
  double dt() const { return 1.0 / static_cast<double>(n_steps); }
  static TimeGrid uniform(int n) { return TimeGrid{n}; }
};

enum class Direction { Forward, Backward };

/// Time-indexed state sequence: states[k*dim + j] is coordinate j at t_k,
/// regardless of the integration direction.
struct Trajectory {
  int dim = 0;
  TimeGrid grid;
  double sigma_used = 0.0;
  Direction direction = Direction::Forward;
  std::vector<double> states;  // (n_steps+1) x dim

  Trajectory() = default;
  Trajectory(int d, const TimeGrid& g)
      : dim(d), grid(g), states(static_cast<std::size_t>(g.n_steps + 1) * d, 0.0) {}

  double* at(int k) { return states.data() + static_cast<std::size_t>(k) * dim; }
  const double* at(int k) const { return states.data() + static_cast<std::size_t>(k) * dim; }
  double value(int k, int j) const { return states[static_cast<std::size_t>(k) * dim + j]; }
};

/// drift(x, t, out): writes dx/dt for the full state.
using DriftField = std::function<void(const double* x, double t, double* out)>;
/// g(t): diffusion coefficient, shared across coordinates.
using NoiseSchedule = std::function<double(double t)>;

/// Explicit Euler, forward or backward in time (backward runs t: 1 -> 0
/// with the caller-supplied field). Throws NonFiniteState with the step
/// index on blow-up.
Trajectory integrate_ode(const DriftField& drift, const std::vector<double>& x0,
                         const TimeGrid& grid, Direction direction = Direction::Forward);

/// Euler-Maruyama: x += drift*dt + g(t)*sqrt(dt)*xi. With g == 0 the output
/// is bit-identical to integrate_ode on the same grid.
Trajectory integrate_sde(const DriftField& drift, const NoiseSchedule& g,
                         const std::vector<double>& x0, const TimeGrid& grid, std::uint64_t seed,
                         Direction direction = Direction::Forward);

/// Columns: t, x_0..x_{d-1}.
void write_trajectory_csv(const Trajectory& traj, const std::string& path,
                          const std::vector<std::string>& names = {});

namespace detail {
inline void check_finite_state(const double* x, int dim, int step) {
  double s = 0.0;
  for (int j = 0; j < dim; ++j) s += x[j];
  if (!std::isfinite(s)) {
    for (int j = 0; j < dim; ++j)
      if (!std::isfinite(x[j]))
        throw NonFiniteState("integration blew up at step " + std::to_string(step) +
                                 ", coordinate " + std::to_string(j),
                             step);
    throw NonFiniteState("integration blew up at step " + std::to_string(step), step);
  }
}
}  // namespace detail

}  // namespace csb
