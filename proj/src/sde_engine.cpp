#include "csb/sde_engine.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace csb {

Trajectory integrate_ode(const DriftField& drift, const std::vector<double>& x0,
                         const TimeGrid& grid, Direction direction) {
  const int dim = static_cast<int>(x0.size());
  Trajectory traj(dim, grid);
  traj.direction = direction;
  traj.sigma_used = 0.0;
  const double dt = grid.dt();
  std::vector<double> dx(dim, 0.0);

  if (direction == Direction::Forward) {
    std::copy(x0.begin(), x0.end(), traj.at(0));
    for (int k = 0; k < grid.n_steps; ++k) {
      const double* cur = traj.at(k);
      double* nxt = traj.at(k + 1);
      drift(cur, grid.t(k), dx.data());
      for (int j = 0; j < dim; ++j) nxt[j] = cur[j] + dx[j] * dt;
      detail::check_finite_state(nxt, dim, k + 1);
    }
  } else {
    std::copy(x0.begin(), x0.end(), traj.at(grid.n_steps));
    for (int k = grid.n_steps; k > 0; --k) {
      const double* cur = traj.at(k);
      double* nxt = traj.at(k - 1);
      drift(cur, grid.t(k), dx.data());
      for (int j = 0; j < dim; ++j) nxt[j] = cur[j] - dx[j] * dt;
      detail::check_finite_state(nxt, dim, k - 1);
    }
  }
  return traj;
}

Trajectory integrate_sde(const DriftField& drift, const NoiseSchedule& g,
                         const std::vector<double>& x0, const TimeGrid& grid, std::uint64_t seed,
                         Direction direction) {
  const int dim = static_cast<int>(x0.size());
  Trajectory traj(dim, grid);
  traj.direction = direction;
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  std::vector<double> dx(dim, 0.0);
  Rng rng(seed);
  double max_g = 0.0;

  if (direction == Direction::Forward) {
    std::copy(x0.begin(), x0.end(), traj.at(0));
    for (int k = 0; k < grid.n_steps; ++k) {
      const double* cur = traj.at(k);
      double* nxt = traj.at(k + 1);
      const double tk = grid.t(k);
      const double gk = g(tk);
      max_g = std::max(max_g, gk);
      drift(cur, tk, dx.data());
      // The noise term is skipped when g vanishes so the sigma=0 path is
      // bit-identical to integrate_ode.
      if (gk != 0.0) {
        Rng step_rng = rng.derive(0x5de0u, static_cast<std::uint64_t>(k));
        for (int j = 0; j < dim; ++j)
          nxt[j] = cur[j] + dx[j] * dt + gk * sqdt * step_rng.normal();
      } else {
        for (int j = 0; j < dim; ++j) nxt[j] = cur[j] + dx[j] * dt;
      }
      detail::check_finite_state(nxt, dim, k + 1);
    }
  } else {
    std::copy(x0.begin(), x0.end(), traj.at(grid.n_steps));
    for (int k = grid.n_steps; k > 0; --k) {
      const double* cur = traj.at(k);
      double* nxt = traj.at(k - 1);
      const double tk = grid.t(k);
      const double gk = g(tk);
      max_g = std::max(max_g, gk);
      drift(cur, tk, dx.data());
      if (gk != 0.0) {
        Rng step_rng = rng.derive(0x5de0u, static_cast<std::uint64_t>(k));
        for (int j = 0; j < dim; ++j)
          nxt[j] = cur[j] - dx[j] * dt + gk * sqdt * step_rng.normal();
      } else {
        for (int j = 0; j < dim; ++j) nxt[j] = cur[j] - dx[j] * dt;
      }
      detail::check_finite_state(nxt, dim, k - 1);
    }
  }
  traj.sigma_used = max_g;
  return traj;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path,
                          const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "t";
  for (int j = 0; j < traj.dim; ++j) {
    out << ',';
    if (j < static_cast<int>(names.size()))
      out << names[j];
    else
      out << "x_" << j;
  }
  out << '\n';
  char buf[40];
  for (int k = 0; k <= traj.grid.n_steps; ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g", traj.grid.t(k));
    out << buf;
    for (int j = 0; j < traj.dim; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", traj.value(k, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace csb
