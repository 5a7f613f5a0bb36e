#include "csb/bridge_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "csb/parallel.hpp"

namespace csb {

// ---- GaussianBridge ----------------------------------------------------------

double GaussianBridge::marginal_var(double t) const {
  const double a = 1.0 - t;
  return a * a * s0 * s0 + t * t * s1 * s1 + 2.0 * a * t * coupling + sigma * sigma * t * a;
}

double GaussianBridge::drift(double x, double t) const {
  const double a = 1.0 - t;
  const double num = a * (coupling - s0 * s0) + t * (s1 * s1 - coupling);
  const double v = marginal_var(t);
  return (m1 - m0) + (num / v) * (x - mean_path(t));
}

double GaussianBridge::sample_endpoint(double x0, Rng& rng) const {
  const double slope = coupling / (s0 * s0);
  const double cvar = s1 * s1 - coupling * coupling / (s0 * s0);
  const double m = m1 + slope * (x0 - m0);
  // sigma == 0 must be exactly deterministic (and consume no randomness).
  if (sigma == 0.0 || cvar <= 0.0) return m;
  return m + std::sqrt(cvar) * rng.normal();
}

void GaussianBridge::sample_path(double x0, const TimeGrid& grid, Rng& rng, double* out) const {
  const double x1 = sample_endpoint(x0, rng);
  const int n = grid.n_steps;
  out[0] = x0;
  out[n] = x1;
  if (sigma == 0.0) {
    for (int k = 1; k < n; ++k) {
      const double t = grid.t(k);
      out[k] = (1.0 - t) * x0 + t * x1;
    }
    return;
  }
  // Brownian bridge pinned at 0 on both ends, built sequentially:
  // B_{k+1} | B_k ~ N(B_k (1-t_{k+1})/(1-t_k), dt (1-t_{k+1})/(1-t_k)).
  double b = 0.0;
  const double dt = grid.dt();
  for (int k = 1; k < n; ++k) {
    const double t_prev = grid.t(k - 1);
    const double t_cur = grid.t(k);
    const double shrink = (1.0 - t_cur) / (1.0 - t_prev);
    b = b * shrink + std::sqrt(dt * shrink) * rng.normal();
    out[k] = (1.0 - t_cur) * x0 + t_cur * x1 + sigma * b;
  }
}

GaussianBridge solve_gaussian_bridge(double m0, double s0, double m1, double s1, double sigma) {
  if (!(s0 > 0.0) || !(s1 > 0.0))
    throw NonPositiveStd("solve_gaussian_bridge: endpoint stds must be positive");
  if (sigma < 0.0) throw NonPositiveStd("solve_gaussian_bridge: sigma must be nonnegative");
  GaussianBridge b;
  b.m0 = m0;
  b.s0 = s0;
  b.m1 = m1;
  b.s1 = s1;
  b.sigma = sigma;
  const double eps = sigma * sigma;
  b.coupling = std::sqrt(s0 * s0 * s1 * s1 + 0.25 * eps * eps) - 0.5 * eps;
  return b;
}

// ---- cfm_training_pair -------------------------------------------------------

void cfm_training_pair(const double* x0, const double* x1, std::size_t dim, double t, double sigma,
                       const double* noise, double* x_t, double* v_target) {
  const double spread = sigma * std::sqrt(t * (1.0 - t));
  for (std::size_t j = 0; j < dim; ++j) {
    x_t[j] = (1.0 - t) * x0[j] + t * x1[j] + spread * noise[j];
    v_target[j] = x1[j] - x0[j];
  }
}

std::pair<double, double> cfm_training_pair(double x0, double x1, double t, double sigma,
                                            double noise) {
  double xt, v;
  cfm_training_pair(&x0, &x1, 1, t, sigma, &noise, &xt, &v);
  return {xt, v};
}

// ---- GaussianConditional ------------------------------------------------------

GaussianBridge GaussianConditional::slice(const double* pa0, const double* pa1,
                                          double sigma) const {
  double m0 = b0, m1 = b1;
  for (std::size_t j = 0; j < w0.size(); ++j) m0 += w0[j] * pa0[j];
  for (std::size_t j = 0; j < w1.size(); ++j) m1 += w1[j] * pa1[j];
  return solve_gaussian_bridge(m0, s0, m1, s1, sigma);
}

// ---- LocalBridge ---------------------------------------------------------------

double LocalBridge::drift(double x, const double* pa_now, const double* pa0, const double* pa1,
                          double t, double sigma) const {
  if (solver == SolverKind::Neural) {
    const std::size_t p = parents.size();
    std::vector<double> in(p + 2);
    in[0] = x;
    for (std::size_t j = 0; j < p; ++j) in[1 + j] = pa_now[j];
    in[p + 1] = t;
    Mlp::Workspace ws = neural.net.make_workspace(1);
    double out = 0.0;
    neural.net.forward(in.data(), 1, ws, &out, ExecPolicy::Serial);
    return out;
  }
  return gauss.slice(pa0, pa1, sigma).drift(x, t);
}

// ---- ParentPaths ----------------------------------------------------------------

void ParentPaths::at_time(std::size_t r, double t, double* out) const {
  const std::size_t p = parent_nodes.size();
  const double pos = t * grid_steps;
  int k = static_cast<int>(pos);
  if (k >= grid_steps) k = grid_steps - 1;
  const double frac = pos - k;
  const double* a = knot(r, k);
  const double* b = knot(r, k + 1);
  for (std::size_t j = 0; j < p; ++j) out[j] = (1.0 - frac) * a[j] + frac * b[j];
}

std::uint64_t ParentPaths::content_hash() const {
  return fnv1a(values.data(), values.size() * sizeof(double));
}

// ---- least squares helper --------------------------------------------------------

namespace {

// x ~ N(w . pa + b, s^2) by ordinary least squares with a tiny ridge.
void fit_linear_gaussian(const Dataset& data, int node, const std::vector<int>& parents,
                         std::vector<double>& w, double& b, double& s) {
  const std::size_t n = data.rows;
  const std::size_t p = parents.size();
  const std::size_t m = p + 1;  // parents + intercept
  std::vector<double> ata(m * m, 0.0), atb(m, 0.0), row(m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < p; ++j) row[j] = data.at(r, parents[j]);
    row[p] = 1.0;
    const double y = data.at(r, node);
    for (std::size_t i = 0; i < m; ++i) {
      atb[i] += row[i] * y;
      for (std::size_t j = 0; j < m; ++j) ata[i * m + j] += row[i] * row[j];
    }
  }
  for (std::size_t i = 0; i < m; ++i) ata[i * m + i] += 1e-9 * static_cast<double>(n);

  // Gaussian elimination with partial pivoting on the small normal system.
  std::vector<double> sol = atb;
  for (std::size_t c = 0; c < m; ++c) {
    std::size_t piv = c;
    for (std::size_t r2 = c + 1; r2 < m; ++r2)
      if (std::abs(ata[r2 * m + c]) > std::abs(ata[piv * m + c])) piv = r2;
    if (piv != c) {
      for (std::size_t j = 0; j < m; ++j) std::swap(ata[c * m + j], ata[piv * m + j]);
      std::swap(sol[c], sol[piv]);
    }
    const double d = ata[c * m + c];
    for (std::size_t r2 = c + 1; r2 < m; ++r2) {
      const double f = ata[r2 * m + c] / d;
      if (f == 0.0) continue;
      for (std::size_t j = c; j < m; ++j) ata[r2 * m + j] -= f * ata[c * m + j];
      sol[r2] -= f * sol[c];
    }
  }
  for (std::size_t c = m; c-- > 0;) {
    for (std::size_t j = c + 1; j < m; ++j) sol[c] -= ata[c * m + j] * sol[j];
    sol[c] /= ata[c * m + c];
  }

  w.assign(sol.begin(), sol.begin() + p);
  b = sol[p];
  double sse = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double pred = b;
    for (std::size_t j = 0; j < p; ++j) pred += w[j] * data.at(r, parents[j]);
    const double e = data.at(r, node) - pred;
    sse += e * e;
  }
  s = std::sqrt(sse / static_cast<double>(n));
  if (!(s > 0.0)) s = 1e-9;  // degenerate (e.g. intervened constant) columns
}

double residual_excess_kurtosis(const Dataset& data, int node, const std::vector<int>& parents) {
  std::vector<double> w;
  double b, s;
  fit_linear_gaussian(data, node, parents, w, b, s);
  if (s < 1e-12) return 0.0;
  double m4 = 0.0;
  for (std::size_t r = 0; r < data.rows; ++r) {
    double pred = b;
    for (std::size_t j = 0; j < parents.size(); ++j) pred += w[j] * data.at(r, parents[j]);
    const double e = (data.at(r, node) - pred) / s;
    m4 += e * e * e * e;
  }
  return m4 / static_cast<double>(data.rows) - 3.0;
}

double quadratic_r2_gain(const Dataset& data, int node, const std::vector<int>& parents) {
  if (parents.empty()) return 0.0;
  // Augment with squared parent columns and compare residual variance.
  Dataset aug(data.rows, data.cols + parents.size());
  for (std::size_t r = 0; r < data.rows; ++r) {
    for (std::size_t c = 0; c < data.cols; ++c) aug.at(r, c) = data.at(r, c);
    for (std::size_t j = 0; j < parents.size(); ++j) {
      const double v = data.at(r, parents[j]);
      aug.at(r, data.cols + j) = v * v;
    }
  }
  std::vector<int> aug_parents = parents;
  for (std::size_t j = 0; j < parents.size(); ++j)
    aug_parents.push_back(static_cast<int>(data.cols + j));

  std::vector<double> w;
  double b, s_lin, s_quad;
  fit_linear_gaussian(data, node, parents, w, b, s_lin);
  fit_linear_gaussian(aug, node, aug_parents, w, b, s_quad);
  const double var_y = data.column_std(node) * data.column_std(node);
  if (var_y < 1e-12) return 0.0;
  return (s_lin * s_lin - s_quad * s_quad) / var_y;
}

}  // namespace

SolverKind select_solver(int node, const Dataset& data0, const Dataset& data1,
                         const std::vector<int>& parents) {
  const double k0 = std::abs(residual_excess_kurtosis(data0, node, parents));
  const double k1 = std::abs(residual_excess_kurtosis(data1, node, parents));
  if (k0 > 0.5 || k1 > 0.5) return SolverKind::Neural;
  if (quadratic_r2_gain(data0, node, parents) > 0.01 ||
      quadratic_r2_gain(data1, node, parents) > 0.01)
    return SolverKind::Neural;
  return SolverKind::Gaussian;
}

// ---- train_local_bridge -----------------------------------------------------------

LocalBridge train_local_bridge(int node, const Dataset& data0, const Dataset& data1,
                               const ParentPaths* parent_paths, const std::vector<int>& parents,
                               const DiffusionSchedule& schedule, const TrainConfig& cfg) {
  if (node < 0 || static_cast<std::size_t>(node) >= data0.cols ||
      static_cast<std::size_t>(node) >= data1.cols)
    throw DimensionMismatch("train_local_bridge: node column out of range");
  for (int p : parents)
    if (p < 0 || static_cast<std::size_t>(p) >= data1.cols)
      throw DimensionMismatch("train_local_bridge: parent column out of range");
  if (parent_paths && parent_paths->rows != data1.rows)
    throw DimensionMismatch("train_local_bridge: parent paths must align with data1 rows");

  LocalBridge bridge;
  bridge.node = node;
  bridge.parents = parents;
  bridge.schedule = schedule;

  SolverKind kind = cfg.solver;
  if (kind == SolverKind::Auto) kind = select_solver(node, data0, data1, parents);
  bridge.solver = kind;

  if (kind == SolverKind::Neural && !parents.empty() && parent_paths == nullptr)
    throw DimensionMismatch("train_local_bridge: neural conditional node needs parent paths");

  if (kind == SolverKind::Gaussian) {
    fit_linear_gaussian(data0, node, parents, bridge.gauss.w0, bridge.gauss.b0, bridge.gauss.s0);
    fit_linear_gaussian(data1, node, parents, bridge.gauss.w1, bridge.gauss.b1, bridge.gauss.s1);
    return bridge;
  }

  // Neural path: I-CFM with random coupling. The conditioning values come
  // from the per-row parent trajectories, which are row-aligned with data1.
  const std::size_t p = parents.size();
  const std::size_t in_dim = p + 2;  // x_t, parents, t
  bridge.neural.net = Mlp({in_dim, cfg.hidden, 1});
  Rng master(cfg.seed);
  Rng init_rng = master.derive(0x1217u);
  bridge.neural.net.init(init_rng);
  bridge.neural.sigma_train = schedule.sigma;

  SgdMomentum opt(cfg.lr, cfg.momentum, bridge.neural.net.param_count());
  const std::size_t batch = static_cast<std::size_t>(cfg.batch);
  Mlp::Workspace ws = bridge.neural.net.make_workspace(batch);
  std::vector<double> in(batch * in_dim), out(batch), dy(batch), target(batch);
  std::vector<double> grads(bridge.neural.net.param_count(), 0.0);
  std::vector<double> pa_now(std::max<std::size_t>(p, 1), 0.0);

  double window_sum = 0.0;
  int window_n = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng srng = master.derive(0x7a31u, static_cast<std::uint64_t>(step));
    for (std::size_t s = 0; s < batch; ++s) {
      Rng draw = srng.derive(s);
      const std::size_t j = static_cast<std::size_t>(draw.uniform01() * data1.rows) % data1.rows;
      const std::size_t k = static_cast<std::size_t>(draw.uniform01() * data0.rows) % data0.rows;
      const double t = draw.uniform01();
      const double x0 = data0.at(k, node);
      const double x1 = data1.at(j, node);
      auto [xt, v] = cfm_training_pair(x0, x1, t, schedule.sigma, draw.normal());
      double* row = in.data() + s * in_dim;
      row[0] = xt;
      if (p) {
        parent_paths->at_time(j, t, pa_now.data());
        for (std::size_t q = 0; q < p; ++q) row[1 + q] = pa_now[q];
      }
      row[in_dim - 1] = t;
      target[s] = v;
    }
    // Per-node nets are tiny; a single training run is single-threaded and
    // concurrency lives at the layer / batch level.
    bridge.neural.net.forward(in.data(), batch, ws, out.data(), ExecPolicy::Serial);
    double loss = 0.0;
    for (std::size_t s = 0; s < batch; ++s) {
      const double e = out[s] - target[s];
      loss += e * e;
      dy[s] = 2.0 * e / static_cast<double>(batch);
    }
    loss /= static_cast<double>(batch);
    if (!std::isfinite(loss))
      throw NonFiniteLoss("train_local_bridge: loss diverged at step " + std::to_string(step) +
                          " (node " + std::to_string(node) + ", lr " + std::to_string(cfg.lr) + ")");
    bridge.neural.net.backward(ws, dy.data(), grads.data(), nullptr, ExecPolicy::Serial);
    opt.step(bridge.neural.net.params(), grads, ExecPolicy::Serial);

    window_sum += loss;
    if (++window_n == cfg.epoch_window || step + 1 == cfg.steps) {
      bridge.neural.epoch_losses.push_back(window_sum / window_n);
      window_sum = 0.0;
      window_n = 0;
    }
  }
  bridge.neural.trained = true;
  return bridge;
}

// ---- local_kl_energy ----------------------------------------------------------------

double local_kl_energy(const LocalBridge& bridge, const DiffusionSchedule& schedule, int n_mc,
                       std::uint64_t seed, const EnergySampleFn& sample_ctx, int grid_steps) {
  const TimeGrid grid{grid_steps};
  const std::size_t p = bridge.parents.size();
  if (p > 0 && !sample_ctx)
    throw DimensionMismatch("local_kl_energy: conditional bridge needs a context sampler");

  const Rng master(seed);
  std::vector<double> totals(n_mc, 0.0);
  par::parallel_for(static_cast<std::size_t>(n_mc), [&](std::size_t i) {
    Rng rng = master.derive(0xe4e9u, i);
    std::vector<double> pa_path;
    double x0;
    if (sample_ctx) {
      x0 = sample_ctx(i, rng, grid, pa_path);
    } else {
      if (bridge.solver != SolverKind::Gaussian)
        throw DimensionMismatch("local_kl_energy: neural bridge needs a context sampler");
      x0 = bridge.gauss.b0 + bridge.gauss.s0 * rng.normal();
    }
    const double* pa0 = p ? pa_path.data() : nullptr;
    const double* pa1 = p ? pa_path.data() + static_cast<std::size_t>(grid.n_steps) * p : nullptr;

    std::vector<double> path(grid.n_steps + 1, 0.0);
    if (bridge.solver == SolverKind::Gaussian) {
      GaussianBridge gb = p ? bridge.gauss.slice(pa0, pa1, schedule.sigma)
                            : solve_gaussian_bridge(bridge.gauss.b0, bridge.gauss.s0,
                                                    bridge.gauss.b1, bridge.gauss.s1,
                                                    schedule.sigma);
      gb.sample_path(x0, grid, rng, path.data());
      double acc = 0.0;
      for (int k = 0; k <= grid.n_steps; ++k) {
        const double u = gb.drift(path[k], grid.t(k));
        const double w = (k == 0 || k == grid.n_steps) ? 0.5 : 1.0;
        acc += w * 0.5 * u * u;
      }
      totals[i] = acc * grid.dt();
    } else {
      // Neural: Euler-Maruyama under the learned drift.
      std::vector<double> pa_now(std::max<std::size_t>(p, 1), 0.0);
      double x = x0;
      double acc = 0.0;
      double prev_half_u2 = 0.0;
      for (int k = 0; k <= grid.n_steps; ++k) {
        const double t = grid.t(k);
        const double* knot = p ? pa_path.data() + static_cast<std::size_t>(k) * p : nullptr;
        if (p) std::memcpy(pa_now.data(), knot, p * sizeof(double));
        const double u = bridge.drift(x, pa_now.data(), pa0, pa1, t, schedule.sigma);
        const double half_u2 = 0.5 * u * u;
        if (k > 0) acc += 0.5 * (prev_half_u2 + half_u2) * grid.dt();
        prev_half_u2 = half_u2;
        if (k < grid.n_steps) {
          const double gk = schedule.g(t);
          x += u * grid.dt();
          if (gk != 0.0) x += gk * std::sqrt(grid.dt()) * rng.normal();
        }
      }
      totals[i] = acc;
    }
  });
  double sum = 0.0;
  for (double v : totals) sum += v;
  return sum / static_cast<double>(n_mc);
}

// ---- JointBridge -----------------------------------------------------------------------

JointBridge train_joint_bridge(const Dataset& data0, const Dataset& data1, double sigma,
                               const JointTrainConfig& cfg) {
  if (data0.cols != data1.cols)
    throw DimensionMismatch("train_joint_bridge: dataset dimensions differ");
  const std::size_t dim = data0.cols;

  JointBridge jb;
  jb.dim = dim;
  jb.sigma_train = sigma;
  std::vector<std::size_t> widths;
  widths.push_back(dim + 1);
  for (std::size_t h : cfg.hidden) widths.push_back(h);
  widths.push_back(dim);
  jb.net = Mlp(widths);

  Rng master(cfg.seed);
  Rng init_rng = master.derive(0x91c3u);
  jb.net.init(init_rng);

  SgdMomentum opt(cfg.lr, cfg.momentum, jb.net.param_count());
  const std::size_t batch = static_cast<std::size_t>(cfg.batch);
  Mlp::Workspace ws = jb.net.make_workspace(batch);
  const std::size_t in_dim = dim + 1;
  std::vector<double> in(batch * in_dim), out(batch * dim), dy(batch * dim),
      target(batch * dim), noise(dim);
  std::vector<double> grads(jb.net.param_count(), 0.0);

  double window_sum = 0.0;
  int window_n = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    Rng srng = master.derive(0x77f2u, static_cast<std::uint64_t>(step));
    for (std::size_t s = 0; s < batch; ++s) {
      Rng draw = srng.derive(s);
      const std::size_t j = static_cast<std::size_t>(draw.uniform01() * data1.rows) % data1.rows;
      const std::size_t k = static_cast<std::size_t>(draw.uniform01() * data0.rows) % data0.rows;
      const double t = draw.uniform01();
      for (std::size_t q = 0; q < dim; ++q) noise[q] = draw.normal();
      double* row = in.data() + s * in_dim;
      cfm_training_pair(data0.row(k), data1.row(j), dim, t, sigma, noise.data(), row,
                        target.data() + s * dim);
      row[dim] = t;
    }
    jb.net.forward(in.data(), batch, ws, out.data());
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(batch * dim);
    for (std::size_t q = 0; q < batch * dim; ++q) {
      const double e = out[q] - target[q];
      loss += e * e;
      dy[q] = 2.0 * e * inv;
    }
    loss *= inv;
    if (!std::isfinite(loss))
      throw NonFiniteLoss("train_joint_bridge: loss diverged at step " + std::to_string(step));
    jb.net.backward(ws, dy.data(), grads.data());
    opt.step(jb.net.params(), grads);

    window_sum += loss;
    if (++window_n == cfg.epoch_window || step + 1 == cfg.steps) {
      jb.epoch_losses.push_back(window_sum / window_n);
      window_sum = 0.0;
      window_n = 0;
    }
  }
  return jb;
}

namespace {

// One Euler(-Maruyama) pass for a single row of a joint bridge; noise
// derives from (rng, step) so the sigma = 0 path consumes no randomness.
void joint_integrate_row(const JointBridge& jb, const double* x_in, double sigma_gen,
                         const TimeGrid& grid, Rng rng, bool backward, double* x_out) {
  const std::size_t dim = jb.dim;
  std::vector<double> state(x_in, x_in + dim);
  std::vector<double> in(dim + 1), vel(dim);
  Mlp::Workspace ws = jb.net.make_workspace(1);
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  for (int s = 0; s < grid.n_steps; ++s) {
    const int k = backward ? grid.n_steps - s : s;
    const double t = grid.t(k);
    std::memcpy(in.data(), state.data(), dim * sizeof(double));
    in[dim] = t;
    jb.net.forward(in.data(), 1, ws, vel.data(), ExecPolicy::Serial);
    const double sign = backward ? -1.0 : 1.0;
    if (sigma_gen != 0.0) {
      Rng step_rng = rng.derive(0x3e77u, static_cast<std::uint64_t>(s));
      for (std::size_t j = 0; j < dim; ++j)
        state[j] += sign * vel[j] * dt + sigma_gen * sqdt * step_rng.normal();
    } else {
      for (std::size_t j = 0; j < dim; ++j) state[j] += sign * vel[j] * dt;
    }
    detail::check_finite_state(state.data(), static_cast<int>(dim), s + 1);
  }
  std::memcpy(x_out, state.data(), dim * sizeof(double));
}

}  // namespace

Dataset joint_generate(const JointBridge& bridge, const Dataset& sources, double sigma_gen,
                       const TimeGrid& grid, std::uint64_t seed) {
  if (sources.cols != bridge.dim) throw DimensionMismatch("joint_generate: dimension mismatch");
  Dataset out(sources.rows, sources.cols);
  out.names = sources.names;
  const Rng master(seed);
  par::parallel_for(sources.rows, [&](std::size_t r) {
    joint_integrate_row(bridge, sources.row(r), sigma_gen, grid, master.derive(0xa907u, r), false,
                        out.row(r));
  });
  return out;
}

Dataset joint_abduct(const JointBridge& bridge, const Dataset& observed, const TimeGrid& grid) {
  if (observed.cols != bridge.dim) throw DimensionMismatch("joint_abduct: dimension mismatch");
  Dataset out(observed.rows, observed.cols);
  out.names = observed.names;
  const Rng master(0);
  par::parallel_for(observed.rows, [&](std::size_t r) {
    joint_integrate_row(bridge, observed.row(r), 0.0, grid, master, true, out.row(r));
  });
  return out;
}

}  // namespace csb
