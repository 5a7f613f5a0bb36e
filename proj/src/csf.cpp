#include "csb/csf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "csb/parallel.hpp"
#include "json.hpp"

namespace csb {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// Per-row scalar trajectories of one fitted node through the data1 column,
// obtained by sigma = 0 backward integration of the node's own bridge.
// Layout [row][knot].
std::vector<double> batched_abduct_column(const LocalBridge& bridge, const Dataset& data1,
                                          const ParentPaths* pp, const TimeGrid& grid) {
  const std::size_t rows = data1.rows;
  const std::size_t p = bridge.parents.size();
  const int N = grid.n_steps;
  std::vector<double> out(rows * static_cast<std::size_t>(N + 1), 0.0);

  if (bridge.solver == SolverKind::Neural) {
    // One worker block owns a contiguous row range and walks the whole
    // backward grid with a single batched workspace: one parallel region
    // per node instead of one per time step.
    const std::size_t in_dim = p + 2;
    const double dt = grid.dt();
    par::parallel_blocks(rows, [&](std::size_t lo, std::size_t hi) {
      const std::size_t nb = hi - lo;
      Mlp::Workspace ws = bridge.neural.net.make_workspace(nb);
      std::vector<double> in(nb * in_dim), vel(nb), state(nb);
      for (std::size_t r = 0; r < nb; ++r) {
        state[r] = data1.at(lo + r, bridge.node);
        out[(lo + r) * (N + 1) + N] = state[r];
      }
      for (int k = N; k > 0; --k) {
        const double t = grid.t(k);
        for (std::size_t r = 0; r < nb; ++r) {
          double* row = in.data() + r * in_dim;
          row[0] = state[r];
          if (p) {
            const double* knot = pp->knot(lo + r, k);
            for (std::size_t j = 0; j < p; ++j) row[1 + j] = knot[j];
          }
          row[in_dim - 1] = t;
        }
        bridge.neural.net.forward(in.data(), nb, ws, vel.data(), ExecPolicy::Serial);
        for (std::size_t r = 0; r < nb; ++r) {
          state[r] -= vel[r] * dt;
          out[(lo + r) * (N + 1) + k - 1] = state[r];
        }
        detail::check_finite_state(state.data(), static_cast<int>(nb), k - 1);
      }
    });
    return out;
  }

  par::parallel_for(rows, [&](std::size_t r) {
    const double* pa0 = p ? pp->knot(r, 0) : nullptr;
    const double* pa1 = p ? pp->knot(r, N) : nullptr;
    GaussianBridge gb = p ? bridge.gauss.slice(pa0, pa1, 0.0)
                          : solve_gaussian_bridge(bridge.gauss.b0, bridge.gauss.s0,
                                                  bridge.gauss.b1, bridge.gauss.s1, 0.0);
    double x = data1.at(r, bridge.node);
    double* row = out.data() + r * (N + 1);
    row[N] = x;
    const double dt = grid.dt();
    for (int k = N; k > 0; --k) {
      x -= gb.drift(x, grid.t(k)) * dt;
      row[k - 1] = x;
    }
  });
  return out;
}

ParentPaths gather_parent_paths(const std::vector<int>& parents,
                                const std::map<int, std::vector<double>>& node_paths,
                                std::size_t rows, int steps) {
  ParentPaths pp(parents, steps, rows);
  const std::size_t p = parents.size();
  for (std::size_t j = 0; j < p; ++j) {
    const auto& src = node_paths.at(parents[j]);
    for (std::size_t r = 0; r < rows; ++r)
      for (int k = 0; k <= steps; ++k)
        pp.values[r * pp.stride() + static_cast<std::size_t>(k) * p + j] =
            src[r * static_cast<std::size_t>(steps + 1) + k];
  }
  return pp;
}

}  // namespace

// ---- fit -------------------------------------------------------------------------

CsbModel fit(const Dag& dag, const Dataset& data0, const Dataset& data1,
             const DiffusionSchedule& schedule, const FitConfig& cfg, std::uint64_t seed) {
  if (static_cast<int>(data0.cols) != dag.node_count ||
      static_cast<int>(data1.cols) != dag.node_count)
    throw DimensionMismatch("fit: dataset dimension must match the graph");

  const double t_start = now_seconds();
  CsbModel model;
  model.dag = dag;
  model.layers = topological_layers(dag);
  model.schedule = schedule;
  model.bridges.assign(dag.node_count, {});
  model.meta.seed = seed;
  model.meta.train_invocations.assign(dag.node_count, 0);
  model.meta.parent_tensor_hash.assign(dag.node_count, 0);

  const Rng master(seed);

  // Resolve solver kinds up front so we know which parent trajectories the
  // later layers will need.
  std::vector<SolverKind> kinds(dag.node_count, cfg.train.solver);
  if (cfg.train.solver == SolverKind::Auto)
    for (int i = 0; i < dag.node_count; ++i)
      kinds[i] = select_solver(i, data0, data1, dag.parents(i));
  const bool any_neural =
      std::any_of(kinds.begin(), kinds.end(), [](SolverKind k) { return k == SolverKind::Neural; });

  const TimeGrid path_grid{cfg.path_grid_steps};
  std::map<int, std::vector<double>> node_paths;
  std::vector<int> unfitted_children(dag.node_count, 0);
  for (int i = 0; i < dag.node_count; ++i)
    unfitted_children[i] = static_cast<int>(dag.children(i).size());

  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const double t_layer = now_seconds();
    std::vector<int> layer = model.layers[li];
    if (cfg.debug_reverse_layer_order) std::reverse(layer.begin(), layer.end());

    // Pre-gather each node's parent tensor (children of the same parents
    // share the identical tensor bytes; the hash records that).
    std::vector<ParentPaths> tensors(layer.size());
    for (std::size_t q = 0; q < layer.size(); ++q) {
      const int node = layer[q];
      const auto& parents = dag.parents(node);
      if (!parents.empty() && kinds[node] == SolverKind::Neural) {
        tensors[q] = gather_parent_paths(parents, node_paths, data1.rows, path_grid.n_steps);
        model.meta.parent_tensor_hash[node] = tensors[q].content_hash();
      }
    }

    // Train the layer concurrently; nodes are independent given their
    // derived seeds, so the thread count cannot change the result.
    std::vector<std::string> failures(layer.size());
    par::parallel_blocks(layer.size(), [&](std::size_t qlo, std::size_t qhi) {
      for (std::size_t q = qlo; q < qhi; ++q) {
        const int node = layer[q];
        try {
          TrainConfig node_cfg = cfg.train;
          node_cfg.solver = kinds[node];
          node_cfg.seed = master.derive(0x0f17u, static_cast<std::uint64_t>(node)).key();
          const auto& parents = dag.parents(node);
          const ParentPaths* pp =
              (!parents.empty() && kinds[node] == SolverKind::Neural) ? &tensors[q] : nullptr;
          model.bridges[node] =
              train_local_bridge(node, data0, data1, pp, parents, schedule, node_cfg);
          model.meta.train_invocations[node] += 1;
        } catch (const std::exception& e) {
          failures[q] = e.what();
        }
      }
    });
    for (std::size_t q = 0; q < layer.size(); ++q)
      if (!failures[q].empty())
        throw NonFiniteLoss("fit: node " + std::to_string(layer[q]) + " (" +
                            dag.name_of(layer[q]) + "): " + failures[q]);

    // Simulate this layer's trajectories for downstream conditioning.
    if (any_neural) {
      for (int node : model.layers[li]) {
        if (unfitted_children[node] == 0) continue;  // sink: nobody reads it
        const auto& parents = dag.parents(node);
        ParentPaths pp;
        const ParentPaths* ppp = nullptr;
        if (!parents.empty()) {
          pp = gather_parent_paths(parents, node_paths, data1.rows, path_grid.n_steps);
          ppp = &pp;
        }
        node_paths[node] = batched_abduct_column(model.bridges[node], data1, ppp, path_grid);
      }
      // Release parent trajectories nobody will read again.
      for (int node : model.layers[li])
        for (int p : dag.parents(node))
          if (--unfitted_children[p] == 0) node_paths.erase(p);
    }
    model.meta.layer_seconds.push_back(now_seconds() - t_layer);
  }

  model.meta.wall_seconds = now_seconds() - t_start;
  model.fitted = true;
  return model;
}

// ---- structural_abduction -----------------------------------------------------------

std::vector<double> structural_abduction(const LocalBridge& bridge, double x_obs,
                                         const std::vector<double>& parent_traj,
                                         const TimeGrid& grid) {
  const std::size_t p = bridge.parents.size();
  const int N = grid.n_steps;
  if (p && parent_traj.size() != static_cast<std::size_t>(N + 1) * p)
    throw DimensionMismatch("structural_abduction: parent trajectory does not cover the grid");
  std::vector<double> out(N + 1, 0.0);
  out[N] = x_obs;
  const double* pa0 = p ? parent_traj.data() : nullptr;
  const double* pa1 = p ? parent_traj.data() + static_cast<std::size_t>(N) * p : nullptr;
  double x = x_obs;
  const double dt = grid.dt();
  for (int k = N; k > 0; --k) {
    const double* pa_now = p ? parent_traj.data() + static_cast<std::size_t>(k) * p : nullptr;
    const double u = bridge.drift(x, pa_now, pa0, pa1, grid.t(k), 0.0);
    x -= u * dt;
    if (!std::isfinite(x))
      throw NonFiniteState("structural_abduction blew up at step " + std::to_string(k - 1), k - 1);
    out[k - 1] = x;
  }
  return out;
}

// ---- hybrid counterfactual ------------------------------------------------------------

namespace {

std::vector<double> gather_single_parent_traj(const std::vector<int>& parents,
                                              const std::vector<std::vector<double>>& paths,
                                              int n_steps) {
  const std::size_t p = parents.size();
  std::vector<double> out(static_cast<std::size_t>(n_steps + 1) * p);
  for (int k = 0; k <= n_steps; ++k)
    for (std::size_t j = 0; j < p; ++j) out[static_cast<std::size_t>(k) * p + j] = paths[parents[j]][k];
  return out;
}

// Forward generation of one node from its latent, conditioned on the
// (possibly intervened) parent paths.
std::vector<double> generate_node_path(const LocalBridge& bridge, double latent,
                                       const std::vector<double>& parent_traj,
                                       const TimeGrid& grid, double sigma_gen, Rng rng) {
  const std::size_t p = bridge.parents.size();
  const int N = grid.n_steps;
  std::vector<double> out(N + 1, 0.0);
  if (bridge.solver == SolverKind::Gaussian) {
    const double* pa0 = p ? parent_traj.data() : nullptr;
    const double* pa1 = p ? parent_traj.data() + static_cast<std::size_t>(N) * p : nullptr;
    GaussianBridge gb = p ? bridge.gauss.slice(pa0, pa1, sigma_gen)
                          : solve_gaussian_bridge(bridge.gauss.b0, bridge.gauss.s0,
                                                  bridge.gauss.b1, bridge.gauss.s1, sigma_gen);
    gb.sample_path(latent, grid, rng, out.data());
    return out;
  }
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  double x = latent;
  out[0] = x;
  const double* pa0 = p ? parent_traj.data() : nullptr;
  const double* pa1 = p ? parent_traj.data() + static_cast<std::size_t>(N) * p : nullptr;
  for (int k = 0; k < N; ++k) {
    const double* pa_now = p ? parent_traj.data() + static_cast<std::size_t>(k) * p : nullptr;
    const double u = bridge.drift(x, pa_now, pa0, pa1, grid.t(k), sigma_gen);
    x += u * dt;
    if (sigma_gen != 0.0) x += sigma_gen * sqdt * rng.normal();
    if (!std::isfinite(x))
      throw NonFiniteState("generation blew up at step " + std::to_string(k + 1), k + 1);
    out[k + 1] = x;
  }
  return out;
}

}  // namespace

CounterfactualResult hybrid_counterfactual_full(const CsbModel& model,
                                                const std::vector<double>& x_fact,
                                                const std::map<int, double>& assignments,
                                                const TimeGrid& grid, double sigma_gen,
                                                std::uint64_t seed) {
  if (!model.fitted) throw UnfittedModel("hybrid_counterfactual: model is not fitted");
  if (static_cast<int>(x_fact.size()) != model.dag.node_count)
    throw DimensionMismatch("hybrid_counterfactual: factual state has wrong dimension");
  for (const auto& [node, v] : assignments) {
    (void)v;
    if (node < 0 || node >= model.dag.node_count)
      throw UnknownNode("hybrid_counterfactual: unknown node " + std::to_string(node));
  }

  const int n = model.dag.node_count;
  const int N = grid.n_steps;
  CounterfactualResult res;
  res.abduction.assign(n, {});
  res.prediction.assign(n, {});
  res.endpoint.assign(n, 0.0);
  const Rng master(seed);

  // Step 1 (abduction): every node is reversed along the factual parent
  // trajectories; parents are processed before children so their factual
  // paths exist when a child needs them.
  for (const auto& layer : model.layers) {
    for (int node : layer) {
      const auto& parents = model.dag.parents(node);
      std::vector<double> ptraj = gather_single_parent_traj(parents, res.abduction, N);
      res.abduction[node] = structural_abduction(model.bridges[node], x_fact[node], ptraj, grid);
    }
  }

  // Steps 2+3 (action, prediction): intervened nodes are clamped for all t
  // (their abducted noise is discarded); everything else regenerates from
  // its latent at sigma_gen along the post-intervention parent paths.
  for (const auto& layer : model.layers) {
    for (int node : layer) {
      auto it = assignments.find(node);
      if (it != assignments.end()) {
        res.prediction[node].assign(N + 1, it->second);
      } else {
        const auto& parents = model.dag.parents(node);
        std::vector<double> ptraj = gather_single_parent_traj(parents, res.prediction, N);
        res.prediction[node] =
            generate_node_path(model.bridges[node], res.abduction[node][0], ptraj, grid, sigma_gen,
                               master.derive(0xcf01u, static_cast<std::uint64_t>(node)));
      }
      res.endpoint[node] = res.prediction[node][N];
    }
  }
  return res;
}

std::vector<double> hybrid_counterfactual(const CsbModel& model, const std::vector<double>& x_fact,
                                          const std::map<int, double>& assignments,
                                          const TimeGrid& grid, double sigma_gen,
                                          std::uint64_t seed) {
  return hybrid_counterfactual_full(model, x_fact, assignments, grid, sigma_gen, seed).endpoint;
}

Dataset counterfactual_batch(const CsbModel& model, const std::vector<double>& x_fact,
                             const std::map<int, double>& assignments, const TimeGrid& grid,
                             double sigma_gen, int n_gen, std::uint64_t seed) {
  if (!model.fitted) throw UnfittedModel("counterfactual_batch: model is not fitted");
  const int n = model.dag.node_count;
  const int N = grid.n_steps;

  CounterfactualResult base = hybrid_counterfactual_full(model, x_fact, assignments, grid, 0.0, seed);

  Dataset out(static_cast<std::size_t>(n_gen), n);
  if (!model.dag.node_names.empty()) out.names = model.dag.node_names;
  const Rng master(seed);
  par::parallel_for(static_cast<std::size_t>(n_gen), [&](std::size_t g) {
    std::vector<std::vector<double>> pred(n);
    for (const auto& layer : model.layers) {
      for (int node : layer) {
        auto it = assignments.find(node);
        if (it != assignments.end()) {
          pred[node].assign(N + 1, it->second);
        } else {
          const auto& parents = model.dag.parents(node);
          std::vector<double> ptraj = gather_single_parent_traj(parents, pred, N);
          pred[node] = generate_node_path(
              model.bridges[node], base.abduction[node][0], ptraj, grid, sigma_gen,
              master.derive(0xbc12u, g, static_cast<std::uint64_t>(node)));
        }
      }
    }
    for (int j = 0; j < n; ++j) out.at(g, j) = pred[j][N];
  });
  return out;
}

Dataset transport(const CsbModel& model, const Dataset& sources, double sigma_gen,
                  const TimeGrid& grid, std::uint64_t seed) {
  if (!model.fitted) throw UnfittedModel("transport: model is not fitted");
  if (static_cast<int>(sources.cols) != model.dag.node_count)
    throw DimensionMismatch("transport: source dimension must match the graph");
  const std::size_t rows = sources.rows;
  const int N = grid.n_steps;
  const Rng master(seed);

  std::map<int, std::vector<double>> paths;  // node -> [row][knot]
  std::vector<int> pending_children(model.dag.node_count, 0);
  for (int i = 0; i < model.dag.node_count; ++i)
    pending_children[i] = static_cast<int>(model.dag.children(i).size());

  Dataset out(rows, sources.cols);
  out.names = sources.names;

  for (const auto& layer : model.layers) {
    for (int node : layer) {
      const auto& bridge = model.bridges[node];
      const std::size_t p = bridge.parents.size();
      std::vector<const std::vector<double>*> ppaths(p);
      for (std::size_t j = 0; j < p; ++j) ppaths[j] = &paths.at(bridge.parents[j]);

      std::vector<double>& mine = paths[node];
      mine.assign(rows * static_cast<std::size_t>(N + 1), 0.0);

      if (bridge.solver == SolverKind::Gaussian) {
        par::parallel_for(rows, [&](std::size_t r) {
          std::vector<double> pa0(p), pa1(p);
          for (std::size_t j = 0; j < p; ++j) {
            pa0[j] = (*ppaths[j])[r * (N + 1)];
            pa1[j] = (*ppaths[j])[r * (N + 1) + N];
          }
          GaussianBridge gb = p ? bridge.gauss.slice(pa0.data(), pa1.data(), sigma_gen)
                                : solve_gaussian_bridge(bridge.gauss.b0, bridge.gauss.s0,
                                                        bridge.gauss.b1, bridge.gauss.s1,
                                                        sigma_gen);
          Rng rng = master.derive(0x7a05u, r, static_cast<std::uint64_t>(node));
          gb.sample_path(sources.at(r, node), grid, rng, mine.data() + r * (N + 1));
        });
      } else {
        const std::size_t in_dim = p + 2;
        const double dt = grid.dt();
        const double sqdt = std::sqrt(dt);
        par::parallel_blocks(rows, [&](std::size_t lo, std::size_t hi) {
          const std::size_t nb = hi - lo;
          Mlp::Workspace ws = bridge.neural.net.make_workspace(nb);
          std::vector<double> in(nb * in_dim), vel(nb), state(nb);
          std::vector<Rng> rngs(nb);
          for (std::size_t r = 0; r < nb; ++r) {
            state[r] = sources.at(lo + r, node);
            mine[(lo + r) * (N + 1)] = state[r];
            rngs[r] = master.derive(0x7a05u, lo + r, static_cast<std::uint64_t>(node));
          }
          for (int k = 0; k < N; ++k) {
            const double t = grid.t(k);
            for (std::size_t r = 0; r < nb; ++r) {
              double* row = in.data() + r * in_dim;
              row[0] = state[r];
              for (std::size_t j = 0; j < p; ++j) row[1 + j] = (*ppaths[j])[(lo + r) * (N + 1) + k];
              row[in_dim - 1] = t;
            }
            bridge.neural.net.forward(in.data(), nb, ws, vel.data(), ExecPolicy::Serial);
            for (std::size_t r = 0; r < nb; ++r) {
              double x = state[r] + vel[r] * dt;
              if (sigma_gen != 0.0) x += sigma_gen * sqdt * rngs[r].normal();
              state[r] = x;
              mine[(lo + r) * (N + 1) + k + 1] = x;
            }
            detail::check_finite_state(state.data(), static_cast<int>(nb), k + 1);
          }
        });
      }
      par::parallel_for(rows, [&](std::size_t r) { out.at(r, node) = mine[r * (N + 1) + N]; });
    }
    for (int node : layer)
      for (int p2 : model.dag.parents(node))
        if (--pending_children[p2] == 0) paths.erase(p2);
  }
  return out;
}

double admissible_drift(const CsbModel& model, int node, const std::vector<double>& state, double t,
                        double sigma) {
  if (!model.fitted) throw UnfittedModel("admissible_drift: model is not fitted");
  if (node < 0 || node >= model.dag.node_count) throw UnknownNode("admissible_drift: bad node");
  const auto& parents = model.dag.parents(node);
  std::vector<double> pa(parents.size());
  for (std::size_t j = 0; j < parents.size(); ++j) pa[j] = state[parents[j]];
  return model.bridges[node].drift(state[node], pa.data(), pa.data(), pa.data(), t, sigma);
}

// ---- energies ----------------------------------------------------------------------------

namespace {

void require_gaussian(const CsbModel& model, const char* who) {
  for (const auto& b : model.bridges)
    if (b.solver != SolverKind::Gaussian)
      throw DimensionMismatch(std::string(who) + ": requires closed-form Gaussian bridges");
}

}  // namespace

double total_control_energy(const CsbModel& model, int n_mc, std::uint64_t seed, int grid_steps,
                            const std::vector<DriftPerturbation>& perturbations) {
  if (!model.fitted) throw UnfittedModel("total_control_energy: model is not fitted");
  require_gaussian(model, "total_control_energy");
  if (!perturbations.empty() && static_cast<int>(perturbations.size()) != model.dag.node_count)
    throw DimensionMismatch("total_control_energy: one perturbation slot per node");

  const TimeGrid grid{grid_steps};
  const int n = model.dag.node_count;
  const int N = grid.n_steps;
  const Rng master(seed);
  std::vector<double> totals(n_mc, 0.0);

  par::parallel_for(static_cast<std::size_t>(n_mc), [&](std::size_t i) {
    Rng rng = master.derive(0x70e1u, i);
    std::vector<std::vector<double>> paths(n);
    double acc = 0.0;
    for (const auto& layer : model.layers) {
      for (int node : layer) {
        const auto& bridge = model.bridges[node];
        const std::size_t p = bridge.parents.size();
        std::vector<double> ptraj = gather_single_parent_traj(bridge.parents, paths, N);
        const double* pa0 = p ? ptraj.data() : nullptr;
        const double* pa1 = p ? ptraj.data() + static_cast<std::size_t>(N) * p : nullptr;
        GaussianBridge gb = p ? bridge.gauss.slice(pa0, pa1, 0.0)
                              : solve_gaussian_bridge(bridge.gauss.b0, bridge.gauss.s0,
                                                      bridge.gauss.b1, bridge.gauss.s1, 0.0);
        double m0 = bridge.gauss.b0;
        for (std::size_t j = 0; j < p; ++j) m0 += bridge.gauss.w0[j] * pa0[j];
        Rng node_rng = rng.derive(static_cast<std::uint64_t>(node));
        const double x0 = m0 + bridge.gauss.s0 * node_rng.normal();

        const DriftPerturbation* delta =
            (!perturbations.empty() && perturbations[node]) ? &perturbations[node] : nullptr;
        std::vector<double>& path = paths[node];
        path.assign(N + 1, 0.0);
        if (delta == nullptr) {
          gb.sample_path(x0, grid, node_rng, path.data());
          double prev = 0.0;
          for (int k = 0; k <= N; ++k) {
            const double u = gb.drift(path[k], grid.t(k));
            const double h = 0.5 * u * u;
            if (k > 0) acc += 0.5 * (prev + h) * grid.dt();
            prev = h;
          }
        } else {
          double x = x0;
          path[0] = x;
          double prev = 0.0;
          for (int k = 0; k <= N; ++k) {
            const double t = grid.t(k);
            const double u = gb.drift(x, t) + (*delta)(t);
            const double h = 0.5 * u * u;
            if (k > 0) acc += 0.5 * (prev + h) * grid.dt();
            prev = h;
            if (k < N) {
              x += u * grid.dt();
              path[k + 1] = x;
            }
          }
        }
      }
    }
    totals[i] = acc;
  });
  double sum = 0.0;
  for (double v : totals) sum += v;
  return sum / static_cast<double>(n_mc);
}

double model_local_energy(const CsbModel& model, int node, int n_mc, std::uint64_t seed,
                          int grid_steps) {
  if (!model.fitted) throw UnfittedModel("model_local_energy: model is not fitted");
  require_gaussian(model, "model_local_energy");
  const auto& bridge = model.bridges[node];
  const std::size_t p = bridge.parents.size();
  if (p == 0) return local_kl_energy(bridge, model.schedule, n_mc, seed, nullptr, grid_steps);

  // Ancestor closure in topological order.
  std::vector<int> closure;
  {
    std::set<int> anc;
    std::vector<int> stack(bridge.parents.begin(), bridge.parents.end());
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      if (anc.insert(u).second)
        for (int q : model.dag.parents(u)) stack.push_back(q);
    }
    for (const auto& layer : model.layers)
      for (int u : layer)
        if (anc.count(u)) closure.push_back(u);
  }

  EnergySampleFn ctx = [&](std::size_t i, Rng& rng, const TimeGrid& grid,
                           std::vector<double>& parent_path) -> double {
    (void)i;
    const int N = grid.n_steps;
    std::vector<std::vector<double>> paths(model.dag.node_count);
    for (int u : closure) {
      const auto& ub = model.bridges[u];
      const std::size_t up = ub.parents.size();
      std::vector<double> ptraj = gather_single_parent_traj(ub.parents, paths, N);
      const double* pa0 = up ? ptraj.data() : nullptr;
      const double* pa1 = up ? ptraj.data() + static_cast<std::size_t>(N) * up : nullptr;
      GaussianBridge gb = up ? ub.gauss.slice(pa0, pa1, model.schedule.sigma)
                             : solve_gaussian_bridge(ub.gauss.b0, ub.gauss.s0, ub.gauss.b1,
                                                     ub.gauss.s1, model.schedule.sigma);
      double m0 = ub.gauss.b0;
      for (std::size_t j = 0; j < up; ++j) m0 += ub.gauss.w0[j] * pa0[j];
      Rng node_rng = rng.derive(0x9ac4u, static_cast<std::uint64_t>(u));
      const double x0 = m0 + ub.gauss.s0 * node_rng.normal();
      paths[u].assign(N + 1, 0.0);
      gb.sample_path(x0, grid, node_rng, paths[u].data());
    }
    parent_path = gather_single_parent_traj(bridge.parents, paths, N);
    // Source draw for the node itself, conditional on the parent start.
    double m0 = bridge.gauss.b0;
    for (std::size_t j = 0; j < p; ++j) m0 += bridge.gauss.w0[j] * parent_path[j];
    return m0 + bridge.gauss.s0 * rng.normal();
  };
  return local_kl_energy(bridge, model.schedule, n_mc, seed, ctx, grid_steps);
}

// ---- serialization -------------------------------------------------------------------------

using nlohmann::json;

void save_model(const CsbModel& model, const std::string& dir) {
  if (!model.fitted) throw UnfittedModel("save_model: model is not fitted");
  std::filesystem::create_directories(dir);
  json doc;
  doc["schedule"] = {{"sigma", model.schedule.sigma},
                     {"kind", model.schedule.kind == DiffusionSchedule::Kind::Constant
                                  ? "constant"
                                  : "bridge_scaled"}};
  doc["seed"] = model.meta.seed;
  doc["wall_seconds"] = model.meta.wall_seconds;
  doc["layer_seconds"] = model.meta.layer_seconds;
  doc["layers"] = model.layers;

  json graph = json::array();
  for (int i = 0; i < model.dag.node_count; ++i) {
    json nd;
    nd["node"] = i;
    nd["name"] = model.dag.name_of(i);
    nd["parents"] = model.dag.parents(i);
    const auto& b = model.bridges[i];
    if (b.solver == SolverKind::Gaussian) {
      nd["solver"] = "gaussian";
      nd["gauss"] = {{"w0", b.gauss.w0}, {"b0", b.gauss.b0}, {"s0", b.gauss.s0},
                     {"w1", b.gauss.w1}, {"b1", b.gauss.b1}, {"s1", b.gauss.s1}};
    } else {
      nd["solver"] = "neural";
      std::vector<std::size_t> widths = b.neural.net.widths();
      nd["neural"] = {{"widths", widths},
                      {"sigma_train", b.neural.sigma_train},
                      {"weights_file", "node_" + std::to_string(i) + ".bin"},
                      {"param_count", b.neural.net.param_count()}};
      Dataset w(1, b.neural.net.param_count());
      std::copy(b.neural.net.params().begin(), b.neural.net.params().end(), w.values.begin());
      write_binary(w, dir + "/node_" + std::to_string(i) + ".bin");
    }
    graph.push_back(nd);
  }
  doc["nodes"] = graph;

  std::ofstream out(dir + "/model.json");
  if (!out) throw IoError("save_model: cannot write '" + dir + "/model.json'");
  out << doc.dump(2) << '\n';
}

CsbModel load_model(const std::string& dir) {
  std::ifstream in(dir + "/model.json");
  if (!in) throw IoError("load_model: cannot open '" + dir + "/model.json'");
  json doc = json::parse(in);

  const auto& nodes = doc.at("nodes");
  const int n = static_cast<int>(nodes.size());
  std::vector<std::string> names(n);
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    names[i] = nodes[i].at("name").get<std::string>();
    for (int p : nodes[i].at("parents").get<std::vector<int>>()) edges.push_back({p, i});
  }

  CsbModel model;
  model.dag = Dag(n, std::move(edges), std::move(names));
  model.layers = topological_layers(model.dag);
  model.schedule.sigma = doc.at("schedule").at("sigma").get<double>();
  model.schedule.kind = doc.at("schedule").at("kind").get<std::string>() == "bridge_scaled"
                            ? DiffusionSchedule::Kind::BridgeScaled
                            : DiffusionSchedule::Kind::Constant;
  model.meta.seed = doc.value("seed", 0ull);
  model.bridges.assign(n, {});

  for (int i = 0; i < n; ++i) {
    LocalBridge& b = model.bridges[i];
    b.node = i;
    b.parents = model.dag.parents(i);
    b.schedule = model.schedule;
    if (nodes[i].at("solver").get<std::string>() == "gaussian") {
      b.solver = SolverKind::Gaussian;
      const auto& g = nodes[i].at("gauss");
      b.gauss.w0 = g.at("w0").get<std::vector<double>>();
      b.gauss.w1 = g.at("w1").get<std::vector<double>>();
      b.gauss.b0 = g.at("b0").get<double>();
      b.gauss.b1 = g.at("b1").get<double>();
      b.gauss.s0 = g.at("s0").get<double>();
      b.gauss.s1 = g.at("s1").get<double>();
    } else {
      b.solver = SolverKind::Neural;
      const auto& nj = nodes[i].at("neural");
      b.neural.net = Mlp(nj.at("widths").get<std::vector<std::size_t>>());
      b.neural.sigma_train = nj.at("sigma_train").get<double>();
      Dataset w = read_binary(dir + "/" + nj.at("weights_file").get<std::string>());
      if (w.values.size() != b.neural.net.param_count())
        throw IoError("load_model: weight count mismatch for node " + std::to_string(i));
      std::copy(w.values.begin(), w.values.end(), b.neural.net.params().begin());
      b.neural.trained = true;
    }
  }
  model.fitted = true;
  return model;
}

// ---- scaling audit ---------------------------------------------------------------------------

Dataset gaussian_noise_dataset(std::size_t rows, std::size_t cols, std::uint64_t seed,
                               const std::vector<std::string>& names) {
  Dataset out(rows, cols);
  out.names = names;
  const Rng master(seed);
  par::parallel_for(rows, [&](std::size_t r) {
    Rng rng = master.derive(0x9017u, r);
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = rng.normal();
  });
  return out;
}

std::vector<ScalePoint> fit_wall_time_by_dimension(const std::function<Scm(int)>& family,
                                                   const std::vector<int>& dims,
                                                   const DiffusionSchedule& schedule,
                                                   const FitConfig& cfg, std::size_t n_rows,
                                                   std::uint64_t seed) {
  std::vector<ScalePoint> out;
  const Rng master(seed);
  for (int d : dims) {
    Scm scm = family(d);
    Dataset data1 = sample(scm, n_rows, master.derive(0xda1au, static_cast<std::uint64_t>(d)).key());
    Dataset data0 = gaussian_noise_dataset(
        n_rows, data1.cols, master.derive(0x401bu, static_cast<std::uint64_t>(d)).key());
    const double t0 = now_seconds();
    CsbModel model =
        fit(scm.dag, data0, data1, schedule, cfg, master.derive(0x57a9u, static_cast<std::uint64_t>(d)).key());
    const double dt = now_seconds() - t0;
    (void)model;
    out.push_back({d, dt});
  }
  return out;
}

double log_log_slope(const std::vector<ScalePoint>& points) {
  const std::size_t n = points.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : points) {
    const double x = std::log(static_cast<double>(p.dim));
    const double y = std::log(std::max(p.seconds, 1e-9));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  return (n * sxy - sx * sy) / denom;
}

}  // namespace csb
