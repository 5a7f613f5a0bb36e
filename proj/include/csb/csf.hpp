#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "csb/bridge_core.hpp"
#include "csb/graph_scm.hpp"
#include "csb/sde_engine.hpp"

namespace csb {

struct FitConfig {
  TrainConfig train;
  int path_grid_steps = 50;  // grid for the per-row parent trajectories
  bool debug_reverse_layer_order = false;
};

struct FitMeta {
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
  std::vector<double> layer_seconds;
  std::vector<int> train_invocations;           // exactly one per node
  std::vector<std::uint64_t> parent_tensor_hash;  // 0 when no tensor was consumed
};

/// The full factorized bridge: one LocalBridge per node, trained in a
/// single pass over the topological layers.
struct CsbModel {
  Dag dag;
  std::vector<std::vector<int>> layers;
  std::vector<LocalBridge> bridges;
  DiffusionSchedule schedule;
  FitMeta meta;
  bool fitted = false;
};

/// Causal Sequential Fitting: iterates the topological layers exactly once;
/// nodes inside a layer train independently with per-node derived seeds
/// (seed = mix(master_seed, node)), so concurrent and serial layer execution
/// produce identical models. Each node's conditioning trajectories are
/// simulated from its already-fitted parent bridges through the target
/// rows. Solver errors are rethrown annotated with the node id.
CsbModel fit(const Dag& dag, const Dataset& data0, const Dataset& data1,
             const DiffusionSchedule& schedule, const FitConfig& cfg, std::uint64_t seed);

// ---- Counterfactual inference -------------------------------------------------

/// Reverses one node's LOCAL bridge from its observed value at t=1 down to
/// t=0 in the deterministic limit, conditioning only on the supplied parent
/// trajectories (never on children). parent_traj is [knot][parent] on the
/// same grid. Returns the whole backward trajectory (states stored in time
/// order).
std::vector<double> structural_abduction(const LocalBridge& bridge, double x_obs,
                                         const std::vector<double>& parent_traj,
                                         const TimeGrid& grid);

struct CounterfactualResult {
  std::vector<double> endpoint;                  // per node, at t=1
  std::vector<std::vector<double>> abduction;    // factual backward paths
  std::vector<std::vector<double>> prediction;   // counterfactual forward paths
};

/// Pearl's three steps on the fitted factorized bridge: deterministic
/// abduction of every node along the factual parent trajectories, clamping
/// of intervened nodes to their do-values for all t (abducted noise
/// discarded), and stochastic regeneration at sigma_gen conditioned on the
/// (possibly intervened) parent trajectories.
CounterfactualResult hybrid_counterfactual_full(const CsbModel& model,
                                                const std::vector<double>& x_fact,
                                                const std::map<int, double>& assignments,
                                                const TimeGrid& grid, double sigma_gen,
                                                std::uint64_t seed);

std::vector<double> hybrid_counterfactual(const CsbModel& model, const std::vector<double>& x_fact,
                                          const std::map<int, double>& assignments,
                                          const TimeGrid& grid, double sigma_gen,
                                          std::uint64_t seed);

/// Abduct once, regenerate n_gen times with derived seeds. Rows of the
/// result are counterfactual endpoints.
Dataset counterfactual_batch(const CsbModel& model, const std::vector<double>& x_fact,
                             const std::map<int, double>& assignments, const TimeGrid& grid,
                             double sigma_gen, int n_gen, std::uint64_t seed);

/// Drift of one node evaluated against a full state vector; reads only
/// {node} ∪ parents coordinates by construction. Exists so tests can poison
/// child coordinates and assert invariance.
double admissible_drift(const CsbModel& model, int node, const std::vector<double>& state, double t,
                        double sigma);

/// Forward transport of whole source rows through the factorized bridge
/// (each node from its own source coordinate, conditioned on its parents'
/// generated trajectories). Batched per node; rows use derived noise
/// streams, so the result is seed-reproducible and thread-count-invariant.
Dataset transport(const CsbModel& model, const Dataset& sources, double sigma_gen,
                  const TimeGrid& grid, std::uint64_t seed);

// ---- Control-energy decomposition numerics ----------------------------------------

/// Optional additive time-only drift perturbations, one per node (empty =
/// none). Time-only perturbations with zero integral keep translation
/// bridges' endpoint maps intact.
using DriftPerturbation = std::function<double(double t)>;

/// Total control energy of the factorized solution, Monte Carlo over joint
/// simulations from the fitted source law (sigma = 0 dynamics; Euler when
/// perturbed, exact paths otherwise).
double total_control_energy(const CsbModel& model, int n_mc, std::uint64_t seed, int grid_steps,
                            const std::vector<DriftPerturbation>& perturbations = {});

/// local_kl_energy with the parent context simulated from the fitted model.
double model_local_energy(const CsbModel& model, int node, int n_mc, std::uint64_t seed,
                          int grid_steps);

// ---- Serialization ---------------------------------------------------------------

void save_model(const CsbModel& model, const std::string& dir);
CsbModel load_model(const std::string& dir);

// ---- Scaling audit ----------------------------------------------------------------

struct ScalePoint {
  int dim;
  double seconds;
};

/// Runs fit per dimension on SCM-family transports (noise -> family(d)
/// samples) and records the fit wall-clock.
std::vector<ScalePoint> fit_wall_time_by_dimension(const std::function<Scm(int)>& family,
                                                   const std::vector<int>& dims,
                                                   const DiffusionSchedule& schedule,
                                                   const FitConfig& cfg, std::size_t n_rows,
                                                   std::uint64_t seed);

/// Least-squares slope of log(seconds) against log(dim).
double log_log_slope(const std::vector<ScalePoint>& points);

/// n x d standard-normal dataset (the factorized source law).
Dataset gaussian_noise_dataset(std::size_t rows, std::size_t cols, std::uint64_t seed,
                               const std::vector<std::string>& names = {});

}  // namespace csb
