#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csb/baseline_extrapolation.hpp"
#include "csb/csf.hpp"
#include "csb/metrics.hpp"

namespace csb {

/// Shared knobs: every runner writes report.json / metrics.csv plus its
/// figure-data CSVs when out_dir is nonempty.
struct ExperimentIo {
  std::string out_dir;
};

struct ConfounderConfig {
  std::size_t n_data = 40000;
  int n_gen = 256;               // stochastic regenerations averaged per counterfactual
  double sigma = 0.05;           // entropic level for CSB generation
  double do_value = 3.0;
  double tail_x = -4.0;          // factual selection target
  int grid_steps = 200;
  int baseline_steps = 3000;
  int baseline_batch = 256;
  std::vector<std::size_t> baseline_hidden = {64, 64};
  ExperimentIo io;
};

struct MisspecifiedConfig {
  std::size_t n_data = 40000;
  int n_test = 400;              // factual rows for the population-mean error
  int n_gen = 32;
  double sigma = 0.05;
  double do_value = 3.0;
  int grid_steps = 200;
  ExperimentIo io;
};

struct TunnelingConfig {
  int dim = 10;                  // ambient dimension D
  std::size_t n_train = 4000;
  std::size_t n_eval = 2000;
  double sigma_csb = 0.25;
  std::vector<double> sigma_sweep = {0.0, 0.25, 0.5};
  int steps = 2000;
  int batch = 256;
  std::vector<std::size_t> hidden = {48, 48};
  double lr = 1e-3;
  int grid_steps = 150;
  // Reconstructed moon geometry. The control population sits on thin arcs
  // with uneven mode weights; the stimulated population is the same moon
  // pair across a spatial gap, balanced and with wide per-point spread, so
  // the transport must both move mass between modes and manufacture
  // conditional heterogeneity.
  double moon_radius = 1.0;
  double moon_noise = 0.02;          // control arc thickness
  double target_noise = 0.25;        // stimulated arc thickness
  double source_mode_a_weight = 0.65;
  double stimulated_scale = 1.0;
  double gap_shift_x = 3.5;
  double gap_shift_y = 0.6;
  std::uint64_t embed_seed = 0;  // filled by the runner from its master seed
  ExperimentIo io;
};

struct Bench1000Config {
  int dim = 1000;
  std::size_t n_rows = 2048;
  std::size_t n_infer = 256;
  double sigma_csb = 0.5;
  int node_steps = 150;
  int node_batch = 64;
  std::size_t node_hidden = 32;
  int path_grid_steps = 50;
  int grid_steps = 100;
  ExperimentIo io;
};

struct FullrankConfig {
  int dim = 10000;               // desk default; 1e5 sits behind --large
  std::size_t n_train = 4096;
  std::size_t n_val = 512;
  double noise_std = 0.1;
  int steps = 700;               // equal step budget for both nets
  int batch = 8;
  double lr_conv = 2e-2;
  double lr_mlp = 2e-4;
  std::size_t mlp_hidden = 512;
  std::vector<std::size_t> conv_hidden = {64, 32};
  bool run_small_check = true;   // repeat the conv run at dim/10
  ExperimentIo io;
};

struct ManifoldConfig {
  int dim = 1000;
  std::size_t n_train = 3000;
  std::size_t n_eval = 1000;
  double sigma = 0.1;
  int steps = 3000;
  int batch = 96;
  std::vector<std::size_t> hidden = {96};
  double lr = 0.3;
  int grid_steps = 100;
  double ambient_noise = 0.01;
  int calib_d_ref = 50;
  int calib_trials = 8;
  ExperimentIo io;
};

ExperimentReport run_confounder(std::uint64_t seed, const ConfounderConfig& cfg = {});
ExperimentReport run_misspecified(std::uint64_t seed, const MisspecifiedConfig& cfg = {});
ExperimentReport run_tunneling(std::uint64_t seed, const TunnelingConfig& cfg = {});
ExperimentReport run_benchmark_1000d(std::uint64_t seed, const Bench1000Config& cfg = {});
ExperimentReport run_fullrank_audit(std::uint64_t seed, const FullrankConfig& cfg = {});
ExperimentReport run_manifold_recovery(std::uint64_t seed, const ManifoldConfig& cfg = {});

/// Double-moon population embedded in R^dim through the rotation derived
/// from cfg.embed_seed; used by the tunneling stress test. `shifted`
/// selects the stimulated (target) population.
Dataset sample_moons_embedded(const TunnelingConfig& cfg, std::size_t n, bool shifted,
                              std::uint64_t seed);

/// Fraction of rows landing nearer mode A than mode B after rotating back
/// to the moon plane.
double moon_mode_fraction(const Dataset& ambient, const TunnelingConfig& cfg, bool shifted);

}  // namespace csb
