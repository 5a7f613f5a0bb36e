#include "csb/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "csb/parallel.hpp"
#include "json.hpp"

namespace csb {

namespace {

using nlohmann::json;

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::uint64_t hash_json(const json& j) {
  const std::string s = j.dump();
  return fnv1a(s.data(), s.size());
}

std::uint64_t hash_dataset(const Dataset& d) {
  return fnv1a(d.values.data(), d.values.size() * sizeof(double));
}

void maybe_write_csv(const std::string& dir, const std::string& file, const Dataset& d) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  write_csv(d, dir + "/" + file);
}

void finalize(ExperimentReport& rep, const std::string& out_dir) {
  rep.hardware_note = hardware_note_string();
  if (!out_dir.empty()) rep.write(out_dir);
}

// Column-orthonormal d x k matrix by Gram-Schmidt on Gaussian draws.
std::vector<double> random_orthonormal_columns(int d, int k, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> e(static_cast<std::size_t>(d) * k);
  for (int c = 0; c < k; ++c) {
    for (int r = 0; r < d; ++r) e[static_cast<std::size_t>(r) * k + c] = rng.normal();
    for (int prev = 0; prev < c; ++prev) {
      double dot = 0;
      for (int r = 0; r < d; ++r)
        dot += e[static_cast<std::size_t>(r) * k + c] * e[static_cast<std::size_t>(r) * k + prev];
      for (int r = 0; r < d; ++r)
        e[static_cast<std::size_t>(r) * k + c] -= dot * e[static_cast<std::size_t>(r) * k + prev];
    }
    double norm = 0;
    for (int r = 0; r < d; ++r) {
      const double v = e[static_cast<std::size_t>(r) * k + c];
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (int r = 0; r < d; ++r) e[static_cast<std::size_t>(r) * k + c] /= norm;
  }
  return e;
}

}  // namespace

// ---- confounder -----------------------------------------------------------------

namespace {

json confounder_config_json(const ConfounderConfig& c) {
  return json{{"n_data", c.n_data},
              {"n_gen", c.n_gen},
              {"sigma", c.sigma},
              {"do_value", c.do_value},
              {"tail_x", c.tail_x},
              {"grid_steps", c.grid_steps},
              {"baseline_steps", c.baseline_steps},
              {"baseline_batch", c.baseline_batch},
              {"baseline_hidden", c.baseline_hidden}};
}

// Structure-blind counterfactual: abduct the joint row, root-solve the
// intervened coordinate's latent until the regenerated value hits the
// do-value, regenerate deterministically.
std::vector<double> baseline_counterfactual(const JointBridge& jb, const std::vector<double>& fact,
                                            int coord, double do_value, const TimeGrid& grid) {
  Dataset obs(1, jb.dim);
  for (std::size_t j = 0; j < jb.dim; ++j) obs.at(0, j) = fact[j];
  Dataset latent = joint_abduct(jb, obs, grid);

  auto gen_with = [&](double u_coord) {
    Dataset src = latent;
    src.at(0, coord) = u_coord;
    Dataset g = joint_generate(jb, src, 0.0, grid, 0);
    return std::vector<double>(g.row(0), g.row(0) + g.cols);
  };

  double lo = -24.0, hi = 24.0;
  double flo = gen_with(lo)[coord] - do_value;
  double fhi = gen_with(hi)[coord] - do_value;
  if (flo * fhi > 0.0) {  // widen once if the bracket missed
    lo = -80.0;
    hi = 80.0;
    flo = gen_with(lo)[coord] - do_value;
    fhi = gen_with(hi)[coord] - do_value;
  }
  for (int it = 0; it < 48; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = gen_with(mid)[coord] - do_value;
    if ((flo <= 0.0) == (fm <= 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
      fhi = fm;
    }
  }
  return gen_with(0.5 * (lo + hi));
}

}  // namespace

ExperimentReport run_confounder(std::uint64_t seed, const ConfounderConfig& cfg) {
  const double t0 = now_seconds();
  const Rng master(seed);
  ExperimentReport rep;
  rep.name = "confounder";
  rep.seed = seed;
  rep.config_hash = hash_json(confounder_config_json(cfg));

  Scm scm = confounder_scm();
  Dataset data1 = sample(scm, cfg.n_data, master.derive(1).key());
  Dataset data0 = gaussian_noise_dataset(cfg.n_data, 3, master.derive(2).key(), scm.dag.node_names);
  rep.input_hash = hash_dataset(data1);

  // Factual individual from the low-density tail: the row nearest X = -4.
  std::size_t fact_row = 0;
  for (std::size_t r = 1; r < data1.rows; ++r)
    if (std::abs(data1.at(r, 0) - cfg.tail_x) < std::abs(data1.at(fact_row, 0) - cfg.tail_x))
      fact_row = r;
  const std::vector<double> x_fact = {data1.at(fact_row, 0), data1.at(fact_row, 1),
                                      data1.at(fact_row, 2)};
  rep.set("fact_x", x_fact[0]);
  rep.set("fact_y", x_fact[1]);
  rep.set("fact_z", x_fact[2]);

  // CSB: closed-form Gaussian bridges on the true fork.
  FitConfig fit_cfg;
  fit_cfg.train.solver = SolverKind::Gaussian;
  const double t_fit0 = now_seconds();
  CsbModel model =
      fit(scm.dag, data0, data1, DiffusionSchedule{cfg.sigma}, fit_cfg, master.derive(3).key());
  rep.set("csb_fit_seconds", now_seconds() - t_fit0);

  const TimeGrid grid{cfg.grid_steps};
  const std::map<int, double> do_y = {{1, cfg.do_value}};
  Dataset cf =
      counterfactual_batch(model, x_fact, do_y, grid, cfg.sigma, cfg.n_gen, master.derive(4).key());
  rep.set("csb_y", cf.column_mean(1));
  rep.set("csb_x", cf.column_mean(0));
  rep.set("csb_z", cf.column_mean(2));
  rep.set("csb_delta_z", std::abs(cf.column_mean(2) - x_fact[2]));

  // No-op intervention: do(Y = y_fact) must leave Z in place.
  Dataset noop = counterfactual_batch(model, x_fact, {{1, x_fact[1]}}, grid, cfg.sigma, cfg.n_gen,
                                      master.derive(5).key());
  rep.set("csb_noop_delta_z", std::abs(noop.column_mean(2) - x_fact[2]));

  // Structure-blind baseline: joint I-CFM on P(Y, Z), sigma = 0.
  Dataset data1_yz = data1.select_columns({1, 2});
  Dataset data0_yz = gaussian_noise_dataset(cfg.n_data, 2, master.derive(6).key(), {"Y", "Z"});
  JointTrainConfig jcfg;
  jcfg.steps = cfg.baseline_steps;
  jcfg.batch = cfg.baseline_batch;
  jcfg.hidden = cfg.baseline_hidden;
  jcfg.seed = master.derive(7).key();
  const double t_base0 = now_seconds();
  JointBridge baseline = train_joint_bridge(data0_yz, data1_yz, 0.0, jcfg);
  rep.set("baseline_fit_seconds", now_seconds() - t_base0);

  const std::vector<double> fact_yz = {x_fact[1], x_fact[2]};
  std::vector<double> bl = baseline_counterfactual(baseline, fact_yz, 0, cfg.do_value, grid);
  rep.set("baseline_y", bl[0]);
  rep.set("baseline_z", bl[1]);
  rep.set("baseline_delta_z", std::abs(bl[1] - x_fact[2]));
  std::vector<double> bl_noop = baseline_counterfactual(baseline, fact_yz, 0, x_fact[1], grid);
  rep.set("baseline_noop_delta_z", std::abs(bl_noop[1] - x_fact[2]));

  // Population leakage under do(Y = 3): protected = non-descendants of Y.
  {
    const int n_pop = 400;
    Dataset pop = sample(scm, n_pop, master.derive(8).key());
    Dataset post_csb(n_pop, 3);
    for (int r = 0; r < n_pop; ++r) {
      const std::vector<double> row(pop.row(r), pop.row(r) + 3);
      Dataset one = counterfactual_batch(model, row, do_y, grid, cfg.sigma, 8,
                                         master.derive(9, static_cast<std::uint64_t>(r)).key());
      for (int c = 0; c < 3; ++c) post_csb.at(r, c) = one.column_mean(c);
    }
    const std::set<int> protected_nodes = {0, 2};
    rep.set("csb_leakage", mechanism_leakage(pop, post_csb, protected_nodes));

    Dataset pop_yz = pop.select_columns({1, 2});
    Dataset post_base(n_pop, 2);
    const TimeGrid coarse{100};
    for (int r = 0; r < n_pop; ++r) {
      const std::vector<double> row(pop_yz.row(r), pop_yz.row(r) + 2);
      std::vector<double> out = baseline_counterfactual(baseline, row, 0, cfg.do_value, coarse);
      post_base.at(r, 0) = out[0];
      post_base.at(r, 1) = out[1];
    }
    rep.set("baseline_leakage", mechanism_leakage(pop_yz, post_base, std::set<int>{1}));
  }

  // Figure data: factual abduction and counterfactual trajectories.
  if (!cfg.io.out_dir.empty()) {
    CounterfactualResult full =
        hybrid_counterfactual_full(model, x_fact, do_y, grid, cfg.sigma, master.derive(10).key());
    Trajectory abduct(3, grid), predict(3, grid);
    for (int k = 0; k <= grid.n_steps; ++k)
      for (int j = 0; j < 3; ++j) {
        abduct.at(k)[j] = full.abduction[j][k];
        predict.at(k)[j] = full.prediction[j][k];
      }
    std::filesystem::create_directories(cfg.io.out_dir);
    write_trajectory_csv(abduct, cfg.io.out_dir + "/abduction.csv", scm.dag.node_names);
    write_trajectory_csv(predict, cfg.io.out_dir + "/counterfactual.csv", scm.dag.node_names);
    maybe_write_csv(cfg.io.out_dir, "counterfactual_endpoints.csv", cf);
  }

  rep.wall_time_s = now_seconds() - t0;
  finalize(rep, cfg.io.out_dir);
  return rep;
}

// ---- misspecified graph ------------------------------------------------------------

ExperimentReport run_misspecified(std::uint64_t seed, const MisspecifiedConfig& cfg) {
  const double t0 = now_seconds();
  const Rng master(seed);
  ExperimentReport rep;
  rep.name = "misspecified";
  rep.seed = seed;
  rep.config_hash = hash_json(json{{"n_data", cfg.n_data},
                                   {"n_test", cfg.n_test},
                                   {"n_gen", cfg.n_gen},
                                   {"sigma", cfg.sigma},
                                   {"do_value", cfg.do_value},
                                   {"grid_steps", cfg.grid_steps}});

  Scm scm = confounder_scm();
  Dataset data1 = sample(scm, cfg.n_data, master.derive(1).key());
  Dataset data0 = gaussian_noise_dataset(cfg.n_data, 3, master.derive(2).key(), scm.dag.node_names);
  rep.input_hash = hash_dataset(data1);

  FitConfig fit_cfg;
  fit_cfg.train.solver = SolverKind::Gaussian;
  CsbModel correct =
      fit(scm.dag, data0, data1, DiffusionSchedule{cfg.sigma}, fit_cfg, master.derive(3).key());

  // Reversed edge: the model believes Y -> X -> Z while the data came from
  // the fork.
  Dag wrong_dag(3, {{1, 0}, {0, 2}}, {"X", "Y", "Z"});
  CsbModel wrong =
      fit(wrong_dag, data0, data1, DiffusionSchedule{cfg.sigma}, fit_cfg, master.derive(4).key());

  const TimeGrid grid{cfg.grid_steps};
  const std::map<int, double> do_y = {{1, cfg.do_value}};

  // Population-mean |dZ| over fresh factual rows.
  Dataset pop = sample(scm, cfg.n_test, master.derive(5).key());
  double wrong_sum = 0.0, correct_sum = 0.0;
  for (int r = 0; r < cfg.n_test; ++r) {
    const std::vector<double> row(pop.row(r), pop.row(r) + 3);
    Dataset cw = counterfactual_batch(wrong, row, do_y, grid, cfg.sigma, cfg.n_gen,
                                      master.derive(6, static_cast<std::uint64_t>(r)).key());
    Dataset cc = counterfactual_batch(correct, row, do_y, grid, cfg.sigma, cfg.n_gen,
                                      master.derive(7, static_cast<std::uint64_t>(r)).key());
    wrong_sum += std::abs(cw.column_mean(2) - row[2]);
    correct_sum += std::abs(cc.column_mean(2) - row[2]);
  }
  const double wrong_mean = wrong_sum / cfg.n_test;
  const double correct_mean = correct_sum / cfg.n_test;
  rep.set("wrong_delta_z", wrong_mean);
  rep.set("correct_delta_z", correct_mean);
  rep.set("error_ratio", wrong_mean / std::max(correct_mean, 1e-12));

  // The tail sample, for reference alongside the population numbers.
  std::size_t fact_row = 0;
  for (std::size_t r = 1; r < data1.rows; ++r)
    if (std::abs(data1.at(r, 0) + 4.0) < std::abs(data1.at(fact_row, 0) + 4.0)) fact_row = r;
  const std::vector<double> x_fact = {data1.at(fact_row, 0), data1.at(fact_row, 1),
                                      data1.at(fact_row, 2)};
  Dataset tw = counterfactual_batch(wrong, x_fact, do_y, grid, cfg.sigma, cfg.n_gen,
                                    master.derive(8).key());
  Dataset tc = counterfactual_batch(correct, x_fact, do_y, grid, cfg.sigma, cfg.n_gen,
                                    master.derive(9).key());
  rep.set("tail_wrong_delta_z", std::abs(tw.column_mean(2) - x_fact[2]));
  rep.set("tail_correct_delta_z", std::abs(tc.column_mean(2) - x_fact[2]));
  rep.set("tail_wrong_x", tw.column_mean(0));

  rep.wall_time_s = now_seconds() - t0;
  finalize(rep, cfg.io.out_dir);
  return rep;
}

// ---- tunneling -----------------------------------------------------------------------

namespace {

// Two-moon point in the plane; mode A is the upper arc, mode B the lower.
// The stimulated population carries much wider per-point fuzz than the
// thin control arcs, so transport has to manufacture conditional spread,
// not just translate the pair.
void moon_point(const TunnelingConfig& cfg, bool stimulated, bool mode_a, double theta,
                double noise1, double noise2, double* xy) {
  const double r = cfg.moon_radius * (stimulated ? cfg.stimulated_scale : 1.0);
  const double fuzz = stimulated ? cfg.target_noise : cfg.moon_noise;
  if (mode_a) {
    xy[0] = r * std::cos(theta);
    xy[1] = r * std::sin(theta);
  } else {
    xy[0] = r * (1.0 - std::cos(theta));
    xy[1] = r * (0.5 - std::sin(theta));
  }
  xy[0] += fuzz * noise1;
  xy[1] += fuzz * noise2;
}

std::vector<double> tunneling_rotation(const TunnelingConfig& cfg, std::uint64_t seed) {
  return random_orthonormal_columns(cfg.dim, cfg.dim, seed ^ 0x5eedu);
}

}  // namespace

Dataset sample_moons_embedded(const TunnelingConfig& cfg, std::size_t n, bool shifted,
                              std::uint64_t seed) {
  const int D = cfg.dim;
  const std::vector<double> rot = tunneling_rotation(cfg, cfg.embed_seed);
  Dataset out(n, D);
  const Rng master(seed);
  par::parallel_for(n, [&](std::size_t r) {
    Rng rng = master.derive(0x3007u, r);
    const bool mode_a = rng.uniform01() < (shifted ? 0.5 : cfg.source_mode_a_weight);
    const double theta = rng.uniform01() * 3.141592653589793;
    double plane[2];
    moon_point(cfg, shifted, mode_a, theta, rng.normal(), rng.normal(), plane);
    if (shifted) {
      plane[0] += cfg.gap_shift_x;
      plane[1] += cfg.gap_shift_y;
    }
    std::vector<double> latent(D, 0.0);
    latent[0] = plane[0];
    latent[1] = plane[1];
    const double fuzz = shifted ? cfg.target_noise : cfg.moon_noise;
    for (int j = 2; j < D; ++j) latent[j] = fuzz * rng.normal();
    for (int i = 0; i < D; ++i) {
      double s = 0.0;
      for (int j = 0; j < D; ++j) s += rot[static_cast<std::size_t>(i) * D + j] * latent[j];
      out.at(r, i) = s;
    }
  });
  return out;
}

double moon_mode_fraction(const Dataset& ambient, const TunnelingConfig& cfg, bool shifted) {
  const int D = cfg.dim;
  const std::vector<double> rot = tunneling_rotation(cfg, cfg.embed_seed);
  int in_a = 0;
  const int arc = 64;
  for (std::size_t r = 0; r < ambient.rows; ++r) {
    // Rotate back: latent = R^T x (columns 0 and 1 of R span the moon plane).
    double px = 0, py = 0;
    for (int j = 0; j < D; ++j) {
      px += rot[static_cast<std::size_t>(j) * D + 0] * ambient.at(r, j);
      py += rot[static_cast<std::size_t>(j) * D + 1] * ambient.at(r, j);
    }
    if (shifted) {
      px -= cfg.gap_shift_x;
      py -= cfg.gap_shift_y;
    }
    double best_a = 1e300, best_b = 1e300;
    for (int q = 0; q <= arc; ++q) {
      const double theta = 3.141592653589793 * q / arc;
      double pa[2], pb[2];
      moon_point(cfg, shifted, true, theta, 0, 0, pa);
      moon_point(cfg, shifted, false, theta, 0, 0, pb);
      best_a = std::min(best_a, (px - pa[0]) * (px - pa[0]) + (py - pa[1]) * (py - pa[1]));
      best_b = std::min(best_b, (px - pb[0]) * (px - pb[0]) + (py - pb[1]) * (py - pb[1]));
    }
    if (best_a <= best_b) ++in_a;
  }
  return static_cast<double>(in_a) / static_cast<double>(ambient.rows);
}

ExperimentReport run_tunneling(std::uint64_t seed, const TunnelingConfig& cfg_in) {
  const double t0 = now_seconds();
  const Rng master(seed);
  ExperimentReport rep;
  rep.name = "tunneling";
  rep.seed = seed;

  TunnelingConfig cfg = cfg_in;
  cfg.embed_seed = master.derive(1).key();
  rep.config_hash = hash_json(json{{"dim", cfg.dim},
                                   {"n_train", cfg.n_train},
                                   {"n_eval", cfg.n_eval},
                                   {"sigma_csb", cfg.sigma_csb},
                                   {"sigma_sweep", cfg.sigma_sweep},
                                   {"steps", cfg.steps},
                                   {"batch", cfg.batch},
                                   {"hidden", cfg.hidden},
                                   {"lr", cfg.lr},
                                   {"grid_steps", cfg.grid_steps},
                                   {"moon_radius", cfg.moon_radius},
                                   {"moon_noise", cfg.moon_noise},
                                   {"target_noise", cfg.target_noise},
                                   {"source_mode_a_weight", cfg.source_mode_a_weight},
                                   {"stimulated_scale", cfg.stimulated_scale},
                                   {"gap_shift_x", cfg.gap_shift_x},
                                   {"gap_shift_y", cfg.gap_shift_y}});

  Dataset source = sample_moons_embedded(cfg, cfg.n_train, false, master.derive(2).key());
  Dataset target = sample_moons_embedded(cfg, cfg.n_train, true, master.derive(3).key());
  Dataset source_eval = sample_moons_embedded(cfg, cfg.n_eval, false, master.derive(4).key());
  Dataset target_eval = sample_moons_embedded(cfg, cfg.n_eval, true, master.derive(5).key());
  rep.input_hash = hash_dataset(target);

  const TimeGrid grid{cfg.grid_steps};
  double ode_coverage = 0, csb_coverage = 0, ode_frac = 0, csb_frac = 0;

  for (std::size_t si = 0; si < cfg.sigma_sweep.size(); ++si) {
    const double sig = cfg.sigma_sweep[si];
    JointTrainConfig jcfg;
    jcfg.steps = cfg.steps;
    jcfg.batch = cfg.batch;
    jcfg.hidden = cfg.hidden;
    jcfg.lr = cfg.lr;
    jcfg.seed = master.derive(6, si).key();
    const double t_train0 = now_seconds();
    JointBridge jb = train_joint_bridge(source, target, sig, jcfg);
    const double train_s = now_seconds() - t_train0;
    Dataset gen = joint_generate(jb, source_eval, sig, grid, master.derive(7, si).key());
    const double cov = support_coverage(gen, target_eval);
    const double frac = moon_mode_fraction(gen, cfg, true);

    const std::string tag = "sweep_" + std::to_string(si);
    rep.set(tag + "_sigma", sig);
    rep.set(tag + "_coverage", cov);
    rep.set(tag + "_mode_a_fraction", frac);
    rep.set(tag + "_train_seconds", train_s);

    if (sig == 0.0) {
      ode_coverage = cov;
      ode_frac = frac;
      maybe_write_csv(cfg.io.out_dir, "generated_ode.csv", gen);
    }
    if (sig == cfg.sigma_csb) {
      csb_coverage = cov;
      csb_frac = frac;
      maybe_write_csv(cfg.io.out_dir, "generated_csb.csv", gen);
    }
  }

  const double target_frac = moon_mode_fraction(target_eval, cfg, true);
  rep.set("target_mode_a_fraction", target_frac);
  rep.set("ode_coverage", ode_coverage);
  rep.set("csb_coverage", csb_coverage);
  rep.set("ode_mode_imbalance", std::abs(ode_frac - target_frac));
  rep.set("csb_mode_imbalance", std::abs(csb_frac - target_frac));

  if (!cfg.io.out_dir.empty()) {
    maybe_write_csv(cfg.io.out_dir, "target_eval.csv", target_eval);
    const std::vector<double> rot = tunneling_rotation(cfg, cfg.embed_seed);
    Dataset rotds(cfg.dim, cfg.dim);
    rotds.values = rot;
    maybe_write_csv(cfg.io.out_dir, "projection_matrix.csv", rotds);
  }

  rep.wall_time_s = now_seconds() - t0;
  finalize(rep, cfg.io.out_dir);
  return rep;
}

// ---- 1000-D benchmark ---------------------------------------------------------------

ExperimentReport run_benchmark_1000d(std::uint64_t seed, const Bench1000Config& cfg) {
  const double t0 = now_seconds();
  const Rng master(seed);
  ExperimentReport rep;
  rep.name = "bench1000";
  rep.seed = seed;
  rep.config_hash = hash_json(json{{"dim", cfg.dim},
                                   {"n_rows", cfg.n_rows},
                                   {"n_infer", cfg.n_infer},
                                   {"sigma_csb", cfg.sigma_csb},
                                   {"node_steps", cfg.node_steps},
                                   {"node_batch", cfg.node_batch},
                                   {"node_hidden", cfg.node_hidden},
                                   {"path_grid_steps", cfg.path_grid_steps},
                                   {"grid_steps", cfg.grid_steps}});

  Scm scm = markov_chain_scm(cfg.dim);
  Dataset data1 = sample(scm, cfg.n_rows, master.derive(1).key());
  Dataset data0 = gaussian_noise_dataset(cfg.n_rows, cfg.dim, master.derive(2).key());
  Dataset target_eval = sample(scm, cfg.n_infer, master.derive(3).key());
  Dataset sources = gaussian_noise_dataset(cfg.n_infer, cfg.dim, master.derive(4).key());
  rep.input_hash = hash_dataset(data1);

  FitConfig fit_cfg;
  fit_cfg.train.solver = SolverKind::Neural;
  fit_cfg.train.steps = cfg.node_steps;
  fit_cfg.train.batch = cfg.node_batch;
  fit_cfg.train.hidden = cfg.node_hidden;
  fit_cfg.path_grid_steps = cfg.path_grid_steps;

  const TimeGrid grid{cfg.grid_steps};

  double t_fit = now_seconds();
  CsbModel ode = fit(scm.dag, data0, data1, DiffusionSchedule{0.0}, fit_cfg, master.derive(5).key());
  const double ode_train_s = now_seconds() - t_fit;
  double t_inf = now_seconds();
  Dataset ode_gen = transport(ode, sources, 0.0, grid, master.derive(6).key());
  const double ode_infer_s = now_seconds() - t_inf;

  t_fit = now_seconds();
  CsbModel csb =
      fit(scm.dag, data0, data1, DiffusionSchedule{cfg.sigma_csb}, fit_cfg, master.derive(5).key());
  const double csb_train_s = now_seconds() - t_fit;
  t_inf = now_seconds();
  Dataset csb_gen = transport(csb, sources, cfg.sigma_csb, grid, master.derive(6).key());
  const double csb_infer_s = now_seconds() - t_inf;

  rep.set("ode_train_seconds", ode_train_s);
  rep.set("csb_train_seconds", csb_train_s);
  rep.set("ode_infer_seconds", ode_infer_s);
  rep.set("csb_infer_seconds", csb_infer_s);
  rep.set("train_time_ratio", csb_train_s / ode_train_s);
  rep.set("infer_time_ratio", csb_infer_s / ode_infer_s);
  rep.set("ode_coverage", support_coverage(ode_gen, target_eval));
  rep.set("csb_coverage", support_coverage(csb_gen, target_eval));

  // Mechanism leakage under do(x_mid): protected = the nodes before mid on
  // the chain (non-descendants).
  {
    const int mid = cfg.dim / 2;
    const int n_pop = 32;
    Dataset pop = sample(scm, n_pop, master.derive(7).key());
    std::set<int> protected_nodes;
    for (int j = 0; j < mid; ++j) protected_nodes.insert(j);
    const std::map<int, double> do_mid = {{mid, 2.0}};

    auto leak = [&](const CsbModel& m, double sig) {
      Dataset post(n_pop, cfg.dim);
      for (int r = 0; r < n_pop; ++r) {
        const std::vector<double> row(pop.row(r), pop.row(r) + cfg.dim);
        std::vector<double> out = hybrid_counterfactual(
            m, row, do_mid, grid, sig, master.derive(8, static_cast<std::uint64_t>(r)).key());
        for (int c = 0; c < cfg.dim; ++c) post.at(r, c) = out[c];
      }
      return mechanism_leakage(pop, post, protected_nodes);
    };
    rep.set("ode_leakage", leak(ode, 0.0));
    rep.set("csb_leakage", leak(csb, cfg.sigma_csb));
  }

  rep.wall_time_s = now_seconds() - t0;
  finalize(rep, cfg.io.out_dir);
  return rep;
}

// ---- full-rank audit -------------------------------------------------------------------

namespace {

// On-the-fly sin-tanh chain rows keyed by (seed, row): x0 ~ N(0,1), x1_i =
// sin(x0_i) + 0.5 tanh(x0_{i-1}) + eps, zero-padded at i = 0. Nothing is
// materialized, so the audit's memory stays O(batch * d).
struct ChainRows {
  int d;
  double noise_std;
  Rng master;

  void fill(std::size_t row, double* x0, double* x1) const {
    Rng r0 = master.derive(0xa0u, row);
    for (int i = 0; i < d; ++i) x0[i] = r0.normal();
    Rng r1 = master.derive(0xa1u, row);
    for (int i = 0; i < d; ++i) {
      const double left = i == 0 ? 0.0 : x0[i - 1];
      x1[i] = std::sin(x0[i]) + 0.5 * std::tanh(left) + noise_std * r1.normal();
    }
  }
};

struct AuditResult {
  double mse = 0;
  double seconds = 0;
  std::size_t params = 0;
};

AuditResult train_conv_audit(const ChainRows& rows, const FullrankConfig& cfg, int d,
                             std::uint64_t seed) {
  const double t0 = now_seconds();
  Conv1dDrift::Config cc;
  cc.left_context = 1;
  cc.in_channels = 1;
  cc.time_channel = false;
  cc.hidden = cfg.conv_hidden;
  Conv1dDrift net(cc);
  Rng rng(seed);
  net.init(rng);
  SgdMomentum opt(cfg.lr_conv, 0.9, net.param_count());

  const std::size_t B = cfg.batch;
  const std::size_t dd = static_cast<std::size_t>(d);
  Conv1dDrift::Workspace ws = net.make_workspace(B, dd);
  std::vector<double> x0(B * dd), x1(B * dd), out(B * dd), dy(B * dd), grads(net.param_count());
  for (int step = 0; step < cfg.steps; ++step) {
    Rng srng = rng.derive(0x51u, static_cast<std::uint64_t>(step));
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t row =
          static_cast<std::size_t>(srng.derive(b).uniform01() * cfg.n_train) % cfg.n_train;
      rows.fill(row, x0.data() + b * dd, x1.data() + b * dd);
    }
    net.forward(x0.data(), nullptr, B, dd, ws, out.data());
    double loss = 0;
    const double inv = 1.0 / static_cast<double>(B * dd);
    for (std::size_t q = 0; q < out.size(); ++q) {
      const double e = out[q] - x1[q];
      loss += e * e * inv;
      dy[q] = 2.0 * e * inv;
    }
    if (!std::isfinite(loss)) throw NonFiniteLoss("fullrank conv training diverged");
    net.backward(ws, dy.data(), grads.data());
    opt.step(net.params(), grads);
  }

  double mse = 0;
  const std::size_t VB = 16;
  Conv1dDrift::Workspace vws = net.make_workspace(VB, dd);
  std::vector<double> vx0(VB * dd), vx1(VB * dd), vout(VB * dd);
  std::size_t counted = 0;
  for (std::size_t start = 0; start + VB <= cfg.n_val; start += VB) {
    for (std::size_t b = 0; b < VB; ++b)
      rows.fill(cfg.n_train + start + b, vx0.data() + b * dd, vx1.data() + b * dd);
    net.forward(vx0.data(), nullptr, VB, dd, vws, vout.data());
    for (std::size_t q = 0; q < VB * dd; ++q) {
      const double e = vout[q] - vx1[q];
      mse += e * e;
    }
    counted += VB * dd;
  }
  return {mse / static_cast<double>(counted), now_seconds() - t0, net.param_count()};
}

AuditResult train_mlp_audit(const ChainRows& rows, const FullrankConfig& cfg, int d,
                            std::uint64_t seed) {
  const double t0 = now_seconds();
  const std::size_t dd = static_cast<std::size_t>(d);
  Mlp net({dd, cfg.mlp_hidden, dd});
  Rng rng(seed);
  net.init(rng);
  SgdMomentum opt(cfg.lr_mlp, 0.9, net.param_count());

  const std::size_t B = cfg.batch;
  Mlp::Workspace ws = net.make_workspace(B);
  std::vector<double> x0(B * dd), x1(B * dd), out(B * dd), dy(B * dd), grads(net.param_count());
  for (int step = 0; step < cfg.steps; ++step) {
    Rng srng = rng.derive(0x52u, static_cast<std::uint64_t>(step));
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t row =
          static_cast<std::size_t>(srng.derive(b).uniform01() * cfg.n_train) % cfg.n_train;
      rows.fill(row, x0.data() + b * dd, x1.data() + b * dd);
    }
    net.forward(x0.data(), B, ws, out.data());
    double loss = 0;
    // Mean over the batch, sum over coordinates: keeps the monolithic net's
    // per-weight gradient scale d-independent under the shared optimizer.
    const double inv = 1.0 / static_cast<double>(B);
    for (std::size_t q = 0; q < out.size(); ++q) {
      const double e = out[q] - x1[q];
      loss += e * e * inv;
      dy[q] = 2.0 * e * inv;
    }
    if (!std::isfinite(loss)) throw NonFiniteLoss("fullrank mlp training diverged");
    net.backward(ws, dy.data(), grads.data());
    opt.step(net.params(), grads);
  }

  double mse = 0;
  const std::size_t VB = 16;
  Mlp::Workspace vws = net.make_workspace(VB);
  std::vector<double> vx0(VB * dd), vx1(VB * dd), vout(VB * dd);
  std::size_t counted = 0;
  for (std::size_t start = 0; start + VB <= cfg.n_val; start += VB) {
    for (std::size_t b = 0; b < VB; ++b)
      rows.fill(cfg.n_train + start + b, vx0.data() + b * dd, vx1.data() + b * dd);
    net.forward(vx0.data(), VB, vws, vout.data());
    for (std::size_t q = 0; q < VB * dd; ++q) {
      const double e = vout[q] - vx1[q];
      mse += e * e;
    }
    counted += VB * dd;
  }
  return {mse / static_cast<double>(counted), now_seconds() - t0, net.param_count()};
}

}  // namespace

ExperimentReport run_fullrank_audit(std::uint64_t seed, const FullrankConfig& cfg) {
  const double t0 = now_seconds();
  const Rng master(seed);
  ExperimentReport rep;
  rep.name = "fullrank";
  rep.seed = seed;
  rep.config_hash = hash_json(json{{"dim", cfg.dim},
                                   {"n_train", cfg.n_train},
                                   {"n_val", cfg.n_val},
                                   {"noise_std", cfg.noise_std},
                                   {"steps", cfg.steps},
                                   {"batch", cfg.batch},
                                   {"lr_conv", cfg.lr_conv},
                                   {"lr_mlp", cfg.lr_mlp},
                                   {"mlp_hidden", cfg.mlp_hidden},
                                   {"conv_hidden", cfg.conv_hidden}});

  ChainRows rows{cfg.dim, cfg.noise_std, master.derive(1)};
  rep.input_hash = master.derive(1).key();

  AuditResult conv = train_conv_audit(rows, cfg, cfg.dim, master.derive(2).key());
  AuditResult mlp = train_mlp_audit(rows, cfg, cfg.dim, master.derive(3).key());

  rep.set("decomposed_mse", conv.mse);
  rep.set("decomposed_seconds", conv.seconds);
  rep.set("decomposed_params", static_cast<double>(conv.params));
  rep.set("mlp_mse", mlp.mse);
  rep.set("mlp_seconds", mlp.seconds);
  rep.set("mlp_params", static_cast<double>(mlp.params));
  rep.set("param_ratio", static_cast<double>(mlp.params) / static_cast<double>(conv.params));

  if (cfg.run_small_check) {
    const int small_d = std::max(8, cfg.dim / 10);
    ChainRows small_rows{small_d, cfg.noise_std, master.derive(4)};
    AuditResult conv_small = train_conv_audit(small_rows, cfg, small_d, master.derive(5).key());
    rep.set("decomposed_mse_small_d", conv_small.mse);
    rep.set("decomposed_params_small_d", static_cast<double>(conv_small.params));
    rep.set("small_d", static_cast<double>(small_d));
  }

  rep.wall_time_s = now_seconds() - t0;
  finalize(rep, cfg.io.out_dir);
  return rep;
}

// ---- manifold recovery ----------------------------------------------------------------

ExperimentReport run_manifold_recovery(std::uint64_t seed, const ManifoldConfig& cfg) {
  const double t0 = now_seconds();
  const Rng master(seed);
  ExperimentReport rep;
  rep.name = "manifold";
  rep.seed = seed;
  rep.config_hash = hash_json(json{{"dim", cfg.dim},
                                   {"n_train", cfg.n_train},
                                   {"n_eval", cfg.n_eval},
                                   {"sigma", cfg.sigma},
                                   {"steps", cfg.steps},
                                   {"batch", cfg.batch},
                                   {"hidden", cfg.hidden},
                                   {"lr", cfg.lr},
                                   {"grid_steps", cfg.grid_steps},
                                   {"ambient_noise", cfg.ambient_noise},
                                   {"calib_d_ref", cfg.calib_d_ref},
                                   {"calib_trials", cfg.calib_trials}});

  const int d = cfg.dim;
  const std::vector<double> embed = random_orthonormal_columns(d, 2, master.derive(1).key());

  auto make_points = [&](std::size_t n, std::uint64_t s, Dataset& ambient, Dataset& latent,
                         bool target) {
    ambient = Dataset(n, d);
    latent = Dataset(n, 2);
    const Rng m2(s);
    par::parallel_for(n, [&](std::size_t r) {
      Rng rng = m2.derive(r);
      const double theta = rng.uniform01() * 6.283185307179586;
      double c[2];
      if (!target) {
        const double rad = 1.0 + 0.02 * rng.normal();
        c[0] = rad * std::cos(theta);
        c[1] = rad * std::sin(theta);
      } else {
        const double rad = 2.0 + 0.02 * rng.normal();
        c[0] = 1.5 + rad * std::cos(theta);
        c[1] = rad * std::sin(theta);
      }
      latent.at(r, 0) = c[0];
      latent.at(r, 1) = c[1];
      for (int i = 0; i < d; ++i)
        ambient.at(r, i) = embed[static_cast<std::size_t>(i) * 2] * c[0] +
                           embed[static_cast<std::size_t>(i) * 2 + 1] * c[1] +
                           cfg.ambient_noise * rng.normal();
    });
  };

  Dataset src_amb, src_lat, tgt_amb, tgt_lat, eval_amb, eval_lat;
  make_points(cfg.n_train, master.derive(2).key(), src_amb, src_lat, false);
  make_points(cfg.n_train, master.derive(3).key(), tgt_amb, tgt_lat, true);
  make_points(cfg.n_eval, master.derive(4).key(), eval_amb, eval_lat, false);
  rep.input_hash = hash_dataset(tgt_amb);

  JointTrainConfig jcfg;
  jcfg.steps = cfg.steps;
  jcfg.batch = cfg.batch;
  jcfg.hidden = cfg.hidden;
  jcfg.lr = cfg.lr;
  jcfg.seed = master.derive(5).key();
  const double t_fit0 = now_seconds();
  JointBridge jb = train_joint_bridge(src_amb, tgt_amb, cfg.sigma, jcfg);
  Dataset gen =
      joint_generate(jb, eval_amb, cfg.sigma, TimeGrid{cfg.grid_steps}, master.derive(6).key());
  const double csb_seconds = now_seconds() - t_fit0;
  rep.set("csb_seconds", csb_seconds);

  // Project back to the latent plane and audit the recovered circle.
  Dataset recovered(gen.rows, 2);
  for (std::size_t r = 0; r < gen.rows; ++r) {
    double px = 0, py = 0;
    for (int i = 0; i < d; ++i) {
      px += embed[static_cast<std::size_t>(i) * 2] * gen.at(r, i);
      py += embed[static_cast<std::size_t>(i) * 2 + 1] * gen.at(r, i);
    }
    recovered.at(r, 0) = px;
    recovered.at(r, 1) = py;
  }
  const double cx = recovered.column_mean(0), cy = recovered.column_mean(1);
  double rad_sum = 0, rad_sq = 0;
  for (std::size_t r = 0; r < recovered.rows; ++r) {
    const double rr = std::hypot(recovered.at(r, 0) - cx, recovered.at(r, 1) - cy);
    rad_sum += rr;
    rad_sq += rr * rr;
  }
  const double rad_mean = rad_sum / static_cast<double>(recovered.rows);
  const double rad_std =
      std::sqrt(std::max(0.0, rad_sq / static_cast<double>(recovered.rows) - rad_mean * rad_mean));
  rep.set("radius_mean", rad_mean);
  rep.set("radius_rel_std", rad_std / rad_mean);
  rep.set("center_x", cx);
  rep.set("center_y", cy);

  // Latent recovery MSE against the angle-paired ground truth.
  Dataset truth(gen.rows, 2);
  for (std::size_t r = 0; r < gen.rows; ++r) {
    const double theta = std::atan2(eval_lat.at(r, 1), eval_lat.at(r, 0));
    truth.at(r, 0) = 1.5 + 2.0 * std::cos(theta);
    truth.at(r, 1) = 2.0 * std::sin(theta);
  }
  rep.set("latent_recovery_mse", recovery_mse(recovered, truth));

  // Dense-baseline calibration on this machine, single-threaded.
  CubicCostModel calib = calibrate(cfg.calib_d_ref, cfg.calib_trials, master.derive(7).key());
  rep.set("t_ref_seconds", calib.t_ref_seconds);
  rep.set("t_ref_reference_seconds", 0.000251);  // published RTX-3090 anchor
  rep.set("baseline_extrapolated_same_d_seconds", extrapolate(calib, d));
  const double headline = extrapolate(calib, 1e5);
  rep.set("baseline_extrapolated_1e5_seconds", headline);
  rep.set("speedup_vs_dense_1e5", headline / csb_seconds);
  rep.set("speedup_vs_dense_same_d", extrapolate(calib, d) / csb_seconds);

  if (!cfg.io.out_dir.empty()) {
    maybe_write_csv(cfg.io.out_dir, "recovered_latent.csv", recovered);
    maybe_write_csv(cfg.io.out_dir, "truth_latent.csv", truth);
    maybe_write_csv(cfg.io.out_dir, "source_latent.csv", eval_lat);
    Dataset emb(d, 2);
    emb.values = embed;
    maybe_write_csv(cfg.io.out_dir, "embedding.csv", emb);
  }

  rep.wall_time_s = now_seconds() - t0;
  finalize(rep, cfg.io.out_dir);
  return rep;
}

}  // namespace csb
