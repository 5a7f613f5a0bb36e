// csb: fit factorized causal bridges, run counterfactuals, calibrate the
// dense-solver baseline, and reproduce the benchmark suite.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "csb/baseline_extrapolation.hpp"
#include "csb/csf.hpp"
#include "csb/experiments.hpp"
#include "csb/parallel.hpp"
#include "json.hpp"

using namespace csb;
using nlohmann::json;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  return json::parse(in);
}

Dataset read_dataset(const std::string& path) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".bin") return read_binary(path);
  return read_csv(path);
}

std::map<std::string, double> parse_do_expression(const std::string& expr) {
  std::map<std::string, double> out;
  std::stringstream ss(expr);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw IoError("bad do-expression '" + item + "' (expected NAME=FLOAT)");
    std::string name = item.substr(0, eq);
    name.erase(0, name.find_first_not_of(" \t"));
    name.erase(name.find_last_not_of(" \t") + 1);
    out[name] = std::stod(item.substr(eq + 1));
  }
  return out;
}

int cmd_sample(const std::string& scm_path, std::size_t n, std::uint64_t seed,
               const std::string& out_path, bool binary) {
  Scm scm = scm_from_json_file(scm_path);
  Dataset data = sample(scm, n, seed);
  if (binary)
    write_binary(data, out_path);
  else
    write_csv(data, out_path);
  std::printf("sampled %zu rows x %zu cols -> %s\n", data.rows, data.cols, out_path.c_str());
  return 0;
}

int cmd_fit(const std::string& scm_path, const std::string& source_path,
            const std::string& target_path, const std::string& out_dir, const std::string& solver,
            const std::string& config_path, double sigma, int steps, int batch, double lr,
            std::uint64_t seed) {
  Scm scm = scm_from_json_file(scm_path);
  Dataset data1 = read_dataset(target_path);
  Dataset data0 = source_path.empty()
                      ? gaussian_noise_dataset(data1.rows, data1.cols, seed ^ 0x5001u,
                                               scm.dag.node_names)
                      : read_dataset(source_path);

  // Training config file: {epochs, batch, lr, sigma, schedule, seed};
  // explicit flags take precedence over file values at their defaults.
  DiffusionSchedule schedule{sigma};
  if (!config_path.empty()) {
    const json tc = load_config(config_path);
    steps = tc.value("epochs", tc.value("steps", steps));
    batch = tc.value("batch", batch);
    lr = tc.value("lr", lr);
    schedule.sigma = tc.value("sigma", sigma);
    if (tc.value("schedule", std::string("constant")) == "bridge_scaled")
      schedule.kind = DiffusionSchedule::Kind::BridgeScaled;
    seed = tc.value("seed", seed);
  }

  FitConfig cfg;
  cfg.train.steps = steps;
  cfg.train.batch = batch;
  cfg.train.lr = lr;
  if (solver == "gaussian")
    cfg.train.solver = SolverKind::Gaussian;
  else if (solver == "neural")
    cfg.train.solver = SolverKind::Neural;
  else
    cfg.train.solver = SolverKind::Auto;

  CsbModel model = fit(scm.dag, data0, data1, schedule, cfg, seed);
  save_model(model, out_dir);
  std::printf("fitted %d bridges in %.2fs across %zu layers -> %s\n", model.dag.node_count,
              model.meta.wall_seconds, model.layers.size(), out_dir.c_str());
  return 0;
}

int cmd_counterfactual(const std::string& model_dir, const std::string& fact_path,
                       const std::string& do_expr, double sigma, int steps, std::uint64_t seed,
                       const std::string& out_path) {
  CsbModel model = load_model(model_dir);
  Dataset fact = read_dataset(fact_path);
  if (fact.rows < 1) throw IoError("factual file has no rows");

  std::map<int, double> assignments;
  for (const auto& [name, value] : parse_do_expression(do_expr))
    assignments[model.dag.index_of(name)] = value;

  const TimeGrid grid{steps};
  std::vector<double> row(fact.row(0), fact.row(0) + fact.cols);
  std::vector<double> cf = hybrid_counterfactual(model, row, assignments, grid, sigma, seed);

  Dataset out(1, cf.size());
  out.names = model.dag.node_names;
  for (std::size_t j = 0; j < cf.size(); ++j) out.at(0, j) = cf[j];
  if (!out_path.empty()) write_csv(out, out_path);
  for (std::size_t j = 0; j < cf.size(); ++j)
    std::printf("%s%s = %.6g\n", model.dag.name_of(static_cast<int>(j)).c_str(),
                assignments.count(static_cast<int>(j)) ? " (do)" : "", cf[j]);
  return 0;
}

int cmd_calibrate(int d_ref, int trials, int iters, const std::string& out_path) {
  CubicCostModel model = calibrate(d_ref, trials, 42, iters);
  json doc;
  doc["t_ref"] = model.t_ref_seconds;
  doc["d_ref"] = model.d_ref;
  doc["I"] = model.iterations;
  json extrap = json::array();
  for (double d : {1e3, 1e4, 1e5}) {
    const double s = extrapolate(model, d);
    extrap.push_back({{"d", d}, {"seconds", s}, {"human", human_duration(s)}});
  }
  doc["extrapolations"] = extrap;
  doc["memory_wall_bytes_1e5"] = memory_wall_estimate(1e5, 4);
  const std::string text = doc.dump(2);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << text << '\n';
  }
  std::printf("%s\n", text.c_str());
  return 0;
}

int cmd_experiment(const std::string& name, std::uint64_t seed, const std::string& config_path,
                   const std::string& out_dir, bool large, int jobs) {
  if (jobs > 0) par::set_threads(jobs);
  const json cfg_json = load_config(config_path);
  auto opt_int = [&](const char* key, int dflt) { return cfg_json.value(key, dflt); };
  auto opt_real = [&](const char* key, double dflt) { return cfg_json.value(key, dflt); };

  ExperimentReport rep;
  if (name == "confounder") {
    ConfounderConfig c;
    c.n_data = static_cast<std::size_t>(opt_int("n_data", static_cast<int>(c.n_data)));
    c.n_gen = opt_int("n_gen", c.n_gen);
    c.sigma = opt_real("sigma", c.sigma);
    c.do_value = opt_real("do_value", c.do_value);
    c.grid_steps = opt_int("grid_steps", c.grid_steps);
    c.baseline_steps = opt_int("baseline_steps", c.baseline_steps);
    c.io.out_dir = out_dir;
    rep = run_confounder(seed, c);
  } else if (name == "misspecified") {
    MisspecifiedConfig c;
    c.n_data = static_cast<std::size_t>(opt_int("n_data", static_cast<int>(c.n_data)));
    c.n_test = opt_int("n_test", c.n_test);
    c.sigma = opt_real("sigma", c.sigma);
    c.io.out_dir = out_dir;
    rep = run_misspecified(seed, c);
  } else if (name == "tunneling") {
    TunnelingConfig c;
    c.dim = opt_int("dim", c.dim);
    c.steps = opt_int("steps", c.steps);
    c.sigma_csb = opt_real("sigma_csb", c.sigma_csb);
    c.io.out_dir = out_dir;
    rep = run_tunneling(seed, c);
  } else if (name == "bench1000") {
    Bench1000Config c;
    c.dim = opt_int("dim", c.dim);
    c.node_steps = opt_int("node_steps", c.node_steps);
    c.io.out_dir = out_dir;
    rep = run_benchmark_1000d(seed, c);
  } else if (name == "fullrank") {
    FullrankConfig c;
    c.dim = opt_int("dim", large ? 100000 : c.dim);
    c.steps = opt_int("steps", c.steps);
    c.io.out_dir = out_dir;
    rep = run_fullrank_audit(seed, c);
  } else if (name == "manifold") {
    ManifoldConfig c;
    c.dim = opt_int("dim", large ? 100000 : c.dim);
    c.steps = opt_int("steps", c.steps);
    c.io.out_dir = out_dir;
    rep = run_manifold_recovery(seed, c);
  } else {
    std::fprintf(stderr, "unknown experiment '%s'\n", name.c_str());
    return 1;
  }

  std::printf("%s\n", rep.to_json().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"csb: causal Schrodinger bridges at desk scale"};
  app.require_subcommand(1);
  app.fallthrough(true);

  std::uint64_t seed = 42;
  app.add_option("--seed", seed, "master seed (default 42)")->capture_default_str();

  auto* s_cmd = app.add_subcommand("sample", "draw rows from an SCM spec");
  std::string s_scm, s_out = "sample.csv";
  std::size_t s_n = 1000;
  bool s_bin = false;
  s_cmd->add_option("--scm", s_scm, "SCM spec JSON")->required();
  s_cmd->add_option("-n,--rows", s_n, "rows to draw");
  s_cmd->add_option("--out", s_out, "output file (.csv or .bin)");
  s_cmd->add_flag("--binary", s_bin, "write the CSBD binary format");

  auto* f_cmd = app.add_subcommand("fit", "fit the factorized bridge");
  std::string f_scm, f_src, f_tgt, f_out = "model", f_solver = "auto", f_config;
  double f_sigma = 0.0, f_lr = 1e-3;
  int f_steps = 2000, f_batch = 256;
  f_cmd->add_option("--scm", f_scm, "SCM spec JSON (graph source)")->required();
  f_cmd->add_option("--config", f_config, "training config JSON {epochs,batch,lr,sigma,schedule,seed}");
  f_cmd->add_option("--source", f_src, "source dataset (default: standard normal)");
  f_cmd->add_option("--target", f_tgt, "target dataset")->required();
  f_cmd->add_option("--out", f_out, "model directory");
  f_cmd->add_option("--solver", f_solver, "auto|gaussian|neural");
  f_cmd->add_option("--sigma", f_sigma, "entropic level");
  f_cmd->add_option("--steps", f_steps, "training steps per node");
  f_cmd->add_option("--batch", f_batch, "batch size");
  f_cmd->add_option("--lr", f_lr, "learning rate");

  auto* c_cmd = app.add_subcommand("counterfactual", "abduct-act-predict on a factual row");
  std::string c_model, c_fact, c_do, c_out;
  double c_sigma = 0.0;
  int c_steps = 200;
  c_cmd->add_option("--model", c_model, "model directory")->required();
  c_cmd->add_option("--fact", c_fact, "factual row CSV")->required();
  c_cmd->add_option("--do", c_do, "comma-separated NAME=FLOAT assignments");
  c_cmd->add_option("--sigma", c_sigma, "generation sigma");
  c_cmd->add_option("--steps", c_steps, "time grid steps");
  c_cmd->add_option("--out", c_out, "write the counterfactual row CSV here");

  auto* b_cmd = app.add_subcommand("calibrate-baseline", "time the dense cubic baseline");
  int b_dref = 50, b_trials = 20, b_iters = 100;
  std::string b_out;
  b_cmd->add_option("--dref", b_dref, "calibration dimension");
  b_cmd->add_option("--trials", b_trials, "timing trials");
  b_cmd->add_option("--iters", b_iters, "iteration constant I");
  b_cmd->add_option("--out", b_out, "write the JSON here too");

  auto* e_cmd = app.add_subcommand("experiment", "run a benchmark reproduction");
  std::string e_name, e_config, e_out;
  bool e_large = false;
  int e_jobs = 0;
  e_cmd->add_option("name", e_name, "confounder|misspecified|tunneling|bench1000|fullrank|manifold")
      ->required();
  e_cmd->add_option("--config", e_config, "JSON config overrides");
  e_cmd->add_option("--out", e_out, "report directory");
  e_cmd->add_flag("--large", e_large, "full-scale dimensions (long-running)");
  e_cmd->add_option("--jobs", e_jobs, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::ofstream devnull;
    app.exit(e, devnull, devnull);
    std::cerr << "usage error: " << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }

  try {
    if (*s_cmd) return cmd_sample(s_scm, s_n, seed, s_out, s_bin);
    if (*f_cmd)
      return cmd_fit(f_scm, f_src, f_tgt, f_out, f_solver, f_config, f_sigma, f_steps, f_batch,
                     f_lr, seed);
    if (*c_cmd) return cmd_counterfactual(c_model, c_fact, c_do, c_sigma, c_steps, seed, c_out);
    if (*b_cmd) return cmd_calibrate(b_dref, b_trials, b_iters, b_out);
    if (*e_cmd) return cmd_experiment(e_name, seed, e_config, e_out, e_large, e_jobs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
