#include "csb/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "csb/parallel.hpp"
#include "json.hpp"

namespace csb {

double mechanism_leakage(const Dataset& pre, const Dataset& post,
                         const std::set<int>& protected_nodes) {
  if (pre.cols != post.cols) throw ShapeMismatch("mechanism_leakage: column mismatch");
  if (pre.rows != post.rows) throw ShapeMismatch("mechanism_leakage: row counts must match");
  if (protected_nodes.empty()) throw EmptyProtectedSet("mechanism_leakage: no protected nodes");
  double acc = 0.0;
  for (int c : protected_nodes) {
    if (c < 0 || static_cast<std::size_t>(c) >= pre.cols)
      throw UnknownNode("mechanism_leakage: bad protected node");
    const double sd = pre.column_std(c);
    if (sd <= 0.0) throw DegenerateTarget("mechanism_leakage: zero pre-std in protected column");
    acc += std::abs(post.column_mean(c) - pre.column_mean(c)) / sd;
  }
  return acc / static_cast<double>(protected_nodes.size());
}

double support_coverage(const Dataset& generated, const Dataset& target) {
  if (generated.cols != target.cols) throw ShapeMismatch("support_coverage: column mismatch");
  double acc = 0.0;
  for (std::size_t c = 0; c < target.cols; ++c) {
    const double st = target.column_std(c);
    if (st <= 0.0) throw DegenerateTarget("support_coverage: zero target std in column " +
                                          std::to_string(c));
    acc += generated.column_std(c) / st;
  }
  return acc / static_cast<double>(target.cols);
}

double recovery_mse(const Dataset& predicted, const Dataset& truth) {
  if (predicted.rows != truth.rows || predicted.cols != truth.cols)
    throw ShapeMismatch("recovery_mse: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    const double d = predicted.values[i] - truth.values[i];
    acc += d * d;
  }
  return acc / static_cast<double>(truth.values.size());
}

double transport_cost_l2(const Dataset& source, const Dataset& generated) {
  if (source.rows != generated.rows || source.cols != generated.cols)
    throw ShapeMismatch("transport_cost_l2: shape mismatch");
  double acc = 0.0;
  for (std::size_t r = 0; r < source.rows; ++r) {
    double d2 = 0.0;
    for (std::size_t c = 0; c < source.cols; ++c) {
      const double d = source.at(r, c) - generated.at(r, c);
      d2 += d * d;
    }
    acc += std::sqrt(d2);
  }
  return acc / static_cast<double>(source.rows);
}

// ---- ExperimentReport -------------------------------------------------------

using nlohmann::json;

void ExperimentReport::set(const std::string& key, double value) {
  if (!std::isfinite(value))
    throw NonFiniteState("ExperimentReport: non-finite metric '" + key + "'", -1);
  metrics[key] = value;
}

double ExperimentReport::get(const std::string& key) const {
  auto it = metrics.find(key);
  if (it == metrics.end()) throw UnknownNode("ExperimentReport: no metric '" + key + "'");
  return it->second;
}

std::string ExperimentReport::to_json() const {
  json doc;
  doc["name"] = name;
  doc["metrics"] = metrics;
  doc["wall_time_s"] = wall_time_s;
  doc["config_hash"] = config_hash;
  doc["input_hash"] = input_hash;
  doc["seed"] = seed;
  doc["hardware_note"] = hardware_note;
  return doc.dump(2);
}

void ExperimentReport::write(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/report.json");
    if (!out) throw IoError("cannot write '" + dir + "/report.json'");
    out << to_json() << '\n';
  }
  {
    std::ofstream out(dir + "/metrics.csv");
    if (!out) throw IoError("cannot write '" + dir + "/metrics.csv'");
    out << "name";
    for (const auto& [k, v] : metrics) {
      (void)v;
      out << ',' << k;
    }
    out << ",wall_time_s,seed\n" << name;
    char buf[40];
    for (const auto& [k, v] : metrics) {
      (void)k;
      std::snprintf(buf, sizeof(buf), "%.12g", v);
      out << ',' << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.6g", wall_time_s);
    out << ',' << buf << ',' << seed << '\n';
  }
}

std::string hardware_note_string() {
  std::string note = "threads=" + std::to_string(par::max_threads());
#if defined(__GNUC__)
  note += " gcc=" + std::to_string(__GNUC__) + "." + std::to_string(__GNUC_MINOR__);
#endif
#if defined(__x86_64__)
  note += " arch=x86_64";
#elif defined(__aarch64__)
  note += " arch=aarch64";
#endif
  return note;
}

}  // namespace csb
