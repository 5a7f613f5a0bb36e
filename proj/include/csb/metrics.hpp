#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "csb/graph_scm.hpp"

namespace csb {

/// Mean over protected coordinates of |mean(post) - mean(pre)| / std(pre).
/// Dimensionless; zero for structurally correct counterfactuals.
double mechanism_leakage(const Dataset& pre, const Dataset& post, const std::set<int>& protected_nodes);

/// Mean over dimensions of std(generated) / std(target). Values above 1
/// indicate over-dispersion and are permitted.
double support_coverage(const Dataset& generated, const Dataset& target);

/// Mean squared error over all entries.
double recovery_mse(const Dataset& predicted, const Dataset& truth);

/// Mean Euclidean distance between paired rows.
double transport_cost_l2(const Dataset& source, const Dataset& generated);

/// Metric bundle emitted by every benchmark run.
struct ExperimentReport {
  std::string name;
  std::map<std::string, double> metrics;
  double wall_time_s = 0.0;
  std::uint64_t config_hash = 0;
  std::uint64_t input_hash = 0;
  std::uint64_t seed = 0;
  std::string hardware_note;

  void set(const std::string& key, double value);
  double get(const std::string& key) const;  // throws UnknownNode if absent
  std::string to_json() const;

  /// Writes report.json and metrics.csv (one row per run) under dir.
  void write(const std::string& dir) const;
};

std::string hardware_note_string();

}  // namespace csb
