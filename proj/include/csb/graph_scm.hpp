#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "csb/errors.hpp"
#include "csb/rng.hpp"

namespace csb {

/// Directed acyclic graph over node indices. Construction validates index
/// ranges, self-edges and duplicates; acyclicity is checked on demand by
/// topological_layers.
struct Dag {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;  // (parent, child)
  std::vector<std::string> node_names;     // optional; empty or size node_count

  Dag() = default;
  Dag(int n, std::vector<std::pair<int, int>> e, std::vector<std::string> names = {});

  const std::vector<int>& parents(int node) const;
  const std::vector<int>& children(int node) const;
  int index_of(const std::string& name) const;  // UnknownNode if absent
  std::string name_of(int node) const;

 private:
  void build_adjacency();
  std::vector<std::vector<int>> parents_, children_;
};

enum class MechanismKind { Linear, SinTanhChain, Constant, CustomTable };

/// Structural assignment for one node. Linear: coefficients are one weight
/// per parent followed by an intercept. SinTanhChain: sin(self parent) +
/// 0.5*tanh(left parent), the left parent zero-padded when absent.
/// Constant: do-value in coefficients[0], zero noise. CustomTable:
/// nearest-grid lookup on (grid..., values...) over a single parent.
struct Mechanism {
  MechanismKind kind = MechanismKind::Linear;
  std::vector<double> coefficients;
  double noise_std = 0.0;

  static Mechanism linear(std::vector<double> weights_then_intercept, double noise_std);
  static Mechanism constant(double value);
  static Mechanism sin_tanh(double noise_std);

  void validate(int parent_count) const;
  double evaluate(const std::vector<double>& parent_values, double noise) const;
};

struct Scm {
  Dag dag;
  std::vector<Mechanism> mechanisms;

  Scm() = default;
  Scm(Dag d, std::vector<Mechanism> m);
};

/// n x d row-major sample matrix; columns follow the SCM node order.
struct Dataset {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::vector<std::string> names;

  Dataset() = default;
  Dataset(std::size_t n, std::size_t d) : rows(n), cols(d), values(n * d, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  const double* row(std::size_t r) const { return values.data() + r * cols; }
  double* row(std::size_t r) { return values.data() + r * cols; }

  Dataset select_columns(const std::vector<int>& idx) const;
  double column_mean(std::size_t c) const;
  double column_std(std::size_t c) const;  // population std
  void require_finite() const;
};

// ---- Operations ----------------------------------------------------------

/// Maximal topological layering: every node sits in the earliest layer
/// after all of its parents. Throws CycleDetected.
std::vector<std::vector<int>> topological_layers(const Dag& dag);

/// Flattened topological order (layers concatenated).
std::vector<int> topological_order(const Dag& dag);

/// Ancestral sampling; bit-reproducible for a given seed, and each
/// (row, node) stream derives from the seed independently so the result
/// does not depend on evaluation order.
Dataset sample(const Scm& scm, std::size_t n, std::uint64_t seed);

/// Graph mutilation: targets become constant(do-value) with incoming edges
/// removed; everything else is untouched.
Scm intervene(const Scm& scm, const std::map<int, double>& assignments);
Scm intervene(const Scm& scm, const std::map<std::string, double>& assignments);

/// Transitive closure of children, excluding the node itself.
std::set<int> descendants(const Dag& dag, int node);

// ---- SCM spec / dataset files --------------------------------------------

Scm scm_from_json_file(const std::string& path);
Scm scm_from_json_text(const std::string& text);
std::string scm_to_json_text(const Scm& scm);

void write_csv(const Dataset& data, const std::string& path);
Dataset read_csv(const std::string& path);

/// Little-endian f32 binary: 16-byte header {"CSBD", u32 n, u32 d, u32 pad}
/// followed by n*d row-major floats.
void write_binary(const Dataset& data, const std::string& path);
Dataset read_binary(const std::string& path);

// ---- Canned SCM families used across the experiments ----------------------

/// Fork Y <- X -> Z: X ~ N(0,1), Y = 2X + eps(0.3), Z = 2X + eps(0.3).
Scm confounder_scm();

/// Markov chain X_0 -> X_1 -> ... -> X_{d-1}: X_0 ~ N(0,1),
/// X_i = a*X_{i-1} + eps with stationary unit variance.
Scm markov_chain_scm(int d, double a = 0.7);

/// Two-layer chain over 2d nodes: roots X0_i ~ N(0,1) and children
/// X1_i = sin(X0_i) + 0.5*tanh(X0_{i-1}) + eps(noise_std), left-padded
/// with zero at i = 0.
Scm sin_tanh_chain_scm(int d, double noise_std = 0.1);

}  // namespace csb
