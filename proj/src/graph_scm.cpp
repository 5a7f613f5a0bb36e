#include "csb/graph_scm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "csb/parallel.hpp"
#include "json.hpp"

namespace csb {

// ---- Dag -------------------------------------------------------------------

Dag::Dag(int n, std::vector<std::pair<int, int>> e, std::vector<std::string> names)
    : node_count(n), edges(std::move(e)), node_names(std::move(names)) {
  if (node_count < 0) throw DimensionMismatch("Dag: negative node count");
  if (!node_names.empty() && static_cast<int>(node_names.size()) != node_count)
    throw DimensionMismatch("Dag: node_names size does not match node_count");
  std::set<std::pair<int, int>> seen;
  for (const auto& [p, c] : edges) {
    if (p < 0 || p >= node_count || c < 0 || c >= node_count)
      throw UnknownNode("Dag: edge index out of range");
    if (p == c) throw CycleDetected("Dag: self-edge on node " + std::to_string(p));
    if (!seen.insert({p, c}).second) throw DimensionMismatch("Dag: duplicate edge");
  }
  build_adjacency();
}

void Dag::build_adjacency() {
  parents_.assign(node_count, {});
  children_.assign(node_count, {});
  for (const auto& [p, c] : edges) {
    parents_[c].push_back(p);
    children_[p].push_back(c);
  }
  for (auto& v : parents_) std::sort(v.begin(), v.end());
  for (auto& v : children_) std::sort(v.begin(), v.end());
}

const std::vector<int>& Dag::parents(int node) const {
  if (node < 0 || node >= node_count) throw UnknownNode("Dag::parents: bad node");
  return parents_[node];
}

const std::vector<int>& Dag::children(int node) const {
  if (node < 0 || node >= node_count) throw UnknownNode("Dag::children: bad node");
  return children_[node];
}

int Dag::index_of(const std::string& name) const {
  for (int i = 0; i < static_cast<int>(node_names.size()); ++i)
    if (node_names[i] == name) return i;
  throw UnknownNode("Dag: no node named '" + name + "'");
}

std::string Dag::name_of(int node) const {
  if (node >= 0 && node < static_cast<int>(node_names.size())) return node_names[node];
  return "x" + std::to_string(node);
}

// ---- Mechanism ---------------------------------------------------------------

Mechanism Mechanism::linear(std::vector<double> w, double noise_std) {
  Mechanism m;
  m.kind = MechanismKind::Linear;
  m.coefficients = std::move(w);
  m.noise_std = noise_std;
  return m;
}

Mechanism Mechanism::constant(double value) {
  Mechanism m;
  m.kind = MechanismKind::Constant;
  m.coefficients = {value};
  m.noise_std = 0.0;
  return m;
}

Mechanism Mechanism::sin_tanh(double noise_std) {
  Mechanism m;
  m.kind = MechanismKind::SinTanhChain;
  m.noise_std = noise_std;
  return m;
}

void Mechanism::validate(int parent_count) const {
  if (noise_std < 0.0) throw NonPositiveStd("Mechanism: negative noise_std");
  switch (kind) {
    case MechanismKind::Linear:
      if (static_cast<int>(coefficients.size()) != parent_count + 1)
        throw DimensionMismatch("Mechanism: linear coefficient count must be parent count + 1");
      break;
    case MechanismKind::Constant:
      if (coefficients.size() != 1) throw DimensionMismatch("Mechanism: constant takes one value");
      if (noise_std != 0.0) throw NonPositiveStd("Mechanism: constant kind must have zero noise_std");
      break;
    case MechanismKind::SinTanhChain:
      if (parent_count < 1 || parent_count > 2)
        throw DimensionMismatch("Mechanism: sin_tanh_chain takes one or two parents");
      break;
    case MechanismKind::CustomTable:
      if (parent_count != 1) throw DimensionMismatch("Mechanism: custom_table takes one parent");
      if (coefficients.size() < 2 || coefficients.size() % 2 != 0)
        throw DimensionMismatch("Mechanism: custom_table needs (grid..., values...)");
      break;
  }
}

double Mechanism::evaluate(const std::vector<double>& pa, double noise) const {
  switch (kind) {
    case MechanismKind::Linear: {
      double v = coefficients.back();
      for (std::size_t i = 0; i < pa.size(); ++i) v += coefficients[i] * pa[i];
      return v + noise_std * noise;
    }
    case MechanismKind::Constant:
      return coefficients[0];
    case MechanismKind::SinTanhChain: {
      // Parents arrive in ascending index order, so the left neighbor (when
      // present) precedes the self parent; a single parent means the left
      // term is zero-padded.
      const double self = pa.back();
      const double left = pa.size() > 1 ? pa[0] : 0.0;
      return std::sin(self) + 0.5 * std::tanh(left) + noise_std * noise;
    }
    case MechanismKind::CustomTable: {
      const std::size_t m = coefficients.size() / 2;
      std::size_t best = 0;
      double bestd = std::abs(pa[0] - coefficients[0]);
      for (std::size_t i = 1; i < m; ++i) {
        const double d = std::abs(pa[0] - coefficients[i]);
        if (d < bestd) {
          bestd = d;
          best = i;
        }
      }
      return coefficients[m + best] + noise_std * noise;
    }
  }
  return 0.0;
}

Scm::Scm(Dag d, std::vector<Mechanism> m) : dag(std::move(d)), mechanisms(std::move(m)) {
  if (static_cast<int>(mechanisms.size()) != dag.node_count)
    throw DimensionMismatch("Scm: one mechanism per node required");
  for (int i = 0; i < dag.node_count; ++i)
    mechanisms[i].validate(static_cast<int>(dag.parents(i).size()));
}

// ---- Dataset ----------------------------------------------------------------

Dataset Dataset::select_columns(const std::vector<int>& idx) const {
  Dataset out(rows, idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || static_cast<std::size_t>(idx[j]) >= cols)
      throw UnknownNode("Dataset::select_columns: bad column");
    if (!names.empty()) out.names.push_back(names[idx[j]]);
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < idx.size(); ++j) out.at(r, j) = at(r, idx[j]);
  return out;
}

double Dataset::column_mean(std::size_t c) const {
  double s = 0.0;
  for (std::size_t r = 0; r < rows; ++r) s += at(r, c);
  return rows ? s / static_cast<double>(rows) : 0.0;
}

double Dataset::column_std(std::size_t c) const {
  const double m = column_mean(c);
  double s = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double d = at(r, c) - m;
    s += d * d;
  }
  return rows ? std::sqrt(s / static_cast<double>(rows)) : 0.0;
}

void Dataset::require_finite() const {
  for (double v : values)
    if (!std::isfinite(v)) throw NonFiniteState("Dataset contains a non-finite entry", -1);
}

// ---- topological layering ----------------------------------------------------

std::vector<std::vector<int>> topological_layers(const Dag& dag) {
  std::vector<int> indeg(dag.node_count, 0);
  for (const auto& [p, c] : dag.edges) {
    (void)p;
    ++indeg[c];
  }
  std::vector<int> frontier;
  for (int i = 0; i < dag.node_count; ++i)
    if (indeg[i] == 0) frontier.push_back(i);

  std::vector<std::vector<int>> layers;
  int placed = 0;
  while (!frontier.empty()) {
    std::sort(frontier.begin(), frontier.end());
    layers.push_back(frontier);
    placed += static_cast<int>(frontier.size());
    std::vector<int> next;
    for (int u : frontier)
      for (int v : dag.children(u))
        if (--indeg[v] == 0) next.push_back(v);
    frontier.swap(next);
  }
  if (placed != dag.node_count) throw CycleDetected("topological_layers: graph has a cycle");
  return layers;
}

std::vector<int> topological_order(const Dag& dag) {
  std::vector<int> order;
  for (const auto& layer : topological_layers(dag))
    order.insert(order.end(), layer.begin(), layer.end());
  return order;
}

// ---- sampling ----------------------------------------------------------------

Dataset sample(const Scm& scm, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw DimensionMismatch("sample: n must be >= 1");
  const auto order = topological_order(scm.dag);
  Dataset out(n, scm.dag.node_count);
  if (!scm.dag.node_names.empty()) out.names = scm.dag.node_names;

  const Rng master(seed);
  par::parallel_for(n, [&](std::size_t r) {
    std::vector<double> pa;
    for (int node : order) {
      const auto& parents = scm.dag.parents(node);
      pa.clear();
      for (int p : parents) pa.push_back(out.at(r, p));
      // One stream per (row, node): the draw does not depend on how rows
      // are scheduled across threads.
      Rng stream = master.derive(0x5a3e11u, r, static_cast<std::uint64_t>(node));
      out.at(r, node) = scm.mechanisms[node].evaluate(pa, stream.normal());
    }
  });
  return out;
}

// ---- interventions ------------------------------------------------------------

Scm intervene(const Scm& scm, const std::map<int, double>& assignments) {
  for (const auto& [node, v] : assignments) {
    (void)v;
    if (node < 0 || node >= scm.dag.node_count)
      throw UnknownNode("intervene: node " + std::to_string(node) + " out of range");
  }
  std::vector<std::pair<int, int>> edges;
  for (const auto& [p, c] : scm.dag.edges)
    if (!assignments.count(c)) edges.push_back({p, c});
  Dag mutilated(scm.dag.node_count, edges, scm.dag.node_names);

  std::vector<Mechanism> mechs = scm.mechanisms;
  for (const auto& [node, value] : assignments) mechs[node] = Mechanism::constant(value);
  return Scm(std::move(mutilated), std::move(mechs));
}

Scm intervene(const Scm& scm, const std::map<std::string, double>& assignments) {
  std::map<int, double> by_index;
  for (const auto& [name, v] : assignments) by_index[scm.dag.index_of(name)] = v;
  return intervene(scm, by_index);
}

std::set<int> descendants(const Dag& dag, int node) {
  if (node < 0 || node >= dag.node_count) throw UnknownNode("descendants: bad node");
  std::set<int> out;
  std::vector<int> stack = dag.children(node);
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    if (out.insert(u).second)
      for (int v : dag.children(u)) stack.push_back(v);
  }
  return out;
}

// ---- JSON spec files -----------------------------------------------------------

using nlohmann::json;

static MechanismKind kind_from_string(const std::string& s) {
  if (s == "linear") return MechanismKind::Linear;
  if (s == "sin_tanh_chain") return MechanismKind::SinTanhChain;
  if (s == "constant") return MechanismKind::Constant;
  if (s == "custom_table") return MechanismKind::CustomTable;
  throw IoError("unknown mechanism kind '" + s + "'");
}

static std::string kind_to_string(MechanismKind k) {
  switch (k) {
    case MechanismKind::Linear: return "linear";
    case MechanismKind::SinTanhChain: return "sin_tanh_chain";
    case MechanismKind::Constant: return "constant";
    case MechanismKind::CustomTable: return "custom_table";
  }
  return "linear";
}

Scm scm_from_json_text(const std::string& text) {
  json doc = json::parse(text);
  const auto& nodes = doc.at("nodes");
  const int n = static_cast<int>(nodes.size());

  std::vector<std::string> names;
  for (const auto& nd : nodes) names.push_back(nd.at("name").get<std::string>());

  auto resolve = [&](const json& parent) -> int {
    if (parent.is_number_integer()) return parent.get<int>();
    const std::string s = parent.get<std::string>();
    for (int i = 0; i < n; ++i)
      if (names[i] == s) return i;
    throw UnknownNode("SCM spec references unknown parent '" + s + "'");
  };

  std::vector<std::pair<int, int>> edges;
  std::vector<Mechanism> mechs;
  for (int i = 0; i < n; ++i) {
    const auto& nd = nodes[i];
    if (nd.contains("parents"))
      for (const auto& p : nd.at("parents")) edges.push_back({resolve(p), i});
    Mechanism m;
    const auto& mj = nd.at("mechanism");
    m.kind = kind_from_string(mj.at("kind").get<std::string>());
    if (mj.contains("coefficients")) m.coefficients = mj.at("coefficients").get<std::vector<double>>();
    m.noise_std = mj.value("noise_std", 0.0);
    mechs.push_back(std::move(m));
  }
  return Scm(Dag(n, std::move(edges), std::move(names)), std::move(mechs));
}

Scm scm_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open SCM spec '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return scm_from_json_text(ss.str());
}

std::string scm_to_json_text(const Scm& scm) {
  json nodes = json::array();
  for (int i = 0; i < scm.dag.node_count; ++i) {
    json nd;
    nd["name"] = scm.dag.name_of(i);
    json parents = json::array();
    for (int p : scm.dag.parents(i)) parents.push_back(scm.dag.name_of(p));
    nd["parents"] = parents;
    nd["mechanism"] = {{"kind", kind_to_string(scm.mechanisms[i].kind)},
                       {"coefficients", scm.mechanisms[i].coefficients},
                       {"noise_std", scm.mechanisms[i].noise_std}};
    nodes.push_back(nd);
  }
  return json{{"nodes", nodes}}.dump(2);
}

// ---- dataset files --------------------------------------------------------------

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (std::size_t c = 0; c < data.cols; ++c) {
    out << (c < data.names.size() ? data.names[c] : "x" + std::to_string(c));
    out << (c + 1 < data.cols ? ',' : '\n');
  }
  char buf[40];
  for (std::size_t r = 0; r < data.rows; ++r) {
    for (std::size_t c = 0; c < data.cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.at(r, c));
      out << buf << (c + 1 < data.cols ? ',' : '\n');
    }
  }
}

Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV '" + path + "'");
  Dataset out;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.names.push_back(cell);
  }
  out.cols = out.names.size();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ss, cell, ',')) {
      out.values.push_back(std::stod(cell));
      ++c;
    }
    if (c != out.cols) throw IoError("ragged CSV row in '" + path + "'");
    ++out.rows;
  }
  out.require_finite();
  return out;
}

void write_binary(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const char magic[4] = {'C', 'S', 'B', 'D'};
  const std::uint32_t n = static_cast<std::uint32_t>(data.rows);
  const std::uint32_t d = static_cast<std::uint32_t>(data.cols);
  const std::uint32_t pad = 0;
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&d), 4);
  out.write(reinterpret_cast<const char*>(&pad), 4);
  std::vector<float> fbuf(data.values.size());
  for (std::size_t i = 0; i < data.values.size(); ++i) fbuf[i] = static_cast<float>(data.values[i]);
  out.write(reinterpret_cast<const char*>(fbuf.data()),
            static_cast<std::streamsize>(fbuf.size() * sizeof(float)));
}

Dataset read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[4];
  std::uint32_t n = 0, d = 0, pad = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&d), 4);
  in.read(reinterpret_cast<char*>(&pad), 4);
  if (!in || std::memcmp(magic, "CSBD", 4) != 0) throw IoError("bad CSBD header in '" + path + "'");
  Dataset out(n, d);
  std::vector<float> fbuf(static_cast<std::size_t>(n) * d);
  in.read(reinterpret_cast<char*>(fbuf.data()), static_cast<std::streamsize>(fbuf.size() * sizeof(float)));
  if (!in) throw IoError("truncated CSBD payload in '" + path + "'");
  for (std::size_t i = 0; i < fbuf.size(); ++i) out.values[i] = static_cast<double>(fbuf[i]);
  out.require_finite();
  return out;
}

// ---- canned families -------------------------------------------------------------

Scm confounder_scm() {
  Dag dag(3, {{0, 1}, {0, 2}}, {"X", "Y", "Z"});
  std::vector<Mechanism> mech;
  mech.push_back(Mechanism::linear({0.0}, 1.0));       // X ~ N(0,1)
  mech.push_back(Mechanism::linear({2.0, 0.0}, 0.3));  // Y = 2X + eps
  mech.push_back(Mechanism::linear({2.0, 0.0}, 0.3));  // Z = 2X + eps
  return Scm(std::move(dag), std::move(mech));
}

Scm markov_chain_scm(int d, double a) {
  std::vector<std::pair<int, int>> edges;
  std::vector<std::string> names;
  std::vector<Mechanism> mech;
  const double resid = std::sqrt(std::max(1e-12, 1.0 - a * a));
  for (int i = 0; i < d; ++i) {
    names.push_back("x" + std::to_string(i));
    if (i == 0) {
      mech.push_back(Mechanism::linear({0.0}, 1.0));
    } else {
      edges.push_back({i - 1, i});
      mech.push_back(Mechanism::linear({a, 0.0}, resid));
    }
  }
  return Scm(Dag(d, std::move(edges), std::move(names)), std::move(mech));
}

Scm sin_tanh_chain_scm(int d, double noise_std) {
  const int n = 2 * d;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::string> names(n);
  std::vector<Mechanism> mech(n);
  for (int i = 0; i < d; ++i) {
    names[i] = "x0_" + std::to_string(i);
    mech[i] = Mechanism::linear({0.0}, 1.0);
  }
  for (int i = 0; i < d; ++i) {
    const int child = d + i;
    names[child] = "x1_" + std::to_string(i);
    edges.push_back({i, child});
    if (i > 0) edges.push_back({i - 1, child});
    mech[child] = Mechanism::sin_tanh(noise_std);
  }
  return Scm(Dag(n, std::move(edges), std::move(names)), std::move(mech));
}

}  // namespace csb
