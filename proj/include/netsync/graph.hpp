#ifndef NETSYNC_GRAPH_HPP_
#define NETSYNC_GRAPH_HPP_

#include <algorithm>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace netsync {

using NodeId = int;

/// Directed graph on nodes {0, ..., n-1}. An edge (j, i) is a link leaving
/// node j and directed toward node i, i.e. i can receive from j.
/// Self-loops are allowed; they only appear where a construction
/// (composition inputs, interaction graphs) introduces them explicitly.
class Digraph {
 public:
  using Edge = std::pair<NodeId, NodeId>;  // (from, to)

  explicit Digraph(int n) : n_(n) {
    if (n < 0) throw std::invalid_argument("Digraph: negative node count");
  }

  int size() const { return n_; }

  void add_edge(NodeId from, NodeId to) {
    check_node(from);
    check_node(to);
    edges_.insert({from, to});
  }

  bool has_edge(NodeId from, NodeId to) const {
    return edges_.count({from, to}) > 0;
  }

  const std::set<Edge>& edges() const { return edges_; }

  /// Senders with a link toward `to`.
  std::vector<NodeId> in_neighbors(NodeId to) const {
    std::vector<NodeId> result;
    for (const auto& [j, i] : edges_)
      if (i == to) result.push_back(j);
    return result;
  }

  std::vector<NodeId> out_neighbors(NodeId from) const {
    std::vector<NodeId> result;
    for (const auto& [j, i] : edges_)
      if (j == from) result.push_back(i);
    return result;
  }

  /// Same node set and edges plus a self-loop at every node.
  Digraph with_self_loops() const {
    Digraph g = *this;
    for (NodeId v = 0; v < n_; ++v) g.add_edge(v, v);
    return g;
  }

  bool operator==(const Digraph& other) const = default;

 private:
  void check_node(NodeId v) const {
    if (v < 0 || v >= n_) throw std::out_of_range("Digraph: node out of range");
  }

  int n_;
  std::set<Edge> edges_;
};

namespace detail {

/// Strongly connected components by iterative Tarjan; returns a component
/// index per node, components numbered in reverse topological order.
inline std::vector<int> strongly_connected_components(const Digraph& g,
                                                      int* component_count) {
  const int n = g.size();
  std::vector<std::vector<NodeId>> out(n);
  for (const auto& [j, i] : g.edges()) out[j].push_back(i);

  std::vector<int> index(n, -1), lowlink(n, 0), component(n, -1);
  std::vector<bool> on_stack(n, false);
  std::vector<NodeId> stack;
  int next_index = 0, n_components = 0;

  struct Frame {
    NodeId v;
    size_t child;
  };
  std::vector<Frame> call_stack;

  for (NodeId root = 0; root < n; ++root) {
    if (index[root] >= 0) continue;
    call_stack.push_back({root, 0});
    index[root] = lowlink[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = true;

    while (!call_stack.empty()) {
      Frame& frame = call_stack.back();
      NodeId v = frame.v;
      if (frame.child < out[v].size()) {
        NodeId w = out[v][frame.child++];
        if (index[w] < 0) {
          index[w] = lowlink[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = true;
          call_stack.push_back({w, 0});
        } else if (on_stack[w]) {
          lowlink[v] = std::min(lowlink[v], index[w]);
        }
      } else {
        if (lowlink[v] == index[v]) {
          while (true) {
            NodeId w = stack.back();
            stack.pop_back();
            on_stack[w] = false;
            component[w] = n_components;
            if (w == v) break;
          }
          ++n_components;
        }
        call_stack.pop_back();
        if (!call_stack.empty()) {
          NodeId parent = call_stack.back().v;
          lowlink[parent] = std::min(lowlink[parent], lowlink[v]);
        }
      }
    }
  }
  *component_count = n_components;
  return component;
}

}  // namespace detail

/// All roots of g: nodes with a directed path to every other node. The set is
/// empty exactly when g has no spanning tree. Computed via the condensation:
/// g is rooted iff the component DAG has a single source, and the roots are
/// the members of that source component.
inline std::set<NodeId> roots(const Digraph& g) {
  const int n = g.size();
  if (n == 0) return {};
  if (n == 1) return {0};

  int n_components = 0;
  std::vector<int> component =
      detail::strongly_connected_components(g, &n_components);

  std::vector<bool> has_incoming(n_components, false);
  for (const auto& [j, i] : g.edges())
    if (component[j] != component[i]) has_incoming[component[i]] = true;

  int source = -1;
  for (int c = 0; c < n_components; ++c) {
    if (!has_incoming[c]) {
      if (source >= 0) return {};  // two sources: neither reaches the other
      source = c;
    }
  }

  std::set<NodeId> result;
  for (NodeId v = 0; v < n; ++v)
    if (component[v] == source) result.insert(v);
  return result;
}

/// Composition g1 ∘ g2: edge (j, i) exists iff (j, l) is an edge of g2 and
/// (l, i) an edge of g1 for some intermediate node l.
inline Digraph compose(const Digraph& g1, const Digraph& g2) {
  if (g1.size() != g2.size())
    throw std::invalid_argument("compose: node count mismatch");
  const int n = g1.size();
  std::vector<std::vector<NodeId>> out1(n);
  for (const auto& [l, i] : g1.edges()) out1[l].push_back(i);

  Digraph result(n);
  for (const auto& [j, l] : g2.edges())
    for (NodeId i : out1[l]) result.add_edge(j, i);
  return result;
}

/// A sequence g[0], g[1], ..., g[q-1] is jointly rooted when the composition
/// g[q-1] ∘ ... ∘ g[0] is rooted.
inline bool is_jointly_rooted(const std::vector<Digraph>& sequence) {
  if (sequence.empty())
    throw std::invalid_argument("is_jointly_rooted: empty sequence");
  Digraph acc = sequence.front();
  for (size_t k = 1; k < sequence.size(); ++k) acc = compose(sequence[k], acc);
  return !roots(acc).empty();
}

/// The graph governing the discrete velocity-estimate exchange: g with
/// (1) incoming arcs to every leader removed, (2) a directed link from every
/// leader to every other leader, and (3) a self-loop at every node.
/// With no leaders this reduces to adding the self-loops.
inline Digraph estimator_graph(const Digraph& g,
                               const std::set<NodeId>& leaders) {
  const int n = g.size();
  for (NodeId l : leaders)
    if (l < 0 || l >= n)
      throw std::out_of_range("estimator_graph: leader out of range");

  Digraph result(n);
  for (const auto& [j, i] : g.edges())
    if (!leaders.count(i)) result.add_edge(j, i);
  for (NodeId a : leaders)
    for (NodeId b : leaders)
      if (a != b) result.add_edge(a, b);
  for (NodeId v = 0; v < n; ++v) result.add_edge(v, v);
  return result;
}

/// Weighted directed graph: adjacency weights a_ij > 0 for each edge (j, i),
/// a_ij = 0 otherwise, a_ii = 0. Immutable once built up; shared read-only
/// across concurrent runs.
class WeightedDigraph {
 public:
  explicit WeightedDigraph(int n)
      : base_(n), weights_(Eigen::MatrixXd::Zero(n, n)) {}

  void add_edge(NodeId from, NodeId to, double weight) {
    if (from == to)
      throw std::invalid_argument("WeightedDigraph: self-loop not allowed");
    if (weight <= 0.0)
      throw std::invalid_argument("WeightedDigraph: weight must be positive");
    base_.add_edge(from, to);
    weights_(to, from) = weight;
  }

  int size() const { return base_.size(); }
  const Digraph& base() const { return base_; }

  /// a_ij: weight on the link from j toward i; zero when absent.
  double weight(NodeId i, NodeId j) const { return weights_(i, j); }

  /// κ_i: total incoming weight of node i.
  double in_weight(NodeId i) const { return weights_.row(i).sum(); }

  /// Nodes with at least one incoming link (κ_i != 0).
  std::vector<NodeId> nodes_with_input() const {
    std::vector<NodeId> result;
    for (NodeId i = 0; i < size(); ++i)
      if (in_weight(i) > 0.0) result.push_back(i);
    return result;
  }

  std::vector<NodeId> in_neighbors(NodeId i) const {
    return base_.in_neighbors(i);
  }

 private:
  Digraph base_;
  Eigen::MatrixXd weights_;
};

/// Laplacian of a weighted digraph: diagonal κ_i, off-diagonal -a_ij.
/// Every row sums to zero.
inline Eigen::MatrixXd laplacian(const WeightedDigraph& g) {
  const int n = g.size();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = 0; j < n; ++j) {
      if (i == j) continue;
      l(i, j) = -g.weight(i, j);
    }
    l(i, i) = g.in_weight(i);
  }
  return l;
}

}  // namespace netsync

#endif  // NETSYNC_GRAPH_HPP_
