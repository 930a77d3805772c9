#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "treespec/errors.hpp"
#include "treespec/rng.hpp"

namespace treespec {

// Undirected leaf-labeled tree. Nodes are dense ids 0..node_count-1, leaves
// carry labels 1..n and leaf_nodes[j] is the node labeled j+1. Neighbor lists
// are kept sorted so every traversal is deterministic.
struct TreeTopology {
  int node_count = 0;
  std::vector<std::vector<int>> adj;
  std::vector<int> leaf_nodes;
  std::vector<std::string> node_names;

  int leaf_count() const { return int(leaf_nodes.size()); }
  int degree(int v) const { return int(adj[v].size()); }
  bool is_leaf(int v) const { return degree(v) <= 1; }
  int edge_count() const;

  // 1..n for leaves, 0 for internal nodes
  int leaf_label(int v) const;
  int node_of_label(int label) const;
  int node_of_name(const std::string& name) const;  // -1 if absent

  bool has_edge(int u, int v) const;
  // undirected edge list, each as (min,max), sorted
  std::vector<std::pair<int, int>> edges() const;

  // hop distances from `from`; -1 where unreachable; an edge may be blocked
  std::vector<int> bfs_distances(
      int from, std::optional<std::pair<int, int>> blocked_edge = {}) const;
  std::vector<int> path_between(int u, int v) const;  // inclusive endpoints

  void add_edge(int u, int v);
};

enum class TreeMode { binary, caterpillar, contracted };

// Structural validation: connected, acyclic, labels exactly 1..n, and the
// per-mode degree rules (binary: internal degree 3; contracted: >= 3;
// caterpillar: internal nodes induce a path). Throws InvalidArgument.
void validate_topology(const TreeTopology& t, TreeMode mode);

TreeTopology make_caterpillar(int n);
TreeTopology make_balanced_binary(int n);  // n must be a power of two, >= 2
TreeTopology random_binary_topology(int n, SplitMix64& rng);

// merges v into u; both must be adjacent internal nodes
TreeTopology contract_edge(const TreeTopology& t, int u, int v);

// Newick text. Leaves must be named by their integer labels; internal names
// are kept if present and invented ("h0", "h1", ...) otherwise. Branch
// lengths are accepted on input and discarded.
TreeTopology parse_newick(const std::string& text);
std::string to_newick(const TreeTopology& t, int root);

// Leaf-label-preserving isomorphism. Returns the node map a -> b, or nullopt.
std::optional<std::vector<int>> leaf_isomorphism(const TreeTopology& a,
                                                 const TreeTopology& b);

}  // namespace treespec
