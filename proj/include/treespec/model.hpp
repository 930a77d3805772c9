#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "treespec/tree.hpp"

namespace treespec {

// Row-stochastic transition matrix with its |determinant| cached at
// construction. Row i is the child-state distribution given parent state i.
struct TransitionMatrix {
  Eigen::MatrixXd p;
  double det_abs = 0.0;

  static TransitionMatrix make(Eigen::MatrixXd rows);
  int k() const { return int(p.rows()); }
};

// Thresholds of the nonsingularity check: beta < |det| <= 1 - beta_prime on
// every edge and every node marginal entry > sigma.
struct ModelConfig {
  double beta = 0.01;
  double beta_prime = 0.0;
  double sigma = 0.0;
};

struct MarkovTreeModel {
  TreeTopology topology;
  int k = 2;
  int root = 0;
  Eigen::VectorXd root_dist;
  // directed edges oriented away from the root
  std::map<std::pair<int, int>, TransitionMatrix> edge_matrix;

  bool has_matrix(int u, int v) const;
  const TransitionMatrix& matrix(int u, int v) const;
};

// Shape and stochasticity checks (throws InvalidArgument); a report-only
// nonsingularity audit against the configured thresholds.
void validate_structure(const MarkovTreeModel& m);

struct EdgeCheck {
  int u = 0, v = 0;
  double det_abs = 0.0;
  bool ok = false;
};
struct NodeCheck {
  int v = 0;
  double min_marginal = 0.0;
  bool ok = false;
};
struct ValidationReport {
  std::vector<EdgeCheck> edges;
  std::vector<NodeCheck> nodes;
  bool pass = false;
};
ValidationReport validate_model(const MarkovTreeModel& m, const ModelConfig& cfg);

// marginal of node v: root_dist pushed along the root->v path
Eigen::VectorXd stationary_at(const MarkovTreeModel& m, int v);

// (P_vu)_{ij} = pi_u(j) (P_uv)_{ji} / pi_v(i), rows renormalized.
// Throws ZeroMarginal when pi_v has a nonpositive entry.
Eigen::MatrixXd bayes_reverse(const Eigen::MatrixXd& p_uv,
                              const Eigen::VectorXd& pi_u,
                              const Eigen::VectorXd& pi_v);

// Same leaf distribution, new root; edge matrices on the flipped part of the
// tree are reversed through the exact node marginals.
MarkovTreeModel reroot(const MarkovTreeModel& m, int new_root);

// product of the directed transition matrices along the unique u -> v path
TransitionMatrix path_transition(const MarkovTreeModel& m, int u, int v);

struct LeafSamples {
  int m = 0, n = 0, k = 0;
  std::vector<std::int32_t> data;  // m x n, row-major; column j = leaf label j+1

  int at(int row, int col) const { return data[std::size_t(row) * n + col]; }
};

// m i.i.d. draws of the tree process, leaf columns kept. Sample i uses
// substream i of the seed, so the output is a pure function of (model, seed).
LeafSamples sample_leaves(const MarkovTreeModel& m, int count, std::uint64_t seed);

struct JointTable {
  std::vector<int> nodes;  // query nodes, caller order; first index varies slowest
  int k = 2;
  std::vector<double> p;

  double at(std::span<const int> states) const;
  JointTable marginalize_out(int node) const;
  double sum() const;
};

inline constexpr std::int64_t kDefaultJointBudget = 10'000'000;

// Exact joint distribution over a node subset by elimination over the tree.
// Works for singular models (no reversals involved). Throws BudgetExceeded
// when k^|nodes| is beyond the budget.
JointTable exact_joint(const MarkovTreeModel& m, const std::vector<int>& nodes,
                       std::int64_t budget = kDefaultJointBudget);

// P[leaves = states], states indexed by leaf label order
double leaf_likelihood(const MarkovTreeModel& m, std::span<const int> leaf_states);

// Conjugates the incident matrices (and marginal) of one internal node by a
// state permutation; the leaf distribution is unchanged. perm maps old -> new.
MarkovTreeModel permute_internal_states(const MarkovTreeModel& m, int v,
                                        const std::vector<int>& perm);

}  // namespace treespec
