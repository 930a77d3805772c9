#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "treespec/spectral.hpp"
#include "treespec/stats.hpp"

namespace treespec {

struct LearnerConfig {
  SpectralConfig spectral;
  Strictness strictness = Strictness::lenient;
  // lenient mode clips estimated marginals at sigma/2 before Bayes reversal
  double sigma = 0.04;
  std::uint64_t seed = 0;
  // exploration radius; defaults to depth(topology)
  std::optional<int> delta_override;
};

// Depth of the exploration balls: the maximum over internal edges (u,v) of
// the hop distance from an endpoint to its nearest leaf avoiding that edge,
// floored at 1 so degenerate trees stay reachable. Endpoints that are leaves
// contribute 0.
int depth(const TreeTopology& t);

// Minimum-hop leaf reachable from `from` without crossing excluded_edge;
// ties break toward the lowest leaf label. Throws Unreachable.
int closest_leaf(const TreeTopology& t, int from,
                 std::optional<std::pair<int, int>> excluded_edge = {});

struct SeparatorRecord {
  int index = 0;
  int w = 0;        // endpoint outside the subtree that discovered the edge
  int w_prime = 0;  // endpoint inside it
  int new_ref = 0;  // reference leaf for the far side (node id)
  int old_ref = 0;  // reference leaf of the discovering subtree
};

// One subtree pass: breadth-first recovery of every node within delta hops
// of the reference leaf, skipping separator edges, plus the separators it
// discovers on its frontier. Matrices are raw (not yet stochastic).
struct SubtreeRecon {
  int ref_leaf = 0;
  std::map<int, Eigen::MatrixXd> from_ref;   // node -> P~^{a v}
  std::map<int, Eigen::VectorXd> marginals;  // node -> pi~_v
  std::map<std::pair<int, int>, Eigen::MatrixXd> edges;  // both directions
  std::vector<int> covered;                  // BFS order, excludes the ref leaf
  std::vector<SeparatorRecord> new_separators;
  std::map<int, ChangDiagnostics> diag;      // keyed by decomposed node
};

SubtreeRecon leafrecon(const TreeTopology& t, int ref_leaf, int delta,
                       std::set<std::pair<int, int>>& separators,
                       int next_separator_index, StatsProvider& stats,
                       const LearnerConfig& cfg);

// Patches one separator edge (w,w'):
//   P~^{ww'} = (P~^{aw})^{-1} P^{aa'} (P~^{w'a'})^{-1}
// with the reverse direction through Bayes rule on the node marginals.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> seprecon(
    const Eigen::MatrixXd& p_ref_w, const Eigen::MatrixXd& p_wprime_oldref,
    const Eigen::MatrixXd& pair_ref_oldref, const Eigen::VectorXd& pi_w,
    const Eigen::VectorXd& pi_wprime, const SpectralConfig& cfg);

struct ReconstructionResult {
  MarkovTreeModel model;  // rooted at the first reference leaf
  std::map<int, int> reference_leaf;  // node -> reference leaf node
  // final stochastic estimates, both directions of every edge
  std::map<std::pair<int, int>, Eigen::MatrixXd> edge_estimates;
  std::map<int, Eigen::VectorXd> node_marginals;
  std::vector<SeparatorRecord> separators;
  std::map<int, ChangDiagnostics> decomposition_diag;
  int total_probe_retries = 0;
};

// Full recovery on a known binary topology: alternate subtree reconstruction
// over the pending-reference queue with separator patching until every edge
// carries a stochastic matrix in both directions. Deterministic in
// (topology, stats, cfg.seed).
ReconstructionResult fullrecon(const TreeTopology& t, StatsProvider& stats,
                               const LearnerConfig& cfg);

}  // namespace treespec
