#pragma once

#include <Eigen/Dense>
#include <vector>

#include "treespec/model.hpp"
#include "treespec/stats.hpp"

namespace treespec {

struct TopologyParams {
  // pairs with psi_hat <= 2*delta_cap count as short and feed quartets
  double delta_cap = 4.0;
  // four-point decision margin delta; a split needs an advantage of 2*delta
  double contraction_delta = 0.05;
  enum class QuartetMode { strict, contract };
  QuartetMode quartet_mode = QuartetMode::contract;
};

// Symmetric log-det distance over leaf labels 1..n, in the additive form
// (with the endpoint marginal products folded in) so psi(a,b) equals the sum
// of the edge weights along the a-b path; +infinity marks pairs whose joint
// matrix is singular.
struct LogDetMetric {
  int n = 0;
  Eigen::MatrixXd psi;  // (n+1)x(n+1), row/col 0 unused

  double at(int a, int b) const { return psi(a, b); }
  bool is_short(int a, int b, const TopologyParams& params) const;
};

// -ln|det F|; returns +infinity below the underflow floor
double logdet_pair(const Eigen::MatrixXd& f_ab);

// nu_uv = -1/2 ln|det P^{uv}| - 1/2 ln|det P^{vu}| for adjacent u,v; the
// reverse matrix comes from the exact marginals. Throws SingularModel.
double edge_logdet_weight(const MarkovTreeModel& m, int u, int v);

LogDetMetric metric_from_samples(const LeafSamples& samples);
LogDetMetric metric_from_samples(const LeafSamples& samples,
                                 const std::vector<std::pair<int, int>>& pairs);
// exact psi, for oracle-mode runs and tests
LogDetMetric metric_from_model(const MarkovTreeModel& m);

enum class QuartetSplit { ab_cd, ac_bd, ad_bc, undecided };

// Leaf graph marking near-permutation internal paths: an edge joins a short
// pair that no decided quartet separates; connected components are the leaf
// groups to be contracted onto one node each.
struct ContractionGraph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;        // (a < b)
  std::vector<std::vector<int>> components;      // sorted members, sorted by head
};

ContractionGraph contraction_graph(const LogDetMetric& metric,
                                   const TopologyParams& params);

// Four-point rule with margin: returns the pairing whose distance sum is
// smaller than both alternatives by at least 2*delta.
QuartetSplit four_point(double psi_ab, double psi_ac, double psi_ad,
                        double psi_bc, double psi_bd, double psi_cd,
                        double delta);

// split of {a,b,c,d} induced by a tree (hop metric); undecided on stars
QuartetSplit induced_quartet_split(const TreeTopology& t, int a, int b, int c,
                                   int d);

// Contraction-tolerant caterpillar reconstruction: short-pair quartets, a
// leaf graph whose components mark near-permutation internal paths, then
// cherry peeling of component representatives. Output leaves = input leaves;
// internal nodes may multifurcate.
TreeTopology reconstruct_caterpillar(const LogDetMetric& metric,
                                     const TopologyParams& params);
TreeTopology reconstruct_caterpillar(const LeafSamples& samples,
                                     const TopologyParams& params);

// Binary reconstruction by incremental leaf insertion against the decided
// quartet set; QuartetConflict when no placement is consistent.
TreeTopology reconstruct_binary(const LogDetMetric& metric,
                                const TopologyParams& params);
TreeTopology reconstruct_binary(const LeafSamples& samples,
                                const TopologyParams& params);

}  // namespace treespec
