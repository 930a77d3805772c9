#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <vector>

#include "treespec/model.hpp"

namespace treespec {

struct TvResult {
  double half_l1 = 0.0;  // total variation, in [0,1]
  double raw_l1 = 0.0;
};

// Exact total variation between the leaf distributions of two models over
// the same leaf set. Throws BudgetExceeded when k^n is out of budget.
TvResult tv_leaf_distance(const MarkovTreeModel& m1, const MarkovTreeModel& m2,
                          std::int64_t budget = kDefaultJointBudget);

struct SampledTv {
  double half_l1 = 0.0;
  double band = 0.0;  // 4-sigma Monte-Carlo half-width
  int draws = 0;
};

// Monte-Carlo fallback: draws from m1 and averages the positive part of
// 1 - p2(x)/p1(x) via exact per-configuration likelihoods.
SampledTv tv_leaf_sampled(const MarkovTreeModel& m1, const MarkovTreeModel& m2,
                          int draws, std::uint64_t seed);

struct AlignmentReport {
  std::map<int, std::vector<int>> per_node_perm;  // truth node -> perm old->new
  std::map<std::pair<int, int>, double> per_edge_l1;
  double max_l1 = 0.0;
};

// Internal state labels are recoverable only up to a per-node permutation;
// this aligns est against truth greedily outward from leaf 1, each node's
// permutation chosen to minimize the error of its reference-path matrix,
// and reports aligned per-edge errors. Throws TopologyMismatch.
AlignmentReport align_labels(const MarkovTreeModel& est,
                             const MarkovTreeModel& truth);

struct ParitySpec {
  int n = 1;
  std::vector<int> t_set;  // nonempty subset of {1..n}
  double alpha = 0.0;      // label flip probability, in [0, 1/2)
};

void validate_parity_spec(const ParitySpec& spec);

// Caterpillar HMM computing the noisy parity of the marked bits: hidden
// nodes carry (bit, partial sum) on a 4-state alphabet, leaves 1..n emit the
// bits and leaf n+1 the noisy parity. Every edge matrix has rank 2 and
// determinant 0.
MarkovTreeModel parity_hmm(const ParitySpec& spec);

// exact law of (x, label) over {0,1}^{n+1}, x uniform, label flipped with
// probability alpha
JointTable noisy_parity_oracle(const ParitySpec& spec);

// Parity model with every edge matrix mixed with the identity by tau_mix and
// the root distribution mixed with uniform; determinants become positive.
MarkovTreeModel smoothed_parity_model(const ParitySpec& spec, double tau_mix);

}  // namespace treespec
