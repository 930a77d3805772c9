#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <memory>
#include <vector>

#include "treespec/model.hpp"

namespace treespec {

// dense k x k x k tensor, index (i,j,g) with g fastest
struct Tensor3 {
  int k = 0;
  std::vector<double> v;

  Tensor3() = default;
  explicit Tensor3(int kk) : k(kk), v(std::size_t(kk) * kk * kk, 0.0) {}

  double at(int i, int j, int g) const { return v[(std::size_t(i) * k + j) * k + g]; }
  double& at(int i, int j, int g) { return v[(std::size_t(i) * k + j) * k + g]; }
  Eigen::MatrixXd slice_gamma(int g) const;
};

enum class Strictness { strict, lenient };

// Count-based estimators: N^a_i, N^{ab}_{ij}, N^{abc}_{ijg} and their
// normalized forms pi_hat_a, P_hat^{ab}_{ij} = N^{ab}_{ij}/N^a_i and the
// triple tensor P_hat^{ab,g}. Keys are leaf labels.
struct EmpiricalStats {
  int k = 0;
  std::int64_t m = 0;
  std::map<int, Eigen::VectorXi> leaf_counts;
  std::map<int, Eigen::VectorXd> pi_hat;
  std::map<std::pair<int, int>, Eigen::MatrixXi> pair_counts;
  std::map<std::pair<int, int>, Eigen::MatrixXd> pair_hat;
  std::map<std::array<int, 3>, Tensor3> triple_counts;
  std::map<std::array<int, 3>, Tensor3> triple_hat;
  // conditioning states with N^a_i = 0, as (leaf, state)
  std::vector<std::pair<int, int>> unobserved;
};

// Strict mode throws UnobservedState when a requested conditioning leaf has
// an unseen state; lenient mode substitutes a uniform row and flags it.
EmpiricalStats empirical_stats(const LeafSamples& samples,
                               const std::vector<std::pair<int, int>>& pairs,
                               const std::vector<std::array<int, 3>>& triples,
                               Strictness strictness = Strictness::strict);

// Uniform access to leaf statistics for the learner: either count-based
// estimates from samples or exact distributions from a model. All keys are
// leaf labels; results are cached per key.
class StatsProvider {
 public:
  virtual ~StatsProvider() = default;
  virtual int k() const = 0;
  virtual int leaf_count() const = 0;
  virtual Eigen::VectorXd leaf_marginal(int a) = 0;
  virtual Eigen::MatrixXd pair_conditional(int a, int b) = 0;    // P^{ab}
  virtual Tensor3 triple_conditional(int a, int b, int c) = 0;   // P^{ab,g}
  virtual Eigen::MatrixXd pair_joint(int a, int b) = 0;          // F_ab
  // crude per-entry noise scale: 1/sqrt(m) for samples, 0 for exact
  virtual double data_scale() const = 0;
};

class EmpiricalStatsProvider final : public StatsProvider {
 public:
  EmpiricalStatsProvider(const LeafSamples& samples, Strictness strictness);

  int k() const override { return samples_.k; }
  int leaf_count() const override { return samples_.n; }
  Eigen::VectorXd leaf_marginal(int a) override;
  Eigen::MatrixXd pair_conditional(int a, int b) override;
  Tensor3 triple_conditional(int a, int b, int c) override;
  Eigen::MatrixXd pair_joint(int a, int b) override;
  double data_scale() const override;

 private:
  const LeafSamples& samples_;
  Strictness strictness_;
  std::map<int, Eigen::VectorXd> marginal_cache_;
  std::map<int, Eigen::VectorXi> count_cache_;
  std::map<std::pair<int, int>, Eigen::MatrixXd> pair_cache_;
  std::map<std::pair<int, int>, Eigen::MatrixXd> joint_cache_;
  std::map<std::array<int, 3>, Tensor3> triple_cache_;
};

class ExactStatsProvider final : public StatsProvider {
 public:
  explicit ExactStatsProvider(const MarkovTreeModel& model);

  int k() const override { return model_.k; }
  int leaf_count() const override { return model_.topology.leaf_count(); }
  Eigen::VectorXd leaf_marginal(int a) override;
  Eigen::MatrixXd pair_conditional(int a, int b) override;
  Tensor3 triple_conditional(int a, int b, int c) override;
  Eigen::MatrixXd pair_joint(int a, int b) override;
  double data_scale() const override { return 0.0; }

 private:
  const MarkovTreeModel& model_;
  std::map<int, Eigen::VectorXd> marginal_cache_;
  std::map<std::pair<int, int>, Eigen::MatrixXd> joint_cache_;
  std::map<std::array<int, 3>, Tensor3> triple_cache_;
};

}  // namespace treespec
