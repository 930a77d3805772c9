#include <doctest.h>

#include "test_util.hpp"
#include "treespec/stats.hpp"

using namespace treespec;

namespace {

LeafSamples samples_from(const std::vector<std::vector<int>>& rows, int k) {
  LeafSamples s;
  s.m = int(rows.size());
  s.n = int(rows[0].size());
  s.k = k;
  for (const auto& row : rows) {
    for (int v : row) s.data.push_back(v);
  }
  return s;
}

}  // namespace

TEST_CASE("count estimators match hand counting") {
  LeafSamples s = samples_from({{0, 0}, {0, 0}, {1, 1}, {1, 0}}, 2);
  EmpiricalStats stats = empirical_stats(s, {{1, 2}}, {});
  CHECK(stats.pi_hat.at(1)(0) == doctest::Approx(0.5));
  CHECK(stats.pi_hat.at(1)(1) == doctest::Approx(0.5));
  const Eigen::MatrixXd& p = stats.pair_hat.at({1, 2});
  CHECK(p(0, 0) == doctest::Approx(1.0));
  CHECK(p(0, 1) == doctest::Approx(0.0));
  CHECK(p(1, 0) == doctest::Approx(0.5));
  CHECK(p(1, 1) == doctest::Approx(0.5));
}

TEST_CASE("strict mode rejects unseen conditioning states") {
  LeafSamples s = samples_from({{0, 1}, {0, 1}, {0, 0}}, 2);
  CHECK_THROWS_AS(empirical_stats(s, {{1, 2}}, {}, Strictness::strict),
                  TreespecError);
  EmpiricalStats lenient = empirical_stats(s, {{1, 2}}, {}, Strictness::lenient);
  CHECK(lenient.unobserved.size() == 1);
  CHECK(lenient.pair_hat.at({1, 2})(1, 0) == doctest::Approx(0.5));  // uniform row
}

TEST_CASE("count consistency holds on fuzzed samples") {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    int k = 2 + int(rng.next_u64() % 3);
    int n = 3 + int(rng.next_u64() % 3);
    int m = 40 + int(rng.next_u64() % 100);
    LeafSamples s;
    s.m = m;
    s.n = n;
    s.k = k;
    for (int i = 0; i < m * n; ++i) s.data.push_back(int(rng.next_u64() % k));
    EmpiricalStats stats =
        empirical_stats(s, {{1, 2}}, {{{1, 2, 3}}}, Strictness::lenient);
    const auto& pair = stats.pair_counts.at({1, 2});
    const auto& na = stats.leaf_counts.at(1);
    for (int i = 0; i < k; ++i) {
      CHECK(pair.row(i).sum() == na(i));
      double triple_sum_row = 0.0;
      for (int j = 0; j < k; ++j) {
        double over_gamma = 0.0;
        for (int g = 0; g < k; ++g) {
          over_gamma += stats.triple_counts.at({1, 2, 3}).at(i, j, g);
        }
        CHECK(over_gamma == doctest::Approx(double(pair(i, j))));
        triple_sum_row += over_gamma;
      }
      CHECK(triple_sum_row == doctest::Approx(double(na(i))));
      if (na(i) > 0) {
        CHECK(stats.pair_hat.at({1, 2}).row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("empirical provider agrees with the batch estimators") {
  SplitMix64 rng(5);
  MarkovTreeModel m = treespec::testing::random_model(make_caterpillar(4), 2, 0.3, 0.9, rng);
  LeafSamples s = sample_leaves(m, 2000, 11);
  EmpiricalStats batch = empirical_stats(s, {{1, 3}}, {{{1, 3, 4}}});
  EmpiricalStatsProvider provider(s, Strictness::strict);
  CHECK((provider.leaf_marginal(1) - batch.pi_hat.at(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((provider.pair_conditional(1, 3) - batch.pair_hat.at({1, 3}))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  Tensor3 t = provider.triple_conditional(1, 3, 4);
  const Tensor3& b = batch.triple_hat.at({1, 3, 4});
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int g = 0; g < 2; ++g) CHECK(t.at(i, j, g) == b.at(i, j, g));
    }
  }
  // joint frequencies sum to one
  CHECK(provider.pair_joint(1, 3).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exact provider reproduces brute-force conditionals") {
  SplitMix64 rng(9);
  MarkovTreeModel m =
      treespec::testing::random_model(make_caterpillar(4), 3, 0.3, 0.9, rng);
  ExactStatsProvider provider(m);
  std::vector<int> nodes{m.topology.node_of_label(2), m.topology.node_of_label(4),
                         m.topology.node_of_label(1)};
  auto joint = treespec::testing::brute_force_joint(m, nodes);
  Eigen::VectorXd pi = provider.leaf_marginal(2);
  Eigen::MatrixXd pair = provider.pair_conditional(2, 4);
  Tensor3 triple = provider.triple_conditional(2, 4, 1);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double pair_sum = 0.0;
      for (int g = 0; g < 3; ++g) {
        double expect = joint[(std::size_t(i) * 3 + j) * 3 + g] / pi(i);
        CHECK(triple.at(i, j, g) == doctest::Approx(expect).epsilon(1e-10));
        pair_sum += expect;
      }
      CHECK(pair(i, j) == doctest::Approx(pair_sum).epsilon(1e-10));
    }
    CHECK(pair.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(provider.data_scale() == 0.0);
}
