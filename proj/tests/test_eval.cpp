#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "treespec/eval.hpp"
#include "treespec/learner.hpp"

using namespace treespec;
using treespec::testing::random_model;

namespace {

// total variation between a model's leaf law (4-state alphabet) and the
// binary parity law, enumerating every leaf configuration
double tv_to_parity_law(const MarkovTreeModel& m, const JointTable& oracle, int n) {
  const int leaves = n + 1;
  std::vector<int> config(leaves, 0);
  double acc = 0.0;
  const std::size_t total = std::size_t(std::pow(4.0, leaves));
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    bool binary = true;
    for (int j = leaves - 1; j >= 0; --j) {
      config[j] = int(rem % 4);
      rem /= 4;
      binary = binary && config[j] < 2;
    }
    double p = leaf_likelihood(m, config);
    double q = 0.0;
    if (binary) {
      std::size_t bits = 0;
      for (int j = 0; j < leaves; ++j) bits = bits * 2 + config[j];
      q = oracle.p[bits];
    }
    acc += std::abs(p - q);
  }
  return acc / 2.0;
}

}  // namespace

TEST_CASE("total variation basics") {
  SplitMix64 rng(7);
  MarkovTreeModel m = random_model(make_caterpillar(4), 2, 0.35, 0.9, rng);
  SUBCASE("a model has distance zero to itself") {
    TvResult tv = tv_leaf_distance(m, m);
    CHECK(tv.half_l1 == doctest::Approx(0.0));
    CHECK(tv.raw_l1 == doctest::Approx(0.0));
  }
  SUBCASE("internal relabelings are invisible at the leaves") {
    int internal = -1;
    for (int v = 0; v < m.topology.node_count; ++v) {
      if (!m.topology.is_leaf(v)) internal = v;
    }
    MarkovTreeModel swapped = permute_internal_states(m, internal, {1, 0});
    CHECK(tv_leaf_distance(m, swapped).half_l1 < 1e-12);
  }
  SUBCASE("disjoint point masses are at distance one") {
    MarkovTreeModel a;
    a.topology = make_caterpillar(2);
    a.k = 2;
    a.root = 0;
    a.root_dist = Eigen::VectorXd::Zero(2);
    a.root_dist(0) = 1.0;
    a.edge_matrix.emplace(std::make_pair(0, 1),
                          TransitionMatrix::make(Eigen::MatrixXd::Identity(2, 2)));
    MarkovTreeModel b = a;
    b.root_dist << 0.0, 1.0;
    TvResult tv = tv_leaf_distance(a, b);
    CHECK(tv.half_l1 == doctest::Approx(1.0));
    CHECK(tv.raw_l1 == doctest::Approx(2.0));
  }
  SUBCASE("budget overrun throws and the sampled path takes over") {
    MarkovTreeModel big = random_model(make_caterpillar(8), 3, 0.35, 0.9, rng);
    CHECK_THROWS_AS(tv_leaf_distance(big, big, 100), TreespecError);
    SampledTv tv = tv_leaf_sampled(m, m, 2000, 3);
    CHECK(tv.half_l1 == doctest::Approx(0.0));
  }
  SUBCASE("sampled estimate brackets the exact value") {
    MarkovTreeModel other = random_model(make_caterpillar(4), 2, 0.35, 0.9, rng);
    TvResult exact = tv_leaf_distance(m, other);
    SampledTv approx = tv_leaf_sampled(m, other, 40000, 9);
    CHECK(std::abs(approx.half_l1 - exact.half_l1) <= approx.band + 0.01);
  }
}

TEST_CASE("total variation behaves like a metric on leaf laws") {
  SplitMix64 rng(11);
  MarkovTreeModel a = random_model(make_caterpillar(4), 2, 0.35, 0.9, rng);
  MarkovTreeModel b = random_model(make_caterpillar(4), 2, 0.35, 0.9, rng);
  MarkovTreeModel c = random_model(make_caterpillar(4), 2, 0.35, 0.9, rng);
  double ab = tv_leaf_distance(a, b).half_l1;
  double ba = tv_leaf_distance(b, a).half_l1;
  double ac = tv_leaf_distance(a, c).half_l1;
  double cb = tv_leaf_distance(c, b).half_l1;
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  CHECK(ab <= ac + cb + 1e-12);
}

TEST_CASE("alignment recovers planted relabelings") {
  SplitMix64 rng(13);
  MarkovTreeModel truth = random_model(make_balanced_binary(4), 3, 0.35, 0.9, rng);
  SUBCASE("identical models align with identity permutations") {
    AlignmentReport report = align_labels(truth, truth);
    CHECK(report.max_l1 == doctest::Approx(0.0));
    for (const auto& [node, perm] : report.per_node_perm) {
      for (int i = 0; i < 3; ++i) CHECK(perm[i] == i);
    }
  }
  SUBCASE("a single planted swap is found and costs nothing") {
    int internal = -1;
    for (int v = 0; v < truth.topology.node_count; ++v) {
      if (!truth.topology.is_leaf(v)) internal = v;
    }
    MarkovTreeModel est = permute_internal_states(truth, internal, {1, 2, 0});
    AlignmentReport report = align_labels(est, truth);
    CHECK(report.max_l1 < 1e-12);
    bool nontrivial = false;
    for (int i = 0; i < 3; ++i) {
      if (report.per_node_perm.at(internal)[i] != i) nontrivial = true;
    }
    CHECK(nontrivial);
  }
  SUBCASE("different topologies are refused") {
    MarkovTreeModel other =
        random_model(parse_newick("((1,3)a,(2,4)b)r;"), 3, 0.35, 0.9, rng);
    try {
      align_labels(other, truth);
      CHECK(false);
    } catch (const TreespecError& e) {
      CHECK(e.kind() == ErrorKind::TopologyMismatch);
    }
  }
}

TEST_CASE("parity model: structure and exact law") {
  SUBCASE("single marked bit, no noise: the label copies the bit") {
    ParitySpec spec{1, {1}, 0.0};
    MarkovTreeModel m = parity_hmm(spec);
    std::vector<int> config(2);
    for (int b = 0; b < 2; ++b) {
      config[0] = b;
      config[1] = b;
      CHECK(leaf_likelihood(m, config) == doctest::Approx(0.5));
      config[1] = 1 - b;
      CHECK(leaf_likelihood(m, config) == doctest::Approx(0.0));
    }
  }
  SUBCASE("exact law matches the oracle") {
    for (int n : {2, 3, 5}) {
      std::vector<std::vector<int>> subsets = {{1}, {1, n}, {n}};
      for (const auto& t_set : subsets) {
        for (double alpha : {0.0, 0.1, 0.25}) {
          ParitySpec spec{n, t_set, alpha};
          MarkovTreeModel m = parity_hmm(spec);
          JointTable oracle = noisy_parity_oracle(spec);
          std::vector<int> config(n + 1);
          double mass = 0.0;
          for (std::size_t idx = 0; idx < oracle.p.size(); ++idx) {
            for (int j = 0; j <= n; ++j) config[j] = int(idx >> (n - j)) & 1;
            double p = leaf_likelihood(m, config);
            mass += p;
            CHECK(p == doctest::Approx(oracle.p[idx]).epsilon(1e-12));
          }
          // all mass lives on binary configurations
          CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
        }
      }
    }
  }
  SUBCASE("all matrices are rank two with determinant zero") {
    ParitySpec spec{4, {1, 3}, 0.1};
    MarkovTreeModel m = parity_hmm(spec);
    validate_topology(m.topology, TreeMode::caterpillar);
    validate_topology(m.topology, TreeMode::binary);
    for (const auto& [key, mat] : m.edge_matrix) {
      CHECK(mat.det_abs == doctest::Approx(0.0));
      Eigen::FullPivLU<Eigen::MatrixXd> lu(mat.p);
      CHECK(lu.rank() == 2);
    }
  }
  SUBCASE("spec validation") {
    CHECK_THROWS_AS(validate_parity_spec(ParitySpec{3, {}, 0.1}), TreespecError);
    CHECK_THROWS_AS(validate_parity_spec(ParitySpec{3, {1}, 0.5}), TreespecError);
    CHECK_THROWS_AS(validate_parity_spec(ParitySpec{3, {4}, 0.1}), TreespecError);
    validate_parity_spec(ParitySpec{3, {1, 3}, 0.0});
  }
}

TEST_CASE("noisy parity oracle on hand cases") {
  SUBCASE("no noise is the deterministic parity law") {
    ParitySpec spec{2, {1, 2}, 0.0};
    JointTable table = noisy_parity_oracle(spec);
    // (x1,x2,label): mass 1/4 iff label == x1 xor x2
    CHECK(table.p[0b000] == doctest::Approx(0.25));
    CHECK(table.p[0b001] == doctest::Approx(0.0));
    CHECK(table.p[0b011] == doctest::Approx(0.25));
    CHECK(table.p[0b101] == doctest::Approx(0.25));
    CHECK(table.p[0b110] == doctest::Approx(0.25));
    CHECK(table.p[0b111] == doctest::Approx(0.0));
  }
  SUBCASE("quarter noise splits the mass") {
    ParitySpec spec{2, {1, 2}, 0.25};
    JointTable table = noisy_parity_oracle(spec);
    CHECK(table.p[0b000] == doctest::Approx(0.25 * 0.75).epsilon(1e-15));
    CHECK(table.p[0b001] == doctest::Approx(0.25 * 0.25).epsilon(1e-15));
  }
}

TEST_CASE("smoothed parity models") {
  ParitySpec spec{3, {1, 3}, 0.1};
  SUBCASE("full mixing gives identity matrices") {
    MarkovTreeModel m = smoothed_parity_model(spec, 1.0);
    for (const auto& [key, mat] : m.edge_matrix) {
      CHECK((mat.p - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-15);
    }
  }
  SUBCASE("half mixing restores positive determinants and marginals") {
    MarkovTreeModel m = smoothed_parity_model(spec, 0.5);
    for (const auto& [key, mat] : m.edge_matrix) CHECK(mat.det_abs > 0.0);
    for (int v = 0; v < m.topology.node_count; ++v) {
      CHECK(stationary_at(m, v).minCoeff() > 0.0);
    }
  }
  SUBCASE("the leaf law approaches the parity law as mixing vanishes") {
    ParitySpec small{4, {2, 4}, 0.1};
    JointTable oracle = noisy_parity_oracle(small);
    double prev = std::numeric_limits<double>::infinity();
    for (double tau : {0.8, 0.6, 0.4, 0.2, 0.1}) {
      double tv = tv_to_parity_law(smoothed_parity_model(small, tau), oracle, small.n);
      CHECK(tv < prev + 1e-12);
      prev = tv;
    }
    CHECK(prev < 0.35);
  }
}

TEST_CASE("smoothed parity is learnable, unsmoothed fails loudly") {
  ParitySpec spec{3, {1, 3}, 0.1};
  SUBCASE("tau >= 0.5 learns to high accuracy in exact mode") {
    for (double tau : {0.5, 0.75}) {
      MarkovTreeModel m = smoothed_parity_model(spec, tau);
      ExactStatsProvider stats(m);
      LearnerConfig cfg;
      cfg.strictness = Strictness::strict;
      ReconstructionResult result = fullrecon(m.topology, stats, cfg);
      AlignmentReport alignment = align_labels(result.model, m);
      CAPTURE(tau);
      CHECK(alignment.max_l1 < 1e-6);
    }
  }
  SUBCASE("the singular corpus raises a conditioning or separation error") {
    MarkovTreeModel m = parity_hmm(spec);
    ExactStatsProvider stats(m);
    LearnerConfig cfg;
    cfg.strictness = Strictness::strict;
    try {
      fullrecon(m.topology, stats, cfg);
      CHECK(false);
    } catch (const TreespecError& e) {
      CHECK((e.kind() == ErrorKind::IllConditionedPair ||
             e.kind() == ErrorKind::SeparationFailure ||
             e.kind() == ErrorKind::NonRealSpectrum ||
             e.kind() == ErrorKind::UnobservedState ||
             e.kind() == ErrorKind::IllConditionedFactor ||
             e.kind() == ErrorKind::MarginalDegenerate));
    }
  }
}
