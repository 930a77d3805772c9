#include "treespec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "treespec/spectral.hpp"

namespace treespec {

namespace {

void check_comparable(const MarkovTreeModel& m1, const MarkovTreeModel& m2) {
  if (m1.k != m2.k) fail(ErrorKind::TopologyMismatch, "state spaces differ");
  if (m1.topology.leaf_count() != m2.topology.leaf_count()) {
    fail(ErrorKind::TopologyMismatch, "leaf sets differ");
  }
}

}  // namespace

TvResult tv_leaf_distance(const MarkovTreeModel& m1, const MarkovTreeModel& m2,
                          std::int64_t budget) {
  check_comparable(m1, m2);
  std::vector<int> nodes1, nodes2;
  for (int j = 1; j <= m1.topology.leaf_count(); ++j) {
    nodes1.push_back(m1.topology.node_of_label(j));
    nodes2.push_back(m2.topology.node_of_label(j));
  }
  JointTable t1 = exact_joint(m1, nodes1, budget);
  JointTable t2 = exact_joint(m2, nodes2, budget);
  double raw = 0.0;
  for (std::size_t i = 0; i < t1.p.size(); ++i) raw += std::abs(t1.p[i] - t2.p[i]);
  return TvResult{raw / 2.0, raw};
}

SampledTv tv_leaf_sampled(const MarkovTreeModel& m1, const MarkovTreeModel& m2,
                          int draws, std::uint64_t seed) {
  check_comparable(m1, m2);
  if (draws <= 0) fail(ErrorKind::InvalidArgument, "need draws > 0");
  LeafSamples samples = sample_leaves(m1, draws, seed);
  std::vector<int> config(samples.n);
  double sum = 0.0, sum_sq = 0.0;
  for (int r = 0; r < draws; ++r) {
    for (int j = 0; j < samples.n; ++j) config[j] = samples.at(r, j);
    double p1 = leaf_likelihood(m1, config);
    double p2 = leaf_likelihood(m2, config);
    double h = (p1 > 0.0) ? std::max(0.0, 1.0 - p2 / p1) : 0.0;
    sum += h;
    sum_sq += h * h;
  }
  SampledTv out;
  out.draws = draws;
  out.half_l1 = sum / draws;
  double var = std::max(0.0, sum_sq / draws - out.half_l1 * out.half_l1);
  out.band = 4.0 * std::sqrt(var / draws);
  return out;
}

namespace {

std::vector<std::vector<int>> all_permutations(int k) {
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

}  // namespace

AlignmentReport align_labels(const MarkovTreeModel& est,
                             const MarkovTreeModel& truth) {
  check_comparable(est, truth);
  if (est.k > 6) fail(ErrorKind::InvalidArgument, "alignment search caps at k = 6");
  auto iso = leaf_isomorphism(truth.topology, est.topology);
  if (!iso) fail(ErrorKind::TopologyMismatch, "topologies are not isomorphic");

  const int anchor = truth.topology.node_of_label(1);
  MarkovTreeModel truth_r, est_r;
  try {
    truth_r = reroot(truth, anchor);
    est_r = reroot(est, est.topology.node_of_label(1));
  } catch (const TreespecError& e) {
    fail(e.kind(), std::string("alignment needs rerootable models: ") + e.what());
  }

  const int k = est.k;
  const auto& t = truth.topology;
  const auto perms = all_permutations(k);
  // truth node -> permutation g with g[truth label] = est label
  std::map<int, std::vector<int>> g;
  std::vector<int> identity(k);
  std::iota(identity.begin(), identity.end(), 0);
  for (int leaf : t.leaf_nodes) g[leaf] = identity;

  AlignmentReport report;
  auto aligned_est = [&](int u, int v) {
    // est's matrix on the truth edge (u,v), rows/cols mapped back to truth labels
    const Eigen::MatrixXd& e = est_r.matrix((*iso)[u], (*iso)[v]).p;
    const std::vector<int>& gu = g.at(u);
    const std::vector<int>& gv = g.at(v);
    Eigen::MatrixXd out(k, k);
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j) out(i, j) = e(gu[i], gv[j]);
    }
    return out;
  };

  // BFS outward from the anchor leaf; each internal node's permutation
  // minimizes the error of the edge that first reaches it
  std::vector<int> order;
  {
    auto dist = t.bfs_distances(anchor);
    std::vector<std::pair<int, int>> by_dist;
    for (int v = 0; v < t.node_count; ++v) by_dist.emplace_back(dist[v], v);
    std::sort(by_dist.begin(), by_dist.end());
    for (auto [d, v] : by_dist) order.push_back(v);
  }
  auto parent_of = [&](int v) {
    auto path = t.path_between(anchor, v);
    return path[path.size() - 2];
  };
  for (int v : order) {
    if (v == anchor || g.count(v)) continue;
    int u = parent_of(v);
    const Eigen::MatrixXd& truth_p = truth_r.matrix(u, v).p;
    const Eigen::MatrixXd& est_p = est_r.matrix((*iso)[u], (*iso)[v]).p;
    const std::vector<int>& gu = g.at(u);
    double best_err = -1.0;
    std::vector<int> best_perm;
    for (const auto& perm : perms) {
      Eigen::MatrixXd aligned(k, k);
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) aligned(i, j) = est_p(gu[i], perm[j]);
      }
      double err = l1_norm(Eigen::MatrixXd(aligned - truth_p));
      if (best_err < 0.0 || err < best_err) {
        best_err = err;
        best_perm = perm;
      }
    }
    g[v] = best_perm;
  }

  for (int v = 0; v < t.node_count; ++v) {
    if (!t.is_leaf(v)) report.per_node_perm[v] = g.at(v);
  }
  auto dist = t.bfs_distances(anchor);
  for (auto [a, b] : t.edges()) {
    int u = (dist[a] < dist[b]) ? a : b;
    int v = (u == a) ? b : a;
    double err = l1_norm(Eigen::MatrixXd(aligned_est(u, v) - truth_r.matrix(u, v).p));
    report.per_edge_l1[{u, v}] = err;
    report.max_l1 = std::max(report.max_l1, err);
  }
  return report;
}

void validate_parity_spec(const ParitySpec& spec) {
  if (spec.n < 1) fail(ErrorKind::InvalidArgument, "parity needs n >= 1");
  if (spec.t_set.empty()) fail(ErrorKind::InvalidArgument, "parity subset is empty");
  int prev = 0;
  for (int i : spec.t_set) {
    if (i <= prev || i > spec.n) {
      fail(ErrorKind::InvalidArgument, "parity subset must be sorted within 1..n");
    }
    prev = i;
  }
  if (!(spec.alpha >= 0.0 && spec.alpha < 0.5)) {
    fail(ErrorKind::InvalidArgument, "noise rate must lie in [0, 1/2)");
  }
}

namespace {

bool in_set(const std::vector<int>& t_set, int i) {
  return std::binary_search(t_set.begin(), t_set.end(), i);
}

// hidden alphabet: state 2x + s encodes (bit x, partial sum s)
Eigen::MatrixXd parity_chain_matrix(bool count_next) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(4, 4);
  for (int x = 0; x < 2; ++x) {
    for (int s = 0; s < 2; ++s) {
      for (int xn = 0; xn < 2; ++xn) {
        int sn = s ^ (count_next ? xn : 0);
        p(2 * x + s, 2 * xn + sn) += 0.5;
      }
    }
  }
  return p;
}

Eigen::MatrixXd parity_first_matrix(bool count_first, bool count_second) {
  // from the observed first bit (states 0/1; 2/3 unreachable, defined by the
  // low bit) to the second hidden pair
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(4, 4);
  for (int s = 0; s < 4; ++s) {
    int x1 = s & 1;
    int s1 = count_first ? x1 : 0;
    for (int xn = 0; xn < 2; ++xn) {
      int sn = s1 ^ (count_second ? xn : 0);
      p(s, 2 * xn + sn) += 0.5;
    }
  }
  return p;
}

Eigen::MatrixXd parity_emission_matrix() {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(4, 4);
  for (int x = 0; x < 2; ++x) {
    for (int s = 0; s < 2; ++s) p(2 * x + s, x) = 1.0;
  }
  return p;
}

Eigen::MatrixXd parity_label_matrix(double alpha) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(4, 4);
  for (int x = 0; x < 2; ++x) {
    for (int s = 0; s < 2; ++s) {
      p(2 * x + s, s) = 1.0 - alpha;
      p(2 * x + s, 1 - s) = alpha;
    }
  }
  return p;
}

Eigen::MatrixXd parity_direct_label_matrix(const ParitySpec& spec) {
  // n = 1: the label hangs directly off the observed bit
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(4, 4);
  for (int s = 0; s < 4; ++s) {
    int phi = in_set(spec.t_set, 1) ? (s & 1) : 0;
    p(s, phi) = 1.0 - spec.alpha;
    p(s, 1 - phi) = spec.alpha;
  }
  return p;
}

}  // namespace

MarkovTreeModel parity_hmm(const ParitySpec& spec) {
  validate_parity_spec(spec);
  const int n = spec.n;
  MarkovTreeModel model;
  model.k = 4;
  Eigen::VectorXd root(4);
  root << 0.5, 0.5, 0.0, 0.0;
  model.root_dist = root;

  TreeTopology t;
  if (n == 1) {
    t.node_count = 2;
    t.adj.assign(2, {});
    t.node_names = {"1", "2"};
    t.leaf_nodes = {0, 1};
    t.add_edge(0, 1);
    model.topology = t;
    model.root = 0;
    model.edge_matrix.emplace(std::make_pair(0, 1),
                              TransitionMatrix::make(parity_direct_label_matrix(spec)));
    return model;
  }

  // leaves 0..n carry labels 1..n+1 (bits, then the parity output); hidden
  // pair nodes h_2..h_n sit at ids n+1..2n-1
  t.node_count = 2 * n;
  t.adj.assign(t.node_count, {});
  t.node_names.resize(t.node_count);
  t.leaf_nodes.resize(n + 1);
  for (int j = 0; j <= n; ++j) {
    t.leaf_nodes[j] = j;
    t.node_names[j] = std::to_string(j + 1);
  }
  auto hidden = [&](int i) { return n + i - 1; };  // i in 2..n
  for (int i = 2; i <= n; ++i) t.node_names[hidden(i)] = "h" + std::to_string(i);
  t.add_edge(0, hidden(2));
  for (int i = 2; i < n; ++i) t.add_edge(hidden(i), hidden(i + 1));
  for (int i = 2; i <= n; ++i) t.add_edge(i - 1, hidden(i));
  t.add_edge(n, hidden(n));
  model.topology = t;
  model.root = 0;

  auto add = [&](int u, int v, const Eigen::MatrixXd& p) {
    model.edge_matrix.emplace(std::make_pair(u, v), TransitionMatrix::make(p));
  };
  add(0, hidden(2), parity_first_matrix(in_set(spec.t_set, 1), in_set(spec.t_set, 2)));
  for (int i = 2; i < n; ++i) {
    add(hidden(i), hidden(i + 1), parity_chain_matrix(in_set(spec.t_set, i + 1)));
  }
  for (int i = 2; i <= n; ++i) add(hidden(i), i - 1, parity_emission_matrix());
  add(hidden(n), n, parity_label_matrix(spec.alpha));
  return model;
}

JointTable noisy_parity_oracle(const ParitySpec& spec) {
  validate_parity_spec(spec);
  if (spec.n > 24) {
    fail(ErrorKind::BudgetExceeded, "oracle enumeration caps at n = 24");
  }
  JointTable table;
  table.k = 2;
  table.nodes.resize(spec.n + 1);
  std::iota(table.nodes.begin(), table.nodes.end(), 0);
  const std::size_t total = std::size_t(1) << (spec.n + 1);
  table.p.assign(total, 0.0);
  const double base = std::ldexp(1.0, -spec.n);  // uniform bits
  for (std::size_t idx = 0; idx < total; ++idx) {
    int label = int(idx & 1);
    int phi = 0;
    for (int i : spec.t_set) {
      phi ^= int(idx >> (spec.n + 1 - i)) & 1;
    }
    table.p[idx] = base * (label == phi ? 1.0 - spec.alpha : spec.alpha);
  }
  return table;
}

MarkovTreeModel smoothed_parity_model(const ParitySpec& spec, double tau_mix) {
  if (!(tau_mix > 0.0 && tau_mix <= 1.0)) {
    fail(ErrorKind::InvalidArgument, "mixing weight must lie in (0, 1]");
  }
  MarkovTreeModel model = parity_hmm(spec);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(4, 4);
  for (auto& [key, mat] : model.edge_matrix) {
    mat = TransitionMatrix::make((1.0 - tau_mix) * mat.p + tau_mix * eye);
  }
  // the root also needs full support, otherwise downstream marginals stay
  // degenerate no matter how the matrices are mixed
  model.root_dist = (1.0 - tau_mix) * model.root_dist +
                    tau_mix * Eigen::VectorXd::Constant(4, 0.25);
  return model;
}

}  // namespace treespec
