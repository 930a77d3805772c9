#include "treespec/model.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace treespec {

namespace {

constexpr double kRowSumTol = 1e-12;

double abs_det(const Eigen::MatrixXd& m) {
  return std::abs(Eigen::PartialPivLU<Eigen::MatrixXd>(m).determinant());
}

// scrub floating-point dust off rows that are stochastic by construction
Eigen::MatrixXd stochastic_rows(Eigen::MatrixXd m) {
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      if (m(i, j) < 0.0 && m(i, j) > -1e-12) m(i, j) = 0.0;
    }
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

}  // namespace

TransitionMatrix TransitionMatrix::make(Eigen::MatrixXd rows) {
  if (rows.rows() != rows.cols() || rows.rows() < 2) {
    fail(ErrorKind::InvalidArgument, "transition matrix must be square, k >= 2");
  }
  for (int i = 0; i < rows.rows(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < rows.cols(); ++j) {
      if (rows(i, j) < 0.0) {
        fail(ErrorKind::InvalidArgument, "transition matrix has a negative entry");
      }
      sum += rows(i, j);
    }
    if (std::abs(sum - 1.0) > kRowSumTol) {
      fail(ErrorKind::InvalidArgument,
           "transition matrix row " + std::to_string(i) + " sums to " +
               std::to_string(sum));
    }
  }
  TransitionMatrix t;
  t.det_abs = abs_det(rows);
  t.p = std::move(rows);
  return t;
}

bool MarkovTreeModel::has_matrix(int u, int v) const {
  return edge_matrix.count({u, v}) > 0;
}

const TransitionMatrix& MarkovTreeModel::matrix(int u, int v) const {
  auto it = edge_matrix.find({u, v});
  if (it == edge_matrix.end()) {
    fail(ErrorKind::InvalidArgument,
         "no matrix for directed edge (" + topology.node_names[u] + "," +
             topology.node_names[v] + ")");
  }
  return it->second;
}

void validate_structure(const MarkovTreeModel& m) {
  const auto& t = m.topology;
  if (t.node_count < 2) fail(ErrorKind::InvalidArgument, "empty topology");
  if (m.k < 2) fail(ErrorKind::InvalidArgument, "state space needs k >= 2");
  if (m.root < 0 || m.root >= t.node_count) {
    fail(ErrorKind::InvalidArgument, "root out of range");
  }
  if (int(m.root_dist.size()) != m.k) {
    fail(ErrorKind::InvalidArgument, "root distribution has wrong length");
  }
  double sum = 0.0;
  for (int i = 0; i < m.k; ++i) {
    if (m.root_dist(i) < 0.0) {
      fail(ErrorKind::InvalidArgument, "root distribution has a negative entry");
    }
    sum += m.root_dist(i);
  }
  if (std::abs(sum - 1.0) > kRowSumTol) {
    fail(ErrorKind::InvalidArgument, "root distribution must sum to 1");
  }
  // edge set must be exactly the tree's edges, oriented away from the root
  auto dist = t.bfs_distances(m.root);
  int edges_seen = 0;
  for (const auto& [key, mat] : m.edge_matrix) {
    auto [u, v] = key;
    if (!t.has_edge(u, v) || dist[u] + 1 != dist[v]) {
      fail(ErrorKind::InvalidArgument, "edge matrix not oriented away from root");
    }
    if (mat.k() != m.k) fail(ErrorKind::InvalidArgument, "edge matrix has wrong k");
    ++edges_seen;
  }
  if (edges_seen != t.edge_count()) {
    fail(ErrorKind::InvalidArgument, "every edge needs a transition matrix");
  }
  for (int v = 0; v < t.node_count; ++v) {
    if (dist[v] < 0) fail(ErrorKind::InvalidArgument, "topology is disconnected");
  }
}

ValidationReport validate_model(const MarkovTreeModel& m, const ModelConfig& cfg) {
  validate_structure(m);
  if (!(cfg.beta > 0.0) || !(cfg.beta_prime >= 0.0 && cfg.beta_prime < 1.0) ||
      !(cfg.sigma > 0.0 && cfg.sigma < 1.0 / m.k)) {
    fail(ErrorKind::InvalidArgument,
         "thresholds need 0 < beta, 0 <= beta_prime < 1, 0 < sigma < 1/k");
  }
  ValidationReport report;
  report.pass = true;
  for (const auto& [key, mat] : m.edge_matrix) {
    EdgeCheck e;
    e.u = key.first;
    e.v = key.second;
    e.det_abs = mat.det_abs;
    e.ok = (e.det_abs > cfg.beta) && (e.det_abs <= 1.0 - cfg.beta_prime);
    report.pass = report.pass && e.ok;
    report.edges.push_back(e);
  }
  for (int v = 0; v < m.topology.node_count; ++v) {
    NodeCheck nc;
    nc.v = v;
    nc.min_marginal = stationary_at(m, v).minCoeff();
    nc.ok = nc.min_marginal > cfg.sigma;
    report.pass = report.pass && nc.ok;
    report.nodes.push_back(nc);
  }
  return report;
}

Eigen::VectorXd stationary_at(const MarkovTreeModel& m, int v) {
  auto path = m.topology.path_between(m.root, v);
  Eigen::VectorXd pi = m.root_dist;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    pi = m.matrix(path[i], path[i + 1]).p.transpose() * pi;
  }
  return pi;
}

Eigen::MatrixXd bayes_reverse(const Eigen::MatrixXd& p_uv,
                              const Eigen::VectorXd& pi_u,
                              const Eigen::VectorXd& pi_v) {
  const int k = int(p_uv.rows());
  for (int i = 0; i < k; ++i) {
    if (!(pi_v(i) > 0.0)) {
      fail(ErrorKind::ZeroMarginal,
           "cannot reverse through a nonpositive marginal entry");
    }
  }
  Eigen::MatrixXd out(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      out(i, j) = pi_u(j) * p_uv(j, i) / pi_v(i);
    }
  }
  // exact inputs give unit row sums already; estimated marginals may be
  // slightly inconsistent, so renormalize
  for (int i = 0; i < k; ++i) {
    double sum = out.row(i).sum();
    if (!(std::abs(sum) > 1e-12)) {
      fail(ErrorKind::ZeroMarginal, "reversed row has vanishing mass");
    }
    out.row(i) /= sum;
  }
  return out;
}

MarkovTreeModel reroot(const MarkovTreeModel& m, int new_root) {
  if (new_root == m.root) return m;
  const auto& t = m.topology;
  std::vector<Eigen::VectorXd> marg(t.node_count);
  for (int v = 0; v < t.node_count; ++v) marg[v] = stationary_at(m, v);

  MarkovTreeModel out;
  out.topology = t;
  out.k = m.k;
  out.root = new_root;
  out.root_dist = marg[new_root];
  auto dist = t.bfs_distances(new_root);
  for (auto [a, b] : t.edges()) {
    int u = (dist[a] < dist[b]) ? a : b;  // parent in the new orientation
    int v = (u == a) ? b : a;
    if (m.has_matrix(u, v)) {
      out.edge_matrix.emplace(std::make_pair(u, v), m.matrix(u, v));
    } else {
      Eigen::MatrixXd rev;
      try {
        rev = bayes_reverse(m.matrix(v, u).p, marg[v], marg[u]);
      } catch (const TreespecError& e) {
        fail(ErrorKind::SingularModel,
             "rerooting requires positive marginals on edge (" +
                 t.node_names[v] + "," + t.node_names[u] + ")");
      }
      out.edge_matrix.emplace(std::make_pair(u, v),
                              TransitionMatrix::make(stochastic_rows(rev)));
    }
  }
  return out;
}

TransitionMatrix path_transition(const MarkovTreeModel& m, int u, int v) {
  if (u == v) fail(ErrorKind::InvalidArgument, "path transition needs u != v");
  auto path = m.topology.path_between(u, v);
  std::vector<Eigen::VectorXd> marg;
  Eigen::MatrixXd prod = Eigen::MatrixXd::Identity(m.k, m.k);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    int x = path[i], y = path[i + 1];
    if (m.has_matrix(x, y)) {
      prod = prod * m.matrix(x, y).p;
    } else {
      prod = prod * bayes_reverse(m.matrix(y, x).p, stationary_at(m, y),
                                  stationary_at(m, x));
    }
  }
  return TransitionMatrix::make(stochastic_rows(prod));
}

LeafSamples sample_leaves(const MarkovTreeModel& m, int count, std::uint64_t seed) {
  validate_structure(m);
  const auto& t = m.topology;
  // edges in BFS order from the root; fixed order makes draws reproducible
  std::vector<std::pair<int, int>> order;
  {
    std::vector<bool> seen(t.node_count, false);
    std::deque<int> queue{m.root};
    seen[m.root] = true;
    while (!queue.empty()) {
      int u = queue.front();
      queue.pop_front();
      for (int v : t.adj[u]) {
        if (!seen[v]) {
          seen[v] = true;
          order.emplace_back(u, v);
          queue.push_back(v);
        }
      }
    }
  }
  LeafSamples samples;
  samples.m = count;
  samples.n = t.leaf_count();
  samples.k = m.k;
  samples.data.resize(std::size_t(count) * samples.n);
  std::vector<int> state(t.node_count);
  std::vector<double> root_cdf(m.k);
  std::partial_sum(m.root_dist.data(), m.root_dist.data() + m.k, root_cdf.begin());
  auto draw = [&](SplitMix64& rng, const double* cdf) {
    double r = rng.next_unit();
    for (int s = 0; s < m.k; ++s) {
      if (r < cdf[s]) return s;
    }
    return m.k - 1;
  };
  // cumulative rows per edge, transposed so each parent's cdf is a
  // contiguous column
  std::vector<Eigen::MatrixXd> cdfs;
  cdfs.reserve(order.size());
  for (auto [u, v] : order) {
    Eigen::MatrixXd c = m.matrix(u, v).p.transpose();
    for (int i = 0; i < m.k; ++i) {
      for (int j = 1; j < m.k; ++j) c(j, i) += c(j - 1, i);
    }
    cdfs.push_back(std::move(c));
  }
  for (int i = 0; i < count; ++i) {
    SplitMix64 rng = SplitMix64::substream(seed, std::uint64_t(i));
    state[m.root] = draw(rng, root_cdf.data());
    for (std::size_t e = 0; e < order.size(); ++e) {
      auto [u, v] = order[e];
      state[v] = draw(rng, cdfs[e].col(state[u]).data());
    }
    for (int j = 0; j < samples.n; ++j) {
      samples.data[std::size_t(i) * samples.n + j] = state[t.leaf_nodes[j]];
    }
  }
  return samples;
}

double JointTable::at(std::span<const int> states) const {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < states.size(); ++i) idx = idx * k + states[i];
  return p[idx];
}

JointTable JointTable::marginalize_out(int node) const {
  auto pos_it = std::find(nodes.begin(), nodes.end(), node);
  if (pos_it == nodes.end()) fail(ErrorKind::InvalidArgument, "node not in table");
  int pos = int(pos_it - nodes.begin());
  JointTable out;
  out.k = k;
  out.nodes = nodes;
  out.nodes.erase(out.nodes.begin() + pos);
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < pos; ++i) outer *= k;
  for (int i = pos + 1; i < int(nodes.size()); ++i) inner *= k;
  out.p.assign(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (int s = 0; s < k; ++s) {
      for (std::size_t in = 0; in < inner; ++in) {
        out.p[o * inner + in] += p[(o * k + s) * inner + in];
      }
    }
  }
  return out;
}

double JointTable::sum() const {
  double total = 0.0;
  for (double x : p) total += x;
  return total;
}

namespace {

// table over (state of v) x (assignments of the query nodes met so far in
// v's subtree, in `qnodes` order, last index fastest)
struct SubtreeTable {
  std::vector<int> qnodes;
  std::vector<double> vals;
};

SubtreeTable joint_rec(const MarkovTreeModel& m, int v, int parent,
                       const std::vector<bool>& in_query) {
  const int k = m.k;
  SubtreeTable table;
  if (in_query[v]) {
    table.qnodes = {v};
    table.vals.assign(std::size_t(k) * k, 0.0);
    for (int s = 0; s < k; ++s) table.vals[std::size_t(s) * k + s] = 1.0;
  } else {
    table.vals.assign(k, 1.0);
  }
  for (int c : m.topology.adj[v]) {
    if (c == parent) continue;
    SubtreeTable child = joint_rec(m, c, v, in_query);
    if (child.qnodes.empty()) continue;  // stochastic rows integrate to one
    const std::size_t qc = child.vals.size() / k;
    // message from the child: sum over its state against the edge matrix
    const Eigen::MatrixXd& p = m.matrix(v, c).p;
    std::vector<double> msg(std::size_t(k) * qc, 0.0);
    for (int sv = 0; sv < k; ++sv) {
      for (int sc = 0; sc < k; ++sc) {
        const double w = p(sv, sc);
        if (w == 0.0) continue;
        const double* src = child.vals.data() + std::size_t(sc) * qc;
        double* dst = msg.data() + std::size_t(sv) * qc;
        for (std::size_t q = 0; q < qc; ++q) dst[q] += w * src[q];
      }
    }
    const std::size_t qo = table.vals.size() / k;
    std::vector<double> merged(std::size_t(k) * qo * qc);
    for (int sv = 0; sv < k; ++sv) {
      for (std::size_t a = 0; a < qo; ++a) {
        const double base = table.vals[std::size_t(sv) * qo + a];
        const double* mrow = msg.data() + std::size_t(sv) * qc;
        double* dst = merged.data() + (std::size_t(sv) * qo + a) * qc;
        for (std::size_t b = 0; b < qc; ++b) dst[b] = base * mrow[b];
      }
    }
    table.vals = std::move(merged);
    table.qnodes.insert(table.qnodes.end(), child.qnodes.begin(),
                        child.qnodes.end());
  }
  return table;
}

}  // namespace

JointTable exact_joint(const MarkovTreeModel& m, const std::vector<int>& nodes,
                       std::int64_t budget) {
  if (nodes.empty()) fail(ErrorKind::InvalidArgument, "empty query");
  std::vector<bool> in_query(m.topology.node_count, false);
  for (int v : nodes) {
    if (v < 0 || v >= m.topology.node_count || in_query[v]) {
      fail(ErrorKind::InvalidArgument, "query nodes must be distinct and in range");
    }
    in_query[v] = true;
  }
  std::int64_t cells = 1;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    cells *= m.k;
    if (cells > budget) {
      fail(ErrorKind::BudgetExceeded,
           "joint table would exceed " + std::to_string(budget) + " entries");
    }
  }
  SubtreeTable table = joint_rec(m, m.root, -1, in_query);
  const std::size_t q = table.vals.size() / m.k;
  std::vector<double> flat(q, 0.0);
  for (int s = 0; s < m.k; ++s) {
    const double w = m.root_dist(s);
    const double* src = table.vals.data() + std::size_t(s) * q;
    for (std::size_t i = 0; i < q; ++i) flat[i] += w * src[i];
  }
  // permute axes from discovery order to the caller's order
  JointTable out;
  out.nodes = nodes;
  out.k = m.k;
  out.p.assign(q, 0.0);
  const int d = int(nodes.size());
  std::vector<int> build_pos(d);  // caller axis -> build axis
  for (int i = 0; i < d; ++i) {
    auto it = std::find(table.qnodes.begin(), table.qnodes.end(), nodes[i]);
    build_pos[i] = int(it - table.qnodes.begin());
  }
  std::vector<int> digits(d);
  for (std::size_t idx = 0; idx < q; ++idx) {
    std::size_t rem = idx;
    for (int i = d - 1; i >= 0; --i) {
      digits[i] = int(rem % m.k);
      rem /= m.k;
    }
    std::size_t src = 0;
    std::vector<int> build_digits(d);
    for (int i = 0; i < d; ++i) build_digits[build_pos[i]] = digits[i];
    for (int i = 0; i < d; ++i) src = src * m.k + build_digits[i];
    out.p[idx] = flat[src];
  }
  return out;
}

double leaf_likelihood(const MarkovTreeModel& m, std::span<const int> leaf_states) {
  const auto& t = m.topology;
  if (int(leaf_states.size()) != t.leaf_count()) {
    fail(ErrorKind::InvalidArgument, "one state per leaf required");
  }
  std::vector<int> leaf_state_of(t.node_count, -1);
  for (int j = 0; j < t.leaf_count(); ++j) {
    leaf_state_of[t.leaf_nodes[j]] = leaf_states[j];
  }
  auto rec = [&](auto&& self, int v, int parent) -> Eigen::VectorXd {
    Eigen::VectorXd msg = Eigen::VectorXd::Ones(m.k);
    if (leaf_state_of[v] >= 0) {
      msg.setZero();
      msg(leaf_state_of[v]) = 1.0;
    }
    for (int c : t.adj[v]) {
      if (c == parent) continue;
      Eigen::VectorXd child = self(self, c, v);
      msg = msg.cwiseProduct(m.matrix(v, c).p * child);
    }
    return msg;
  };
  return m.root_dist.dot(rec(rec, m.root, -1));
}

MarkovTreeModel permute_internal_states(const MarkovTreeModel& m, int v,
                                        const std::vector<int>& perm) {
  if (m.topology.is_leaf(v)) {
    fail(ErrorKind::InvalidArgument, "only internal nodes can be relabeled");
  }
  if (int(perm.size()) != m.k) fail(ErrorKind::InvalidArgument, "bad permutation");
  MarkovTreeModel out = m;
  for (auto& [key, mat] : out.edge_matrix) {
    auto [a, b] = key;
    Eigen::MatrixXd p = mat.p;
    if (b == v) {  // v is the child: permute columns
      Eigen::MatrixXd np(m.k, m.k);
      for (int j = 0; j < m.k; ++j) np.col(perm[j]) = p.col(j);
      mat = TransitionMatrix::make(np);
    } else if (a == v) {  // v is the parent: permute rows
      Eigen::MatrixXd np(m.k, m.k);
      for (int i = 0; i < m.k; ++i) np.row(perm[i]) = p.row(i);
      mat = TransitionMatrix::make(np);
    }
  }
  if (out.root == v) {
    Eigen::VectorXd nd(m.k);
    for (int i = 0; i < m.k; ++i) nd(perm[i]) = m.root_dist(i);
    out.root_dist = nd;
  }
  return out;
}

}  // namespace treespec
