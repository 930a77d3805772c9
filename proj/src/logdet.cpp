#include "treespec/logdet.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace treespec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDetFloor = 1e-300;  // guard before the log

struct QuartetRecord {
  std::array<int, 4> leaves;  // sorted
  QuartetSplit split;         // relative to the sorted order
};

// disjoint-set over 1..n
struct Dsu {
  std::vector<int> parent;
  explicit Dsu(int n) : parent(n + 1) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

bool splits_apart(const QuartetRecord& q, int a, int b) {
  int ia = -1, ib = -1;
  for (int i = 0; i < 4; ++i) {
    if (q.leaves[i] == a) ia = i;
    if (q.leaves[i] == b) ib = i;
  }
  if (ia < 0 || ib < 0) return false;
  auto side = [&](int pos) {
    switch (q.split) {
      case QuartetSplit::ab_cd: return pos <= 1 ? 0 : 1;
      case QuartetSplit::ac_bd: return (pos == 0 || pos == 2) ? 0 : 1;
      case QuartetSplit::ad_bc: return (pos == 0 || pos == 3) ? 0 : 1;
      default: return 0;
    }
  };
  return side(ia) != side(ib);
}

// does a caterpillar with the given component positions induce the split?
bool order_resolves(const QuartetRecord& q, const std::vector<int>& pos_of_leaf) {
  int p[4];
  for (int i = 0; i < 4; ++i) p[i] = pos_of_leaf[q.leaves[i]];
  int first = 0, second = 1;  // indices grouped with q.leaves[0]
  switch (q.split) {
    case QuartetSplit::ab_cd: second = 1; break;
    case QuartetSplit::ac_bd: second = 2; break;
    case QuartetSplit::ad_bc: second = 3; break;
    default: return false;
  }
  int others[2], oi = 0;
  for (int i = 1; i < 4; ++i) {
    if (i != second) others[oi++] = i;
  }
  int lo1 = std::min(p[first], p[second]), hi1 = std::max(p[first], p[second]);
  int lo2 = std::min(p[others[0]], p[others[1]]);
  int hi2 = std::max(p[others[0]], p[others[1]]);
  return hi1 < lo2 || lo1 > hi2;
}

}  // namespace

bool LogDetMetric::is_short(int a, int b, const TopologyParams& params) const {
  double v = psi(a, b);
  return std::isfinite(v) && v <= 2.0 * params.delta_cap;
}

double logdet_pair(const Eigen::MatrixXd& f_ab) {
  double det = std::abs(Eigen::PartialPivLU<Eigen::MatrixXd>(f_ab).determinant());
  if (det <= kDetFloor) return kInf;
  return -std::log(det);
}

namespace {

// The additive log-det distance: -ln|det F| alone is not additive along
// paths, the marginal products at the two endpoints have to come back in.
// With them, psi(a,b) equals the sum of the edge weights nu_uv on the path.
double steel_psi(const Eigen::MatrixXd& f) {
  double raw = logdet_pair(f);
  if (std::isinf(raw)) return kInf;
  double correction = 0.0;
  for (int i = 0; i < f.rows(); ++i) {
    double row = f.row(i).sum();
    double col = f.col(i).sum();
    if (row <= 0.0 || col <= 0.0) return kInf;
    correction += 0.5 * (std::log(row) + std::log(col));
  }
  return raw + correction;
}

}  // namespace

double edge_logdet_weight(const MarkovTreeModel& m, int u, int v) {
  if (!m.topology.has_edge(u, v)) {
    fail(ErrorKind::InvalidArgument, "edge weight needs adjacent nodes");
  }
  int a = u, b = v;
  if (!m.has_matrix(a, b)) std::swap(a, b);
  const double det_ab = m.matrix(a, b).det_abs;
  Eigen::VectorXd pi_a = stationary_at(m, a);
  Eigen::VectorXd pi_b = stationary_at(m, b);
  if (det_ab <= kDetFloor || pi_a.minCoeff() <= 0.0 || pi_b.minCoeff() <= 0.0) {
    fail(ErrorKind::SingularModel, "log-det weight of a singular edge");
  }
  // the reversal satisfies |det P^{ba}| = |det P^{ab}| prod(pi_a)/prod(pi_b)
  double log_prod_a = 0.0, log_prod_b = 0.0;
  for (int i = 0; i < m.k; ++i) {
    log_prod_a += std::log(pi_a(i));
    log_prod_b += std::log(pi_b(i));
  }
  double log_det_ba = std::log(det_ab) + log_prod_a - log_prod_b;
  return -0.5 * std::log(det_ab) - 0.5 * log_det_ba;
}

LogDetMetric metric_from_samples(const LeafSamples& samples) {
  std::vector<std::pair<int, int>> pairs;
  for (int a = 1; a <= samples.n; ++a) {
    for (int b = a + 1; b <= samples.n; ++b) pairs.emplace_back(a, b);
  }
  return metric_from_samples(samples, pairs);
}

LogDetMetric metric_from_samples(const LeafSamples& samples,
                                 const std::vector<std::pair<int, int>>& pairs) {
  LogDetMetric metric;
  metric.n = samples.n;
  metric.psi =
      Eigen::MatrixXd::Constant(samples.n + 1, samples.n + 1, kInf);
  for (auto [a, b] : pairs) {
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(samples.k, samples.k);
    for (int r = 0; r < samples.m; ++r) {
      f(samples.at(r, a - 1), samples.at(r, b - 1)) += 1.0;
    }
    f /= double(samples.m);
    double psi = steel_psi(f);
    metric.psi(a, b) = psi;
    metric.psi(b, a) = psi;
  }
  return metric;
}

LogDetMetric metric_from_model(const MarkovTreeModel& m) {
  const int n = m.topology.leaf_count();
  LogDetMetric metric;
  metric.n = n;
  metric.psi = Eigen::MatrixXd::Constant(n + 1, n + 1, kInf);
  for (int a = 1; a <= n; ++a) {
    for (int b = a + 1; b <= n; ++b) {
      JointTable table = exact_joint(
          m, {m.topology.node_of_label(a), m.topology.node_of_label(b)});
      Eigen::MatrixXd f(m.k, m.k);
      for (int i = 0; i < m.k; ++i) {
        for (int j = 0; j < m.k; ++j) f(i, j) = table.p[std::size_t(i) * m.k + j];
      }
      double psi = steel_psi(f);
      metric.psi(a, b) = psi;
      metric.psi(b, a) = psi;
    }
  }
  return metric;
}

QuartetSplit four_point(double psi_ab, double psi_ac, double psi_ad,
                        double psi_bc, double psi_bd, double psi_cd,
                        double delta) {
  for (double v : {psi_ab, psi_ac, psi_ad, psi_bc, psi_bd, psi_cd}) {
    if (!std::isfinite(v)) return QuartetSplit::undecided;
  }
  const double s1 = psi_ab + psi_cd;
  const double s2 = psi_ac + psi_bd;
  const double s3 = psi_ad + psi_bc;
  const double margin = 2.0 * delta;
  if (s1 <= std::min(s2, s3) - margin) return QuartetSplit::ab_cd;
  if (s2 <= std::min(s1, s3) - margin) return QuartetSplit::ac_bd;
  if (s3 <= std::min(s1, s2) - margin) return QuartetSplit::ad_bc;
  return QuartetSplit::undecided;
}

QuartetSplit induced_quartet_split(const TreeTopology& t, int a, int b, int c,
                                   int d) {
  auto na = t.node_of_label(a), nb = t.node_of_label(b);
  auto nc = t.node_of_label(c), nd = t.node_of_label(d);
  auto da = t.bfs_distances(na);
  auto db = t.bfs_distances(nb);
  auto dc = t.bfs_distances(nc);
  const double s1 = da[nb] + dc[nd];
  const double s2 = da[nc] + db[nd];
  const double s3 = da[nd] + db[nc];
  if (s1 < s2 && s1 < s3) return QuartetSplit::ab_cd;
  if (s2 < s1 && s2 < s3) return QuartetSplit::ac_bd;
  if (s3 < s1 && s3 < s2) return QuartetSplit::ad_bc;
  return QuartetSplit::undecided;
}

namespace {

std::vector<QuartetRecord> decide_quartets(const LogDetMetric& metric,
                                           const TopologyParams& params) {
  std::vector<QuartetRecord> decided;
  const int n = metric.n;
  for (int a = 1; a <= n; ++a) {
    for (int b = a + 1; b <= n; ++b) {
      if (!metric.is_short(a, b, params)) continue;
      for (int c = b + 1; c <= n; ++c) {
        if (!metric.is_short(a, c, params) || !metric.is_short(b, c, params)) {
          continue;
        }
        for (int d = c + 1; d <= n; ++d) {
          if (!metric.is_short(a, d, params) || !metric.is_short(b, d, params) ||
              !metric.is_short(c, d, params)) {
            continue;
          }
          QuartetSplit split = four_point(
              metric.at(a, b), metric.at(a, c), metric.at(a, d), metric.at(b, c),
              metric.at(b, d), metric.at(c, d), params.contraction_delta);
          if (split != QuartetSplit::undecided) {
            decided.push_back(QuartetRecord{{a, b, c, d}, split});
          }
        }
      }
    }
  }
  return decided;
}

TreeTopology star_topology(int n) {
  TreeTopology t;
  t.node_count = n + 1;
  t.adj.assign(t.node_count, {});
  t.node_names.resize(t.node_count);
  t.leaf_nodes.resize(n);
  for (int j = 0; j < n; ++j) {
    t.leaf_nodes[j] = j;
    t.node_names[j] = std::to_string(j + 1);
    t.add_edge(j, n);
  }
  t.node_names[n] = "h0";
  return t;
}

TreeTopology caterpillar_from_groups(const std::vector<std::vector<int>>& groups,
                                     int n) {
  // one path node per group; a singleton end group folds into its neighbor
  // so no internal node is left with degree two
  std::vector<std::vector<int>> g = groups;
  if (g.size() >= 2 && g.front().size() == 1) {
    g[1].push_back(g.front()[0]);
    g.erase(g.begin());
  }
  if (g.size() >= 2 && g.back().size() == 1) {
    g[g.size() - 2].push_back(g.back()[0]);
    g.pop_back();
  }
  if (g.size() == 1) return star_topology(n);
  const int a = int(g.size());
  TreeTopology t;
  t.node_count = n + a;
  t.adj.assign(t.node_count, {});
  t.node_names.resize(t.node_count);
  t.leaf_nodes.resize(n);
  for (int j = 0; j < n; ++j) {
    t.leaf_nodes[j] = j;
    t.node_names[j] = std::to_string(j + 1);
  }
  for (int i = 0; i < a; ++i) {
    t.node_names[n + i] = "h" + std::to_string(i);
    if (i > 0) t.add_edge(n + i - 1, n + i);
    for (int leaf : g[i]) t.add_edge(leaf - 1, n + i);
  }
  return t;
}

}  // namespace

ContractionGraph contraction_graph(const LogDetMetric& metric,
                                   const TopologyParams& params) {
  const int n = metric.n;
  std::vector<QuartetRecord> decided = decide_quartets(metric, params);
  ContractionGraph graph;
  graph.n = n;
  Dsu dsu(n);
  for (int a = 1; a <= n; ++a) {
    for (int b = a + 1; b <= n; ++b) {
      if (!metric.is_short(a, b, params)) continue;
      bool separated = false;
      for (const auto& q : decided) {
        if (splits_apart(q, a, b)) {
          separated = true;
          break;
        }
      }
      if (!separated) {
        graph.edges.emplace_back(a, b);
        dsu.unite(a, b);
      }
    }
  }
  std::map<int, std::vector<int>> comp_map;
  for (int a = 1; a <= n; ++a) comp_map[dsu.find(a)].push_back(a);
  for (auto& [root, members] : comp_map) {
    std::sort(members.begin(), members.end());
    graph.components.push_back(members);
  }
  std::sort(graph.components.begin(), graph.components.end());
  return graph;
}

TreeTopology reconstruct_caterpillar(const LogDetMetric& metric,
                                     const TopologyParams& params) {
  const int n = metric.n;
  if (n < 4) fail(ErrorKind::InvalidArgument, "caterpillar reconstruction needs n >= 4");
  if (!(params.delta_cap > 0.0) || !(params.contraction_delta >= 0.0)) {
    fail(ErrorKind::InvalidArgument, "bad topology parameters");
  }
  std::vector<QuartetRecord> decided = decide_quartets(metric, params);
  if (decided.empty()) {
    fail(ErrorKind::InsufficientSignal, "no quartet cleared the margin");
  }
  const std::vector<std::vector<int>> components =
      contraction_graph(metric, params).components;
  const int a_count = int(components.size());
  if (a_count == 1) return star_topology(n);

  std::vector<int> reps(a_count);
  for (int i = 0; i < a_count; ++i) reps[i] = components[i][0];

  // order components along the path by peeling terminal cherries of the
  // representative set: a cherry is a short pair never separated by a decided
  // quartet inside the remaining representatives
  std::vector<int> order;
  if (a_count == 2) {
    order = {0, 1};
  } else {
    std::vector<int> remaining(a_count);
    std::iota(remaining.begin(), remaining.end(), 0);
    std::vector<std::pair<int, int>> chain;  // cherry edges over component ids
    auto rep_in_remaining = [&](int leaf) {
      for (int ci : remaining) {
        if (reps[ci] == leaf) return true;
      }
      return false;
    };
    while (remaining.size() > 2) {
      int best_x = -1, best_y = -1;
      for (std::size_t i = 0; i < remaining.size() && best_x < 0; ++i) {
        for (std::size_t j = i + 1; j < remaining.size(); ++j) {
          int ra = reps[remaining[i]], rb = reps[remaining[j]];
          if (!metric.is_short(ra, rb, params)) continue;
          bool separated = false;
          for (const auto& q : decided) {
            bool inside = true;
            for (int leaf : q.leaves) {
              if (!rep_in_remaining(leaf)) {
                inside = false;
                break;
              }
            }
            if (inside && splits_apart(q, ra, rb)) {
              separated = true;
              break;
            }
          }
          if (!separated) {
            best_x = int(remaining[i]);
            best_y = int(remaining[j]);
            break;
          }
        }
      }
      if (best_x < 0) {
        fail(ErrorKind::InsufficientSignal,
             "no terminal cherry among the representatives");
      }
      chain.emplace_back(best_x, best_y);
      remaining.erase(std::find(remaining.begin(), remaining.end(), best_x));
    }
    chain.emplace_back(int(remaining[0]), int(remaining[1]));
    // the cherry edges form a path over components; read it off
    std::vector<std::vector<int>> nbr(a_count);
    for (auto [x, y] : chain) {
      nbr[x].push_back(y);
      nbr[y].push_back(x);
    }
    int start = -1;
    for (int i = 0; i < a_count; ++i) {
      if (nbr[i].size() == 1 && start < 0) start = i;
      if (nbr[i].size() > 2) {
        fail(ErrorKind::InsufficientSignal, "cherry peeling was inconsistent");
      }
    }
    if (start < 0) fail(ErrorKind::InsufficientSignal, "cherry peeling was inconsistent");
    int prev = -1, cur = start;
    while (int(order.size()) < a_count) {
      order.push_back(cur);
      int next = -1;
      for (int cand : nbr[cur]) {
        if (cand != prev) next = cand;
      }
      prev = cur;
      if (next < 0) break;
      cur = next;
    }
    if (int(order.size()) != a_count) {
      fail(ErrorKind::InsufficientSignal, "cherry peeling was inconsistent");
    }
  }

  // Peeling leaves the two components at each end interchangeable (and the
  // middle ambiguous when only three remain); decided quartets involving two
  // leaves of one component settle it. Score the end-swapped variants and
  // keep the most consistent order.
  std::vector<std::vector<int>> candidates;
  auto add_candidate = [&](std::vector<int> seq) {
    std::vector<int> rev(seq.rbegin(), seq.rend());
    if (rev < seq) seq = rev;
    if (std::find(candidates.begin(), candidates.end(), seq) == candidates.end()) {
      candidates.push_back(seq);
    }
  };
  add_candidate(order);
  if (order.size() >= 2) {
    auto v = order;
    std::swap(v[0], v[1]);
    add_candidate(v);
  }
  if (order.size() >= 3) {
    auto v = order;
    std::swap(v[v.size() - 1], v[v.size() - 2]);
    add_candidate(v);
    auto w = order;
    std::swap(w[0], w[1]);
    std::swap(w[w.size() - 1], w[w.size() - 2]);
    add_candidate(w);
  }
  std::vector<int> pos_of_leaf(n + 1, 0);
  int best_violations = -1;
  std::vector<int> best_order;
  for (const auto& cand : candidates) {
    for (int slot = 0; slot < a_count; ++slot) {
      for (int leaf : components[cand[slot]]) pos_of_leaf[leaf] = slot;
    }
    int violations = 0;
    for (const auto& q : decided) {
      if (!order_resolves(q, pos_of_leaf)) ++violations;
    }
    if (best_violations < 0 || violations < best_violations ||
        (violations == best_violations && cand < best_order)) {
      best_violations = violations;
      best_order = cand;
    }
  }

  std::vector<std::vector<int>> groups;
  for (int ci : best_order) groups.push_back(components[ci]);
  return caterpillar_from_groups(groups, n);
}

TreeTopology reconstruct_caterpillar(const LeafSamples& samples,
                                     const TopologyParams& params) {
  return reconstruct_caterpillar(metric_from_samples(samples), params);
}

namespace {

// attach a new leaf (with the given label) in the middle of edge (u,v)
TreeTopology attach_leaf_at_edge(const TreeTopology& t, int u, int v, int label) {
  TreeTopology out = t;
  int mid = out.node_count;
  int leaf = out.node_count + 1;
  out.node_count += 2;
  out.adj.resize(out.node_count);
  out.node_names.push_back("");
  out.node_names.push_back(std::to_string(label));
  int h = 0;
  std::string name;
  do {
    name = "h" + std::to_string(h++);
  } while (out.node_of_name(name) >= 0);
  out.node_names[mid] = name;
  auto& au = out.adj[u];
  auto& av = out.adj[v];
  au.erase(std::find(au.begin(), au.end(), v));
  av.erase(std::find(av.begin(), av.end(), u));
  out.add_edge(u, mid);
  out.add_edge(v, mid);
  out.add_edge(leaf, mid);
  if (int(out.leaf_nodes.size()) < label) out.leaf_nodes.resize(label, -1);
  out.leaf_nodes[label - 1] = leaf;
  return out;
}

TreeTopology quartet_topology(const QuartetRecord& q) {
  // two cherries joined by an internal edge
  int a = q.leaves[0], b = q.leaves[1], c = q.leaves[2], d = q.leaves[3];
  int p1 = a, p2 = b, p3 = c, p4 = d;
  if (q.split == QuartetSplit::ac_bd) {
    p2 = c;
    p3 = b;
  } else if (q.split == QuartetSplit::ad_bc) {
    p2 = d;
    p3 = b;
    p4 = c;
  }
  TreeTopology t;
  t.node_count = 6;
  t.adj.assign(6, {});
  t.node_names.assign(6, "");
  std::vector<int> labels{p1, p2, p3, p4};
  int max_label = *std::max_element(labels.begin(), labels.end());
  t.leaf_nodes.assign(max_label, -1);
  for (int i = 0; i < 4; ++i) {
    t.node_names[i] = std::to_string(labels[i]);
    t.leaf_nodes[labels[i] - 1] = i;
  }
  t.node_names[4] = "h0";
  t.node_names[5] = "h1";
  t.add_edge(0, 4);
  t.add_edge(1, 4);
  t.add_edge(4, 5);
  t.add_edge(2, 5);
  t.add_edge(3, 5);
  return t;
}

// drop unused leaf slots and check the final labeling is 1..n
TreeTopology finalize_labels(TreeTopology t, int n) {
  if (int(t.leaf_nodes.size()) != n ||
      std::count(t.leaf_nodes.begin(), t.leaf_nodes.end(), -1) > 0) {
    fail(ErrorKind::CoverageFailure, "leaf insertion missed a label");
  }
  return t;
}

}  // namespace

TreeTopology reconstruct_binary(const LogDetMetric& metric,
                                const TopologyParams& params) {
  const int n = metric.n;
  if (n < 2) fail(ErrorKind::InvalidArgument, "need n >= 2");
  if (n == 2) return make_caterpillar(2);
  if (n == 3) return make_caterpillar(3);
  std::vector<QuartetRecord> decided = decide_quartets(metric, params);
  if (decided.empty()) {
    fail(ErrorKind::InsufficientSignal, "no quartet cleared the margin");
  }
  // seed with the lexicographically first decided quartet, then insert the
  // remaining leaves one at a time at the unique consistent edge
  TreeTopology tree = quartet_topology(decided.front());
  std::vector<bool> placed(n + 1, false);
  for (int leaf : decided.front().leaves) placed[leaf] = true;
  for (int x = 1; x <= n; ++x) {
    if (placed[x]) continue;
    std::vector<const QuartetRecord*> relevant;
    for (const auto& q : decided) {
      bool has_x = false, rest_placed = true;
      for (int leaf : q.leaves) {
        if (leaf == x) {
          has_x = true;
        } else if (!placed[leaf]) {
          rest_placed = false;
        }
      }
      if (has_x && rest_placed) relevant.push_back(&q);
    }
    auto es = tree.edges();
    int chosen_u = -1, chosen_v = -1;
    for (auto [u, v] : es) {
      TreeTopology candidate = attach_leaf_at_edge(tree, u, v, x);
      bool ok = true;
      for (const QuartetRecord* q : relevant) {
        QuartetSplit induced = induced_quartet_split(
            candidate, q->leaves[0], q->leaves[1], q->leaves[2], q->leaves[3]);
        if (induced != q->split) {
          ok = false;
          break;
        }
      }
      if (ok) {
        chosen_u = u;
        chosen_v = v;
        break;
      }
    }
    if (chosen_u < 0) {
      fail(ErrorKind::QuartetConflict,
           "no placement of leaf " + std::to_string(x) +
               " is consistent with the decided quartets");
    }
    tree = attach_leaf_at_edge(tree, chosen_u, chosen_v, x);
    placed[x] = true;
  }
  return finalize_labels(tree, n);
}

TreeTopology reconstruct_binary(const LeafSamples& samples,
                                const TopologyParams& params) {
  return reconstruct_binary(metric_from_samples(samples), params);
}

}  // namespace treespec
