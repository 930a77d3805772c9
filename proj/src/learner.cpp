#include "treespec/learner.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <deque>

namespace treespec {

namespace {

std::pair<int, int> ordered(int u, int v) {
  return {std::min(u, v), std::max(u, v)};
}

std::string node_name(const TreeTopology& t, int v) { return t.node_names[v]; }

// distances from `from` in the tree with separator edges removed
std::vector<int> component_distances(const TreeTopology& t, int from,
                                     const std::set<std::pair<int, int>>& cut) {
  std::vector<int> dist(t.node_count, -1);
  dist[from] = 0;
  std::deque<int> queue{from};
  while (!queue.empty()) {
    int u = queue.front();
    queue.pop_front();
    for (int v : t.adj[u]) {
      if (cut.count(ordered(u, v))) continue;
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

Eigen::VectorXd clip_marginal(const Eigen::VectorXd& pi, const LearnerConfig& cfg,
                              const std::string& where) {
  if (pi.minCoeff() > 0.0) return pi / pi.sum();
  if (cfg.strictness == Strictness::strict) {
    fail(ErrorKind::MarginalDegenerate,
         "estimated marginal at " + where + " has a nonpositive entry");
  }
  Eigen::VectorXd out = pi.cwiseMax(cfg.sigma / 2.0);
  return out / out.sum();
}

}  // namespace

int depth(const TreeTopology& t) {
  if (t.leaf_count() < 2) fail(ErrorKind::InvalidArgument, "need n >= 2 leaves");
  // Only internal edges matter: the frontier of a subtree exploration stops
  // at internal nodes, and a new reference leaf is always fetched from the
  // far side of an internal edge. A leaf endpoint is its own closest leaf
  // (distance 0). The floor keeps trees without internal edges explorable.
  int best = 1;
  for (auto [u, v] : t.edges()) {
    if (t.is_leaf(u) || t.is_leaf(v)) continue;
    for (int endpoint : {u, v}) {
      auto dist = t.bfs_distances(endpoint, std::make_pair(u, v));
      int nearest = -1;
      for (int leaf : t.leaf_nodes) {
        if (dist[leaf] >= 0 && (nearest < 0 || dist[leaf] < nearest)) {
          nearest = dist[leaf];
        }
      }
      if (nearest > best) best = nearest;
    }
  }
  return best;
}

int closest_leaf(const TreeTopology& t, int from,
                 std::optional<std::pair<int, int>> excluded_edge) {
  auto dist = t.bfs_distances(from, excluded_edge);
  int best = -1, best_dist = -1;
  for (int label = 1; label <= t.leaf_count(); ++label) {
    int leaf = t.leaf_nodes[label - 1];
    if (dist[leaf] < 0) continue;
    if (best < 0 || dist[leaf] < best_dist) {
      best = leaf;
      best_dist = dist[leaf];
    }
  }
  if (best < 0) {
    fail(ErrorKind::Unreachable, "no leaf reachable from " + node_name(t, from));
  }
  return best;
}

SubtreeRecon leafrecon(const TreeTopology& t, int ref_leaf, int delta,
                       std::set<std::pair<int, int>>& separators,
                       int next_separator_index, StatsProvider& stats,
                       const LearnerConfig& cfg) {
  const int k = stats.k();
  if (!t.is_leaf(ref_leaf)) {
    fail(ErrorKind::InvalidArgument, "reference must be a leaf");
  }
  const int label_a = t.leaf_label(ref_leaf);
  SubtreeRecon out;
  out.ref_leaf = ref_leaf;
  out.from_ref[ref_leaf] = Eigen::MatrixXd::Identity(k, k);
  out.marginals[ref_leaf] = stats.leaf_marginal(label_a);

  auto dist = component_distances(t, ref_leaf, separators);
  std::vector<bool> in_w(t.node_count, false);
  in_w[ref_leaf] = true;

  while (true) {
    // outside neighbors of W, not across separators, within the delta ball
    int r = -1, r0 = -1;
    for (int u = 0; u < t.node_count; ++u) {
      if (!in_w[u]) continue;
      for (int v : t.adj[u]) {
        if (in_w[v] || separators.count(ordered(u, v))) continue;
        if (dist[v] < 0 || dist[v] > delta) continue;
        if (r < 0 || std::make_pair(dist[v], v) < std::make_pair(dist[r], r)) {
          r = v;
          r0 = u;
        }
      }
    }
    if (r < 0) break;

    Eigen::MatrixXd p_ar;
    int probe_b = -1, probe_c = -1;
    if (t.is_leaf(r)) {
      p_ar = stats.pair_conditional(label_a, t.leaf_label(r));
    } else {
      std::vector<int> branches;
      for (int u : t.adj[r]) {
        if (u != r0) branches.push_back(u);
      }
      if (branches.size() != 2) {
        fail(ErrorKind::InvalidArgument,
             "subtree reconstruction requires a binary topology; node " +
                 node_name(t, r) + " has degree " + std::to_string(t.degree(r)));
      }
      probe_b = closest_leaf(t, branches[0], std::make_pair(r, branches[0]));
      probe_c = closest_leaf(t, branches[1], std::make_pair(r, branches[1]));
      const int label_b = t.leaf_label(probe_b);
      const int label_c = t.leaf_label(probe_c);
      Eigen::MatrixXd pair = stats.pair_conditional(label_a, label_b);
      Tensor3 triple = stats.triple_conditional(label_a, label_b, label_c);
      std::uint64_t probe_seed =
          SplitMix64::substream(cfg.seed, std::uint64_t(r)).next_u64();
      try {
        ChangResult res = chang_decompose(pair, triple, probe_seed, cfg.spectral);
        p_ar = std::move(res.x_tilde);
        out.diag[r] = std::move(res.diag);
      } catch (const TreespecError& e) {
        fail(e.kind(), std::string(e.what()) + " while recovering node " +
                           node_name(t, r) + " from reference leaf " +
                           std::to_string(label_a) + " with probes (" +
                           std::to_string(label_b) + "," +
                           std::to_string(label_c) + ")");
      }
    }

    const Eigen::MatrixXd& p_ar0 = out.from_ref.at(r0);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(p_ar0);
    if (std::abs(lu.determinant()) < cfg.spectral.cond_floor) {
      fail(ErrorKind::IllConditionedFactor,
           "recovered matrix to " + node_name(t, r0) + " is numerically singular");
    }
    Eigen::MatrixXd p_r0r = lu.solve(p_ar);
    Eigen::VectorXd pi_r = clip_marginal(
        p_ar.transpose() * out.marginals.at(ref_leaf), cfg, node_name(t, r));
    Eigen::MatrixXd p_rr0 = bayes_reverse(p_r0r, out.marginals.at(r0), pi_r);

    out.from_ref[r] = std::move(p_ar);
    out.marginals[r] = std::move(pi_r);
    out.edges[{r0, r}] = std::move(p_r0r);
    out.edges[{r, r0}] = std::move(p_rr0);
    out.covered.push_back(r);
    in_w[r] = true;

    if (!t.is_leaf(r) && dist[r] == delta) {
      // the ball ends here; everything beyond r is reached later through
      // these separator edges, each with its own fresh reference leaf
      std::vector<int> branches;
      for (int u : t.adj[r]) {
        if (u != r0) branches.push_back(u);
      }
      const int refs[2] = {probe_b, probe_c};
      for (int i = 0; i < 2; ++i) {
        auto key = ordered(r, branches[i]);
        if (separators.count(key)) continue;
        separators.insert(key);
        SeparatorRecord record;
        record.index = next_separator_index++;
        record.w = branches[i];
        record.w_prime = r;
        record.new_ref = refs[i];
        record.old_ref = ref_leaf;
        out.new_separators.push_back(record);
      }
    }
  }
  return out;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> seprecon(
    const Eigen::MatrixXd& p_ref_w, const Eigen::MatrixXd& p_wprime_oldref,
    const Eigen::MatrixXd& pair_ref_oldref, const Eigen::VectorXd& pi_w,
    const Eigen::VectorXd& pi_wprime, const SpectralConfig& cfg) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_aw(p_ref_w);
  if (std::abs(lu_aw.determinant()) < cfg.cond_floor) {
    fail(ErrorKind::IllConditionedFactor,
         "factor P(ref->w) is numerically singular");
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_wa(p_wprime_oldref.transpose());
  if (std::abs(lu_wa.determinant()) < cfg.cond_floor) {
    fail(ErrorKind::IllConditionedFactor,
         "factor P(w'->ref') is numerically singular");
  }
  // (P^{aw})^{-1} P^{aa'} (P^{w'a'})^{-1}
  Eigen::MatrixXd left = lu_aw.solve(pair_ref_oldref);
  Eigen::MatrixXd p_ww = lu_wa.solve(left.transpose()).transpose();
  Eigen::MatrixXd p_ww_rev = bayes_reverse(p_ww, pi_w, pi_wprime);
  return {std::move(p_ww), std::move(p_ww_rev)};
}

ReconstructionResult fullrecon(const TreeTopology& t, StatsProvider& stats,
                               const LearnerConfig& cfg) {
  validate_topology(t, TreeMode::binary);
  if (stats.leaf_count() != t.leaf_count()) {
    fail(ErrorKind::TopologyMismatch,
         "statistics cover " + std::to_string(stats.leaf_count()) +
             " leaves, topology has " + std::to_string(t.leaf_count()));
  }
  const int delta = cfg.delta_override.value_or(depth(t));
  if (delta < 1) fail(ErrorKind::InvalidArgument, "delta must be >= 1");

  ReconstructionResult result;
  std::set<std::pair<int, int>> separators;
  std::vector<SubtreeRecon> subtrees;
  std::map<int, int> subtree_of_ref;  // ref leaf node -> index into subtrees
  std::deque<int> pending{t.node_of_label(1)};

  while (!pending.empty()) {
    int ref = pending.front();
    pending.pop_front();
    if (subtree_of_ref.count(ref)) {
      fail(ErrorKind::CoverageFailure, "reference leaf scheduled twice");
    }
    SubtreeRecon sub = leafrecon(t, ref, delta, separators,
                                 int(result.separators.size()), stats, cfg);
    for (const auto& record : sub.new_separators) {
      result.separators.push_back(record);
      pending.push_back(record.new_ref);
    }
    for (const auto& [node, d] : sub.diag) {
      result.total_probe_retries += d.attempts - 1;
      result.decomposition_diag[node] = d;
    }
    auto claim = [&](int node) {
      if (result.reference_leaf.count(node)) {
        fail(ErrorKind::CoverageFailure,
             "node " + node_name(t, node) + " covered twice");
      }
      result.reference_leaf[node] = ref;
    };
    claim(ref);
    for (int node : sub.covered) claim(node);
    subtree_of_ref[ref] = int(subtrees.size());
    subtrees.push_back(std::move(sub));
  }
  for (int v = 0; v < t.node_count; ++v) {
    if (!result.reference_leaf.count(v)) {
      fail(ErrorKind::CoverageFailure, "node " + node_name(t, v) + " never covered");
    }
  }

  // raw (pre-projection) estimates for every directed edge
  std::map<std::pair<int, int>, Eigen::MatrixXd> raw;
  for (const auto& sub : subtrees) {
    for (const auto& [key, mat] : sub.edges) raw[key] = mat;
  }
  for (const auto& record : result.separators) {
    const SubtreeRecon& sub_new = subtrees[subtree_of_ref.at(record.new_ref)];
    const SubtreeRecon& sub_old = subtrees[subtree_of_ref.at(record.old_ref)];
    if (!sub_new.from_ref.count(record.w) || !sub_old.from_ref.count(record.w_prime)) {
      fail(ErrorKind::CoverageFailure, "separator endpoints were not reconstructed");
    }
    Eigen::MatrixXd p_wprime_oldref;
    try {
      // reverse of the stored reference-to-node matrix in the old subtree
      p_wprime_oldref = bayes_reverse(
          sub_old.from_ref.at(record.w_prime),
          sub_old.marginals.at(sub_old.ref_leaf),
          sub_old.marginals.at(record.w_prime));
    } catch (const TreespecError& e) {
      fail(e.kind(), std::string(e.what()) + " while patching separator (" +
                         node_name(t, record.w) + "," +
                         node_name(t, record.w_prime) + ")");
    }
    Eigen::MatrixXd pair = stats.pair_conditional(t.leaf_label(record.new_ref),
                                                  t.leaf_label(record.old_ref));
    try {
      auto [p_ww, p_ww_rev] = seprecon(
          sub_new.from_ref.at(record.w), p_wprime_oldref, pair,
          sub_new.marginals.at(record.w), sub_old.marginals.at(record.w_prime),
          cfg.spectral);
      raw[{record.w, record.w_prime}] = std::move(p_ww);
      raw[{record.w_prime, record.w}] = std::move(p_ww_rev);
    } catch (const TreespecError& e) {
      fail(e.kind(), std::string(e.what()) + " while patching separator (" +
                         node_name(t, record.w) + "," +
                         node_name(t, record.w_prime) + ")");
    }
  }
  if (int(raw.size()) != 2 * t.edge_count()) {
    fail(ErrorKind::CoverageFailure, "some edges were never reconstructed");
  }

  for (const auto& [key, mat] : raw) {
    try {
      result.edge_estimates[key] = stochastic_project(mat);
    } catch (const TreespecError& e) {
      fail(e.kind(), std::string(e.what()) + " while projecting edge (" +
                         node_name(t, key.first) + "," +
                         node_name(t, key.second) + ")");
    }
  }
  for (const auto& sub : subtrees) {
    for (const auto& [node, pi] : sub.marginals) result.node_marginals[node] = pi;
  }

  // assemble the model rooted at the first reference leaf
  MarkovTreeModel model;
  model.topology = t;
  model.k = stats.k();
  model.root = t.node_of_label(1);
  model.root_dist = stats.leaf_marginal(1);
  auto dist = t.bfs_distances(model.root);
  for (auto [a, b] : t.edges()) {
    int u = (dist[a] < dist[b]) ? a : b;
    int v = (u == a) ? b : a;
    model.edge_matrix.emplace(std::make_pair(u, v),
                              TransitionMatrix::make(result.edge_estimates.at({u, v})));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace treespec
