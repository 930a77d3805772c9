#include "treespec/stats.hpp"

#include <cmath>

namespace treespec {

Eigen::MatrixXd Tensor3::slice_gamma(int g) const {
  Eigen::MatrixXd out(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) out(i, j) = at(i, j, g);
  }
  return out;
}

namespace {

void check_leaf(const LeafSamples& s, int a) {
  if (a < 1 || a > s.n) {
    fail(ErrorKind::InvalidArgument, "no leaf labeled " + std::to_string(a));
  }
}

Eigen::VectorXi count_leaf(const LeafSamples& s, int a) {
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(s.k);
  for (int r = 0; r < s.m; ++r) counts(s.at(r, a - 1))++;
  return counts;
}

// rows conditioned on the first leaf's state; unseen states give a uniform
// row in lenient mode and an error in strict mode
Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& counts,
                               const Eigen::VectorXi& n_a, int a,
                               Strictness strictness,
                               std::vector<std::pair<int, int>>* unobserved) {
  const int k = int(counts.rows());
  Eigen::MatrixXd out(k, counts.cols());
  for (int i = 0; i < k; ++i) {
    if (n_a(i) == 0) {
      if (unobserved) unobserved->emplace_back(a, i);
      if (strictness == Strictness::strict) {
        fail(ErrorKind::UnobservedState,
             "leaf " + std::to_string(a) + " never takes state " +
                 std::to_string(i));
      }
      out.row(i).setConstant(1.0 / counts.cols());
    } else {
      out.row(i) = counts.row(i) / double(n_a(i));
    }
  }
  return out;
}

}  // namespace

EmpiricalStats empirical_stats(const LeafSamples& samples,
                               const std::vector<std::pair<int, int>>& pairs,
                               const std::vector<std::array<int, 3>>& triples,
                               Strictness strictness) {
  if (samples.m <= 0) fail(ErrorKind::InvalidArgument, "no samples");
  EmpiricalStats stats;
  stats.k = samples.k;
  stats.m = samples.m;
  auto ensure_leaf = [&](int a) {
    check_leaf(samples, a);
    if (!stats.leaf_counts.count(a)) {
      Eigen::VectorXi counts = count_leaf(samples, a);
      stats.pi_hat[a] = counts.cast<double>() / double(samples.m);
      stats.leaf_counts[a] = std::move(counts);
    }
  };
  for (auto [a, b] : pairs) {
    ensure_leaf(a);
    ensure_leaf(b);
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(samples.k, samples.k);
    for (int r = 0; r < samples.m; ++r) {
      counts(samples.at(r, a - 1), samples.at(r, b - 1))++;
    }
    stats.pair_hat[{a, b}] =
        normalize_rows(counts.cast<double>(), stats.leaf_counts[a], a, strictness,
                       &stats.unobserved);
    stats.pair_counts[{a, b}] = std::move(counts);
  }
  for (const auto& [a, b, c] : triples) {
    ensure_leaf(a);
    ensure_leaf(b);
    ensure_leaf(c);
    Tensor3 counts(samples.k);
    for (int r = 0; r < samples.m; ++r) {
      counts.at(samples.at(r, a - 1), samples.at(r, b - 1), samples.at(r, c - 1)) +=
          1.0;
    }
    Tensor3 hat(samples.k);
    const Eigen::VectorXi& n_a = stats.leaf_counts[a];
    for (int i = 0; i < samples.k; ++i) {
      if (n_a(i) == 0) {
        if (strictness == Strictness::strict) {
          fail(ErrorKind::UnobservedState,
               "leaf " + std::to_string(a) + " never takes state " +
                   std::to_string(i));
        }
        stats.unobserved.emplace_back(a, i);
        for (int j = 0; j < samples.k; ++j) {
          for (int g = 0; g < samples.k; ++g) {
            hat.at(i, j, g) = 1.0 / (samples.k * samples.k);
          }
        }
      } else {
        for (int j = 0; j < samples.k; ++j) {
          for (int g = 0; g < samples.k; ++g) {
            hat.at(i, j, g) = counts.at(i, j, g) / double(n_a(i));
          }
        }
      }
    }
    stats.triple_counts[{a, b, c}] = std::move(counts);
    stats.triple_hat[{a, b, c}] = std::move(hat);
  }
  return stats;
}

EmpiricalStatsProvider::EmpiricalStatsProvider(const LeafSamples& samples,
                                               Strictness strictness)
    : samples_(samples), strictness_(strictness) {
  if (samples.m <= 0) fail(ErrorKind::InvalidArgument, "no samples");
}

Eigen::VectorXd EmpiricalStatsProvider::leaf_marginal(int a) {
  auto it = marginal_cache_.find(a);
  if (it != marginal_cache_.end()) return it->second;
  check_leaf(samples_, a);
  Eigen::VectorXi counts = count_leaf(samples_, a);
  Eigen::VectorXd pi = counts.cast<double>() / double(samples_.m);
  count_cache_[a] = std::move(counts);
  marginal_cache_[a] = pi;
  return pi;
}

Eigen::MatrixXd EmpiricalStatsProvider::pair_conditional(int a, int b) {
  auto key = std::make_pair(a, b);
  auto it = pair_cache_.find(key);
  if (it != pair_cache_.end()) return it->second;
  leaf_marginal(a);  // fills count_cache_
  check_leaf(samples_, b);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(samples_.k, samples_.k);
  for (int r = 0; r < samples_.m; ++r) {
    counts(samples_.at(r, a - 1), samples_.at(r, b - 1)) += 1.0;
  }
  Eigen::MatrixXd hat =
      normalize_rows(counts, count_cache_[a], a, strictness_, nullptr);
  pair_cache_[key] = hat;
  return hat;
}

Tensor3 EmpiricalStatsProvider::triple_conditional(int a, int b, int c) {
  std::array<int, 3> key{a, b, c};
  auto it = triple_cache_.find(key);
  if (it != triple_cache_.end()) return it->second;
  leaf_marginal(a);
  check_leaf(samples_, b);
  check_leaf(samples_, c);
  Tensor3 hat(samples_.k);
  for (int r = 0; r < samples_.m; ++r) {
    hat.at(samples_.at(r, a - 1), samples_.at(r, b - 1), samples_.at(r, c - 1)) +=
        1.0;
  }
  const Eigen::VectorXi& n_a = count_cache_[a];
  for (int i = 0; i < samples_.k; ++i) {
    double denom = double(n_a(i));
    if (n_a(i) == 0) {
      if (strictness_ == Strictness::strict) {
        fail(ErrorKind::UnobservedState,
             "leaf " + std::to_string(a) + " never takes state " +
                 std::to_string(i));
      }
      for (int j = 0; j < samples_.k; ++j) {
        for (int g = 0; g < samples_.k; ++g) {
          hat.at(i, j, g) = 1.0 / (samples_.k * samples_.k);
        }
      }
      continue;
    }
    for (int j = 0; j < samples_.k; ++j) {
      for (int g = 0; g < samples_.k; ++g) hat.at(i, j, g) /= denom;
    }
  }
  triple_cache_[key] = hat;
  return hat;
}

Eigen::MatrixXd EmpiricalStatsProvider::pair_joint(int a, int b) {
  auto key = std::make_pair(a, b);
  auto it = joint_cache_.find(key);
  if (it != joint_cache_.end()) return it->second;
  check_leaf(samples_, a);
  check_leaf(samples_, b);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(samples_.k, samples_.k);
  for (int r = 0; r < samples_.m; ++r) {
    counts(samples_.at(r, a - 1), samples_.at(r, b - 1)) += 1.0;
  }
  counts /= double(samples_.m);
  joint_cache_[key] = counts;
  return counts;
}

double EmpiricalStatsProvider::data_scale() const {
  return 1.0 / std::sqrt(double(samples_.m));
}

ExactStatsProvider::ExactStatsProvider(const MarkovTreeModel& model)
    : model_(model) {}

Eigen::VectorXd ExactStatsProvider::leaf_marginal(int a) {
  auto it = marginal_cache_.find(a);
  if (it != marginal_cache_.end()) return it->second;
  Eigen::VectorXd pi = stationary_at(model_, model_.topology.node_of_label(a));
  marginal_cache_[a] = pi;
  return pi;
}

Eigen::MatrixXd ExactStatsProvider::pair_joint(int a, int b) {
  auto key = std::make_pair(a, b);
  auto it = joint_cache_.find(key);
  if (it != joint_cache_.end()) return it->second;
  JointTable table = exact_joint(
      model_, {model_.topology.node_of_label(a), model_.topology.node_of_label(b)});
  Eigen::MatrixXd f(model_.k, model_.k);
  for (int i = 0; i < model_.k; ++i) {
    for (int j = 0; j < model_.k; ++j) f(i, j) = table.p[std::size_t(i) * model_.k + j];
  }
  joint_cache_[key] = f;
  return f;
}

Eigen::MatrixXd ExactStatsProvider::pair_conditional(int a, int b) {
  Eigen::MatrixXd f = pair_joint(a, b);
  Eigen::VectorXd pi = leaf_marginal(a);
  Eigen::MatrixXd out(model_.k, model_.k);
  for (int i = 0; i < model_.k; ++i) {
    if (!(pi(i) > 0.0)) {
      fail(ErrorKind::UnobservedState,
           "leaf " + std::to_string(a) + " has zero mass on state " +
               std::to_string(i));
    }
    out.row(i) = f.row(i) / pi(i);
  }
  return out;
}

Tensor3 ExactStatsProvider::triple_conditional(int a, int b, int c) {
  std::array<int, 3> key{a, b, c};
  auto it = triple_cache_.find(key);
  if (it != triple_cache_.end()) return it->second;
  const auto& t = model_.topology;
  JointTable table = exact_joint(
      model_, {t.node_of_label(a), t.node_of_label(b), t.node_of_label(c)});
  Eigen::VectorXd pi = leaf_marginal(a);
  Tensor3 out(model_.k);
  for (int i = 0; i < model_.k; ++i) {
    if (!(pi(i) > 0.0)) {
      fail(ErrorKind::UnobservedState,
           "leaf " + std::to_string(a) + " has zero mass on state " +
               std::to_string(i));
    }
    for (int j = 0; j < model_.k; ++j) {
      for (int g = 0; g < model_.k; ++g) {
        out.at(i, j, g) =
            table.p[(std::size_t(i) * model_.k + j) * model_.k + g] / pi(i);
      }
    }
  }
  triple_cache_[key] = out;
  return out;
}

}  // namespace treespec
