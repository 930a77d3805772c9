#include "treespec/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <cmath>
#include <complex>

namespace treespec {

double l1_norm(const Eigen::MatrixXd& m) {
  double best = 0.0;
  for (int j = 0; j < m.cols(); ++j) best = std::max(best, m.col(j).cwiseAbs().sum());
  return best;
}

double l1_norm(const Eigen::VectorXd& v) { return v.cwiseAbs().sum(); }

GaussianProbe draw_probe(int k, std::uint64_t probe_seed, std::uint64_t attempt) {
  GaussianProbe probe;
  probe.probe_seed = probe_seed;
  probe.attempt = attempt;
  probe.u.resize(k);
  SplitMix64 rng = SplitMix64::substream(probe_seed, attempt);
  for (int i = 0; i < k; ++i) probe.u(i) = rng.next_gaussian();
  return probe;
}

Eigen::MatrixXd project_gaussian(const Tensor3& triple, const Eigen::VectorXd& u) {
  if (int(u.size()) != triple.k) {
    fail(ErrorKind::InvalidArgument, "probe length must match the state count");
  }
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(triple.k, triple.k);
  for (int g = 0; g < triple.k; ++g) {
    if (u(g) == 0.0) continue;
    out += u(g) * triple.slice_gamma(g);
  }
  return out;
}

bool separation_check(const Eigen::VectorXcd& eigenvalues, const SpectralConfig& cfg) {
  const int k = int(eigenvalues.size());
  for (int i = 0; i < k; ++i) {
    if (std::abs(eigenvalues(i).imag()) > cfg.imag_tol) return false;
    for (int j = i + 1; j < k; ++j) {
      if (std::abs(eigenvalues(i) - eigenvalues(j)) < cfg.sep_tol) return false;
    }
  }
  return true;
}

namespace {

bool imag_ok(const Eigen::VectorXcd& ev, double imag_tol) {
  for (int i = 0; i < ev.size(); ++i) {
    if (std::abs(ev(i).imag()) > imag_tol) return false;
  }
  return true;
}

}  // namespace

ChangResult chang_decompose(const Eigen::MatrixXd& pair, const Tensor3& triple,
                            std::uint64_t probe_seed, const SpectralConfig& cfg) {
  const int k = int(pair.rows());
  if (pair.cols() != k || triple.k != k) {
    fail(ErrorKind::InvalidArgument, "pair and triple dimensions disagree");
  }
  if (cfg.max_probe_retries < 1) {
    fail(ErrorKind::InvalidArgument, "max_probe_retries must be >= 1");
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> pair_t_lu(pair.transpose());
  const double pair_det = std::abs(pair_t_lu.determinant());
  if (pair_det < cfg.cond_floor) {
    fail(ErrorKind::IllConditionedPair,
         "|det| of the pair matrix is " + std::to_string(pair_det) +
             ", below the floor " + std::to_string(cfg.cond_floor));
  }

  ChangDiagnostics diag;
  diag.pair_det_abs = pair_det;

  // Eigenvector sensitivity scales with the inverse of the eigenvalue gap,
  // so among the allowed probe redraws we keep the best-separated one and
  // stop early only when the gap is comfortably above the tolerance. On
  // exact input the first probe is essentially always comfortable.
  const double comfortable_gap = 10.0 * cfg.sep_tol;
  auto operator_for = [&](std::uint64_t attempt) {
    GaussianProbe probe = draw_probe(k, probe_seed, attempt);
    Eigen::MatrixXd projected = project_gaussian(triple, probe.u);
    // L = P^{ab,U} (P^{ab})^{-1}, via solves against the factorized pair
    return Eigen::MatrixXd(pair_t_lu.solve(projected.transpose()).transpose());
  };
  auto min_gap_of = [](const Eigen::VectorXcd& ev) {
    double gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ev.size(); ++i) {
      for (int j = i + 1; j < ev.size(); ++j) {
        gap = std::min(gap, std::abs(ev(i) - ev(j)));
      }
    }
    return gap;
  };

  bool last_failure_was_imag = false;
  int best_attempt = -1;
  double best_gap = -1.0;
  for (int attempt = 0; attempt < cfg.max_probe_retries; ++attempt) {
    diag.probe_attempts.push_back(std::uint64_t(attempt));
    ++diag.attempts;
    Eigen::MatrixXd l_matrix = operator_for(std::uint64_t(attempt));
    Eigen::EigenSolver<Eigen::MatrixXd> solver(l_matrix, false);
    if (solver.info() != Eigen::Success) {
      last_failure_was_imag = false;
      continue;
    }
    Eigen::VectorXcd ev = solver.eigenvalues();
    if (!imag_ok(ev, cfg.imag_tol)) {
      last_failure_was_imag = true;
      continue;
    }
    double gap = min_gap_of(ev);
    if (gap < cfg.sep_tol) {
      last_failure_was_imag = false;
      continue;
    }
    if (gap > best_gap) {
      best_gap = gap;
      best_attempt = attempt;
    }
    if (gap >= comfortable_gap) break;
  }
  if (best_attempt < 0) {
    if (last_failure_was_imag) {
      fail(ErrorKind::NonRealSpectrum,
           "complex eigenvalues persisted through " +
               std::to_string(cfg.max_probe_retries) + " probes");
    }
    fail(ErrorKind::SeparationFailure,
         "eigenvalue gaps below " + std::to_string(cfg.sep_tol) + " after " +
             std::to_string(cfg.max_probe_retries) + " probes");
  }

  Eigen::MatrixXd l_matrix = operator_for(std::uint64_t(best_attempt));
  Eigen::EigenSolver<Eigen::MatrixXd> solver(l_matrix);
  Eigen::VectorXcd ev = solver.eigenvalues();

  // Columns are determined up to complex scale: rotate so the largest entry
  // is real positive, drop the imaginary dust, then normalize to unit 1-norm.
  Eigen::MatrixXcd vectors = solver.eigenvectors();
  Eigen::MatrixXd x_hat(k, k);
  for (int c = 0; c < k; ++c) {
    Eigen::VectorXcd col = vectors.col(c);
    int arg_max = 0;
    for (int i = 1; i < k; ++i) {
      if (std::abs(col(i)) > std::abs(col(arg_max))) arg_max = i;
    }
    std::complex<double> pivot = col(arg_max);
    if (std::abs(pivot) == 0.0) {
      fail(ErrorKind::SeparationFailure, "degenerate eigenvector column");
    }
    col *= std::conj(pivot) / std::abs(pivot);
    Eigen::VectorXd real_col = col.real();
    double norm = real_col.cwiseAbs().sum();
    if (!(norm > 0.0)) {
      fail(ErrorKind::SeparationFailure, "degenerate eigenvector column");
    }
    x_hat.col(c) = real_col / norm;
  }

  // eta = X^{-1} 1 rescales columns so rows sum to one
  Eigen::PartialPivLU<Eigen::MatrixXd> x_lu(x_hat);
  if (std::abs(x_lu.determinant()) < 1e-14) {
    fail(ErrorKind::SeparationFailure, "eigenvector basis is numerically singular");
  }
  Eigen::VectorXd eta = x_lu.solve(Eigen::VectorXd::Ones(k));
  Eigen::MatrixXd x_tilde = x_hat * eta.asDiagonal();

  diag.eigenvalues = ev.real();
  double l_norm = l1_norm(l_matrix);
  Eigen::MatrixXd residual =
      l_matrix * x_tilde - x_tilde * diag.eigenvalues.asDiagonal();
  diag.residual = (l_norm > 0.0) ? l1_norm(residual) / l_norm : l1_norm(residual);
  return ChangResult{std::move(x_tilde), std::move(diag)};
}

Eigen::MatrixXd stochastic_project(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m.cwiseMax(0.0);
  for (int i = 0; i < out.rows(); ++i) {
    double sum = out.row(i).sum();
    if (!(sum > 0.0)) {
      fail(ErrorKind::DeadRow,
           "row " + std::to_string(i) + " has no positive entry");
    }
    out.row(i) /= sum;
  }
  return out;
}

}  // namespace treespec
