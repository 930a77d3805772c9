#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "treespec/stats.hpp"

namespace treespec {

struct SpectralConfig {
  double sep_tol = 1e-6;     // minimum pairwise eigenvalue gap
  double imag_tol = 1e-6;    // tolerated imaginary magnitude
  double cond_floor = 1e-8;  // minimum |det| of the pair matrix
  int max_probe_retries = 8;
};

struct GaussianProbe {
  Eigen::VectorXd u;
  std::uint64_t probe_seed = 0;
  std::uint64_t attempt = 0;
};

// A fresh probe per attempt: substream `attempt` of probe_seed.
GaussianProbe draw_probe(int k, std::uint64_t probe_seed, std::uint64_t attempt);

// sum_g u_g * slice_g of the triple tensor
Eigen::MatrixXd project_gaussian(const Tensor3& triple, const Eigen::VectorXd& u);

// pass iff every pairwise gap >= sep_tol and every |imag| <= imag_tol
bool separation_check(const Eigen::VectorXcd& eigenvalues, const SpectralConfig& cfg);

struct ChangDiagnostics {
  int attempts = 0;
  double pair_det_abs = 0.0;
  Eigen::VectorXd eigenvalues;
  double residual = 0.0;  // ||L X - X diag(v)||_1 / ||L||_1
  std::vector<std::uint64_t> probe_attempts;
};

struct ChangResult {
  Eigen::MatrixXd x_tilde;  // row sums 1; columns in solver order
  ChangDiagnostics diag;
};

// Spectral recovery of the reference-to-node transition matrix: solves the
// eigenvalue problem L = P^{ab,U} (P^{ab})^{-1}, normalizes eigenvector
// columns to unit 1-norm with the largest-magnitude entry positive, then
// rescales by eta = X^{-1} 1 so rows sum to one. Redraws the probe when the
// spectrum fails the separation check, keeping the best-separated passing
// probe; a gap at 10x the tolerance is accepted immediately.
ChangResult chang_decompose(const Eigen::MatrixXd& pair, const Tensor3& triple,
                            std::uint64_t probe_seed, const SpectralConfig& cfg);

// clip negatives to zero, renormalize rows; idempotent; throws DeadRow on an
// all-nonpositive row
Eigen::MatrixXd stochastic_project(const Eigen::MatrixXd& m);

// matrix operator 1-norm (max column abs sum) and vector 1-norm
double l1_norm(const Eigen::MatrixXd& m);
double l1_norm(const Eigen::VectorXd& v);

}  // namespace treespec
