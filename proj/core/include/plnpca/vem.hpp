#pragma once

#include <armadillo>
#include <cstddef>
#include <vector>

#include "plnpca/model.hpp"

namespace plnpca {

/// Diagonal-Gaussian variational family: one N(m_i, Diag(s_i^2)) per
/// individual, with standard deviations stored on the log scale so every
/// real-valued matrix is admissible.
struct VariationalParams {
  arma::mat M;     // n x q means
  arma::mat LogS;  // n x q log standard deviations

  static VariationalParams neutral(std::size_t n, std::size_t q) {
    return VariationalParams{arma::zeros(n, q), arma::zeros(n, q)};
  }

  arma::vec mean(std::size_t i) const { return M.row(i).t(); }
  arma::vec variances(std::size_t i) const { return arma::exp(2.0 * LogS.row(i).t()); }
};

/// Evidence lower bound of the PLN-PCA likelihood under the diagonal
/// variational family, all constants included, so elbo <= sum_i log p(Y_i).
double elbo(const ModelParams& params, const VariationalParams& vp, const Dataset& data);

struct ElboGrad {
  ParamGrad theta;
  arma::mat dM;     // n x q
  arma::mat dLogS;  // n x q
};

/// ELBO value and its exact gradient in all four blocks (B, C, M, LogS).
double elbo_with_gradient(const ModelParams& params, const VariationalParams& vp,
                          const Dataset& data, ElboGrad& grad);

struct VemConfig {
  std::size_t max_iters = 5000;
  double learning_rate = 0.05;
  double tol = 1e-6;          // relative ELBO change
  bool update_theta = true;   // false: variational E-step at fixed theta
};

struct VemResult {
  ModelParams params;
  VariationalParams vp;
  std::vector<double> elbo_path;  // accepted steps only, non-decreasing
  bool converged = false;
};

/// Joint gradient ascent on the ELBO with backtracking (the accepted ELBO
/// sequence never decreases). Throws FitError when the ELBO is non-finite at
/// the starting point.
VemResult vem_fit(const Dataset& data, const ModelParams& theta_init,
                  const VemConfig& config = {});

/// Optimizes the variational parameters only, at fixed theta; used to build
/// the variational proposal of an arbitrary parameter value.
VemResult fit_variational(const Dataset& data, const ModelParams& theta,
                          const VemConfig& config = {});

/// Data-driven starting point: per-column Poisson GLM for B, top-q factors
/// of the covariance of log1p(Y) regression residuals for C.
ModelParams init_heuristic(const Dataset& data, std::size_t q);

}  // namespace plnpca
