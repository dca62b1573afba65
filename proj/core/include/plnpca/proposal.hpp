#pragma once

#include <armadillo>
#include <random>

#include "plnpca/model.hpp"

namespace plnpca {

/// Two-component defensive Gaussian mixture
///   (1 - alpha) N(mu, S) + alpha N(mu, delta I_q),
/// stored with the lower Cholesky factor of S. The validated constructor
/// enforces alpha in (0, 1] and delta > 1, the conditions under which
/// importance weights against the model joint stay bounded.
class GaussianMixtureProposal {
 public:
  static GaussianMixtureProposal make(arma::vec mu, const arma::mat& s,
                                      double alpha, double delta);

  /// Same, but only requires delta > 0. For tests and diagnostics that need
  /// degenerate settings (e.g. delta = 1 to compare against a pure normal).
  static GaussianMixtureProposal make_relaxed(arma::vec mu, const arma::mat& s,
                                              double alpha, double delta);

  double log_density(const arma::vec& v) const;

  /// Log-density of every row of `points` (N x q), vectorized.
  arma::vec log_density_rows(const arma::mat& points) const;

  /// N independent draws, one per row, filled sequentially; deterministic
  /// given the stream state.
  arma::mat sample(std::size_t n, std::mt19937_64& stream) const;

  const arma::vec& mean() const { return mu_; }
  const arma::mat& chol_factor() const { return chol_; }
  arma::mat covariance() const { return chol_ * chol_.t(); }
  double alpha() const { return alpha_; }
  double delta() const { return delta_; }
  std::size_t dim() const { return mu_.n_elem; }

 private:
  GaussianMixtureProposal(arma::vec mu, arma::mat chol, double alpha, double delta);

  arma::vec mu_;
  arma::mat chol_;  // lower triangular, strictly positive diagonal
  double alpha_;
  double delta_;
  double log_det_half_;  // sum log diag(chol)
};

/// Repair ladder for Monte Carlo covariance estimates: symmetrize, then add
/// a doubling jitter from 1e-8 (capped at 1e-2), then fall back to the
/// diagonal clamped below at 1e-6. The result always admits a Cholesky
/// factorization.
arma::mat repair_spd(const arma::mat& cov);

/// AISGD-SNIS adaptation: proposal centered at the SNIS posterior-mean
/// estimate with the repaired SNIS covariance estimate. Throws
/// AdaptationError on non-finite inputs.
GaussianMixtureProposal adapt_snis(const arma::vec& mean, const arma::mat& cov,
                                   double alpha, double delta);

/// AISGD-Hessian adaptation: covariance from the curvature of the complete
/// log-likelihood at `mean` (SPD by construction, no repair needed).
GaussianMixtureProposal adapt_hessian(const ModelParams& params, const Dataset& data,
                                      std::size_t i, const arma::vec& mean,
                                      double alpha, double delta);

/// ISGD-VEM / ISGD-VEMmix adaptation from the variational mean and diagonal
/// standard deviations squared. defensive = false models the pure variational
/// proposal by flooring alpha at 1e-12 (one code path for both variants).
GaussianMixtureProposal adapt_vem(const arma::vec& m_vem, const arma::vec& s_vem_diag,
                                  double alpha, double delta, bool defensive);

}  // namespace plnpca
