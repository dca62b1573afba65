#pragma once

#include <armadillo>

#include "plnpca/model.hpp"
#include "plnpca/proposal.hpp"
#include "plnpca/quadrature.hpp"

namespace plnpca {

/// N latent draws with their log importance weights
/// log rho_r = log p_theta(Y_i, v_r) - log nu_i(v_r) and the normalized
/// weights omega = softmax(log_weights).
struct WeightedParticles {
  arma::mat particles;    // N x q
  arma::vec log_weights;  // N, -inf allowed
  arma::vec norm_weights; // N, nonnegative, sums to 1

  std::size_t count() const { return particles.n_rows; }
};

/// Evaluates the importance weights of `particles` against the joint density
/// of individual i. Throws DegenerateWeightsError when every log-weight is
/// -inf.
WeightedParticles compute_weights(const ModelParams& params, const Dataset& data,
                                  std::size_t i, const GaussianMixtureProposal& proposal,
                                  const arma::mat& particles);

/// Self-normalized importance sampling estimate of the score of
/// log p_theta(Y_i): sum_r omega_r * complete_score(theta, i, v_r).
ParamGrad snis_score(const ModelParams& params, const Dataset& data,
                     std::size_t i, const WeightedParticles& wp);

/// Weighted mean and (symmetrized, possibly rank-deficient) covariance.
PosteriorMoments snis_moments(const WeightedParticles& wp);

/// Effective sample size 1 / sum omega_r^2, always in [1, N].
double ess(const WeightedParticles& wp);

/// Estimator of KL[nu || p(. | Y_i)]: -log N - mean(log omega).
/// Throws Error when any omega is zero (log of zero is undefined; callers
/// report the diagnostic as missing).
double forward_kl_estimate(const WeightedParticles& wp);

/// Estimator of KL[p(. | Y_i) || nu]: log N + sum omega log omega, with
/// 0 log 0 = 0.
double reverse_kl_estimate(const WeightedParticles& wp);

/// log[(1/N) sum_r rho_r] = logsumexp(log_weights) - log N; estimates
/// log p_theta(Y_i).
double marginal_loglik_estimate(const WeightedParticles& wp);

}  // namespace plnpca
