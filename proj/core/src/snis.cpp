#include "plnpca/snis.hpp"

#include <cmath>

#include "plnpca/errors.hpp"
#include "plnpca/numeric.hpp"

namespace plnpca {

namespace {

void check_valid(const WeightedParticles& wp) {
  if (wp.count() < 2 || wp.log_weights.n_elem != wp.count() ||
      wp.norm_weights.n_elem != wp.count()) {
    throw DimensionError("WeightedParticles: inconsistent sizes or N < 2");
  }
}

}  // namespace

WeightedParticles compute_weights(const ModelParams& params, const Dataset& data,
                                  std::size_t i, const GaussianMixtureProposal& proposal,
                                  const arma::mat& particles) {
  if (particles.n_rows < 2) {
    throw DimensionError("compute_weights: need at least two particles");
  }
  if (!particles.is_finite()) {
    throw DimensionError("compute_weights: non-finite particles");
  }
  WeightedParticles wp;
  wp.particles = particles;
  const IndividualModel model(params, data, i);
  wp.log_weights = model.log_joint_rows(particles) - proposal.log_density_rows(particles);
  if (wp.log_weights.max() == kNegInf) {
    throw DegenerateWeightsError(
        "compute_weights: all importance weights vanished for individual " +
            std::to_string(i),
        i);
  }
  wp.norm_weights = softmax_from_log(wp.log_weights);
  return wp;
}

ParamGrad snis_score(const ModelParams& params, const Dataset& data,
                     std::size_t i, const WeightedParticles& wp) {
  check_valid(wp);
  return IndividualModel(params, data, i).weighted_score(wp.particles, wp.norm_weights);
}

PosteriorMoments snis_moments(const WeightedParticles& wp) {
  check_valid(wp);
  PosteriorMoments out;
  out.mean = (wp.norm_weights.t() * wp.particles).t();
  arma::mat centered = wp.particles;
  centered.each_row() -= out.mean.t();
  out.cov = (centered.each_col() % wp.norm_weights).t() * centered;
  out.cov = 0.5 * (out.cov + out.cov.t());
  return out;
}

double ess(const WeightedParticles& wp) {
  check_valid(wp);
  return 1.0 / arma::dot(wp.norm_weights, wp.norm_weights);
}

double forward_kl_estimate(const WeightedParticles& wp) {
  check_valid(wp);
  const double n = static_cast<double>(wp.count());
  if (wp.norm_weights.min() <= 0.0) {
    throw Error("forward_kl_estimate: zero weight makes the estimator undefined");
  }
  return -std::log(n) - arma::accu(arma::log(wp.norm_weights)) / n;
}

double reverse_kl_estimate(const WeightedParticles& wp) {
  check_valid(wp);
  double acc = 0.0;
  for (arma::uword r = 0; r < wp.norm_weights.n_elem; ++r) {
    const double w = wp.norm_weights(r);
    if (w > 0.0) acc += w * std::log(w);
  }
  return std::log(static_cast<double>(wp.count())) + acc;
}

double marginal_loglik_estimate(const WeightedParticles& wp) {
  check_valid(wp);
  return log_sum_exp(wp.log_weights) - std::log(static_cast<double>(wp.count()));
}

}  // namespace plnpca
