#pragma once

#include <armadillo>
#include <cstdint>

namespace plnpca {

/// Latent score vector of one individual (length q).
using LatentPoint = arma::vec;

/// Model parameter theta = (B, C): regression coefficients and loadings.
///
/// The flattened layout is column-major B followed by column-major C; every
/// projection, norm and RMSE in the library relies on this fixed order.
struct ModelParams {
  arma::mat B;  // d x p regression coefficients
  arma::mat C;  // p x q loadings

  std::size_t covariates() const { return B.n_rows; }  // d
  std::size_t variables() const { return B.n_cols; }   // p
  std::size_t rank() const { return C.n_cols; }        // q

  arma::vec flatten() const;
  static ModelParams unflatten(const arma::vec& theta, std::size_t d,
                               std::size_t p, std::size_t q);

  static ModelParams zeros(std::size_t d, std::size_t p, std::size_t q);

  /// Throws DimensionError on non-finite entries, q > p, d < 1.
  void validate() const;
};

/// Observed counts with covariates and offsets for n individuals.
struct Dataset {
  arma::mat Y;  // n x p nonnegative integer counts
  arma::mat X;  // n x d covariates (intercept column included)
  arma::mat O;  // n x p offsets

  std::size_t individuals() const { return Y.n_rows; }  // n
  std::size_t variables() const { return Y.n_cols; }    // p
  std::size_t covariates() const { return X.n_cols; }   // d

  /// Throws DimensionError / SchemaError when shapes disagree or Y holds
  /// negative or fractional entries.
  void validate() const;
};

/// Gradient with respect to theta = (B, C), kept in matrix blocks.
struct ParamGrad {
  arma::mat dB;  // d x p
  arma::mat dC;  // p x q

  static ParamGrad zeros(std::size_t d, std::size_t p, std::size_t q);

  ParamGrad& operator+=(const ParamGrad& other);
  ParamGrad& operator*=(double s);
  arma::vec flatten() const;
  double norm() const;  // Euclidean norm of the flattened gradient
  bool is_finite() const { return dB.is_finite() && dC.is_finite(); }
};

/// Per-individual evaluation context. Caches everything that does not depend
/// on the latent point (B^T x_i + o_i, the count row, log Y! terms) so that
/// particle sweeps only pay for the w-dependent part.
class IndividualModel {
 public:
  IndividualModel(const ModelParams& params, const Dataset& data, std::size_t i);

  std::size_t rank() const { return params_->rank(); }

  /// f_i(w) = C w + B^T x_i + o_i.
  arma::vec linear_predictor(const LatentPoint& w) const;

  /// Full joint log-density log p_theta(Y_i, w), all constants included.
  /// Returns -inf when any predictor coordinate exceeds the exp saturation
  /// threshold (the true density underflows there anyway).
  double log_joint(const LatentPoint& w) const;

  /// Gradient of log p_theta(Y_i, w) in theta; with r = Y_i - exp(f_i(w)),
  /// dB = x_i r^T and dC = r w^T. exp saturates at the overflow threshold.
  ParamGrad score(const LatentPoint& w) const;

  /// Joint log-density of every row of `particles` (N x q), vectorized.
  arma::vec log_joint_rows(const arma::mat& particles) const;

  /// SNIS-style weighted score sum_r weight(r) * score(particles.row(r)).
  ParamGrad weighted_score(const arma::mat& particles, const arma::vec& weights) const;

  /// argmax_w log p_theta(Y_i, w) by damped Newton from w = 0 (the objective
  /// is strictly concave in w). Throws ConvergenceError with the last iterate
  /// if the gradient sup-norm is still above 1e-8 after 100 iterations.
  LatentPoint conditional_mode() const;

  /// [I_q + C^T Diag(exp f_i(mu)) C]^{-1} via Cholesky; symmetric positive
  /// definite by construction.
  arma::mat hessian_covariance(const LatentPoint& mu) const;

  const arma::vec& offset_base() const { return base_; }

 private:
  const ModelParams* params_;
  arma::vec base_;      // B^T x_i + o_i
  arma::rowvec y_;      // Y_i
  arma::vec x_;         // x_i
  double lgamma_sum_;   // sum_j log Gamma(Y_ij + 1)
};

// Spec-level operations; thin wrappers over IndividualModel.
arma::vec linear_predictor(const ModelParams& params, const Dataset& data,
                           std::size_t i, const LatentPoint& w);
double complete_log_density(const ModelParams& params, const Dataset& data,
                            std::size_t i, const LatentPoint& w);
ParamGrad complete_score(const ModelParams& params, const Dataset& data,
                         std::size_t i, const LatentPoint& w);
LatentPoint conditional_mode(const ModelParams& params, const Dataset& data,
                             std::size_t i);
arma::mat hessian_covariance(const ModelParams& params, const Dataset& data,
                             std::size_t i, const LatentPoint& mu);

/// Draws W_i ~ N(0, I_q), sets Z_i = f_i(W_i) and Y_ij ~ Poisson(exp Z_ij).
/// Deterministic given the seed; individuals use independent substreams.
/// Throws SimulationError identifying (i, j) when a rate is non-finite.
Dataset simulate(const ModelParams& params, const arma::mat& X,
                 const arma::mat& O, std::uint64_t seed);

}  // namespace plnpca
