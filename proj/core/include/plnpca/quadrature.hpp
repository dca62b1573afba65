#pragma once

#include <armadillo>

#include "plnpca/model.hpp"

namespace plnpca {

/// Gauss-Hermite rule adapted to the standard normal: integrates
/// int f(w) N(w; 0, 1) dw as sum_k weights(k) * f(nodes(k)).
struct QuadratureRule {
  arma::vec nodes;    // symmetric about 0
  arma::vec weights;  // positive, sum to 1

  std::size_t order() const { return nodes.n_elem; }

  /// Golub-Welsch on the Hermite Jacobi matrix, then rescaled to the
  /// standard normal and symmetrized.
  static QuadratureRule gauss_hermite(std::size_t m);
};

struct PosteriorMoments {
  arma::vec mean;  // length q
  arma::mat cov;   // q x q, symmetric PSD
};

/// log p_theta(Y_i) by tensorized quadrature; only q in {1, 2} is supported
/// (this is a verification oracle, not a fitting path).
double gh_marginal_loglik(const ModelParams& params, const Dataset& data,
                          std::size_t i, const QuadratureRule& rule);

/// Quadrature version of the score identity: conditional expectation of the
/// complete score under the grid-discretized posterior.
ParamGrad gh_score(const ModelParams& params, const Dataset& data,
                   std::size_t i, const QuadratureRule& rule);

/// Self-normalized quadrature estimates of E[W | Y_i] and V[W | Y_i].
PosteriorMoments gh_posterior_moments(const ModelParams& params, const Dataset& data,
                                      std::size_t i, const QuadratureRule& rule);

}  // namespace plnpca
