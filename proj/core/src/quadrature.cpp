#include "plnpca/quadrature.hpp"

#include <cmath>

#include "plnpca/errors.hpp"
#include "plnpca/numeric.hpp"

namespace plnpca {

QuadratureRule QuadratureRule::gauss_hermite(std::size_t m) {
  if (m < 2) throw DimensionError("gauss_hermite: order must be >= 2");

  // Jacobi matrix of the (physicists') Hermite polynomials.
  arma::mat jacobi = arma::zeros(m, m);
  for (std::size_t k = 1; k < m; ++k) {
    const double b = std::sqrt(static_cast<double>(k) / 2.0);
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  arma::vec eigval;
  arma::mat eigvec;
  if (!arma::eig_sym(eigval, eigvec, jacobi)) {
    throw DimensionError("gauss_hermite: eigendecomposition failed");
  }

  QuadratureRule rule;
  // Rescale to the standard normal weight; weights are the squared first
  // eigenvector components, normalized so they sum to one.
  rule.nodes = std::sqrt(2.0) * eigval;
  rule.weights = arma::square(eigvec.row(0).t());
  rule.weights /= arma::accu(rule.weights);

  // Enforce exact symmetry of the node set.
  const std::size_t h = m / 2;
  for (std::size_t k = 0; k < h; ++k) {
    const double node = 0.5 * (rule.nodes(m - 1 - k) - rule.nodes(k));
    rule.nodes(k) = -node;
    rule.nodes(m - 1 - k) = node;
    const double weight = 0.5 * (rule.weights(k) + rule.weights(m - 1 - k));
    rule.weights(k) = weight;
    rule.weights(m - 1 - k) = weight;
  }
  if (m % 2 == 1) rule.nodes(h) = 0.0;
  rule.weights /= arma::accu(rule.weights);
  return rule;
}

namespace {

struct PosteriorGrid {
  arma::mat points;     // G x q
  arma::vec log_terms;  // log(gh weight) + log p_theta(Y_i | point)
};

// Tensorizes the rule over q in {1, 2} and evaluates the log integrand of
// p(Y_i) = sum_g w_g p(Y_i | node_g).
PosteriorGrid build_grid(const ModelParams& params, const Dataset& data,
                         std::size_t i, const QuadratureRule& rule) {
  const std::size_t q = params.rank();
  if (q != 1 && q != 2) {
    throw DimensionError("quadrature oracle supports q in {1, 2}, got q = " +
                         std::to_string(q));
  }
  const std::size_t m = rule.order();

  PosteriorGrid grid;
  if (q == 1) {
    grid.points = rule.nodes;
    grid.log_terms = arma::log(rule.weights);
  } else {
    grid.points.set_size(m * m, 2);
    grid.log_terms.set_size(m * m);
    std::size_t g = 0;
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b, ++g) {
        grid.points(g, 0) = rule.nodes(a);
        grid.points(g, 1) = rule.nodes(b);
        grid.log_terms(g) = std::log(rule.weights(a)) + std::log(rule.weights(b));
      }
    }
  }

  // log p(Y_i | w) = log_joint(w) - log N(w; 0, I).
  const IndividualModel model(params, data, i);
  const arma::vec log_joint = model.log_joint_rows(grid.points);
  for (arma::uword g = 0; g < grid.points.n_rows; ++g) {
    if (log_joint(g) == kNegInf) {
      grid.log_terms(g) = kNegInf;
      continue;
    }
    const double wsq = arma::dot(grid.points.row(g), grid.points.row(g));
    const double log_prior = -0.5 * wsq - 0.5 * static_cast<double>(q) * kLog2Pi;
    grid.log_terms(g) += log_joint(g) - log_prior;
  }
  return grid;
}

void check_order(const QuadratureRule& rule) {
  if (rule.order() < 30) {
    throw DimensionError("quadrature oracle needs rule order >= 30");
  }
}

}  // namespace

double gh_marginal_loglik(const ModelParams& params, const Dataset& data,
                          std::size_t i, const QuadratureRule& rule) {
  check_order(rule);
  return log_sum_exp(build_grid(params, data, i, rule).log_terms);
}

ParamGrad gh_score(const ModelParams& params, const Dataset& data,
                   std::size_t i, const QuadratureRule& rule) {
  check_order(rule);
  const PosteriorGrid grid = build_grid(params, data, i, rule);
  const arma::vec post = softmax_from_log(grid.log_terms);
  return IndividualModel(params, data, i).weighted_score(grid.points, post);
}

PosteriorMoments gh_posterior_moments(const ModelParams& params, const Dataset& data,
                                      std::size_t i, const QuadratureRule& rule) {
  check_order(rule);
  const PosteriorGrid grid = build_grid(params, data, i, rule);
  const arma::vec post = softmax_from_log(grid.log_terms);

  PosteriorMoments out;
  out.mean = (post.t() * grid.points).t();
  arma::mat centered = grid.points;
  centered.each_row() -= out.mean.t();
  out.cov = (centered.each_col() % post).t() * centered;
  out.cov = 0.5 * (out.cov + out.cov.t());
  return out;
}

}  // namespace plnpca
