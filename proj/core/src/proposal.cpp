#include "plnpca/proposal.hpp"

#include <cmath>

#include "plnpca/errors.hpp"
#include "plnpca/numeric.hpp"

namespace plnpca {

namespace {

arma::mat chol_or_throw(const arma::mat& s) {
  if (s.n_rows != s.n_cols) {
    throw AdaptationError("proposal covariance must be square");
  }
  arma::mat l;
  if (!arma::chol(l, s, "lower")) {
    throw AdaptationError("proposal covariance is not positive definite");
  }
  return l;
}

}  // namespace

GaussianMixtureProposal::GaussianMixtureProposal(arma::vec mu, arma::mat chol,
                                                 double alpha, double delta)
    : mu_(std::move(mu)),
      chol_(std::move(chol)),
      alpha_(alpha),
      delta_(delta),
      log_det_half_(arma::accu(arma::log(chol_.diag()))) {}

GaussianMixtureProposal GaussianMixtureProposal::make(arma::vec mu, const arma::mat& s,
                                                      double alpha, double delta) {
  if (!(delta > 1.0)) {
    throw AdaptationError("mixture proposal requires delta > 1");
  }
  return make_relaxed(std::move(mu), s, alpha, delta);
}

GaussianMixtureProposal GaussianMixtureProposal::make_relaxed(arma::vec mu,
                                                              const arma::mat& s,
                                                              double alpha, double delta) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw AdaptationError("mixture proposal requires alpha in (0, 1]");
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw AdaptationError("mixture proposal requires finite delta > 0");
  }
  if (!mu.is_finite() || !s.is_finite()) {
    throw AdaptationError("mixture proposal parameters must be finite");
  }
  if (s.n_rows != mu.n_elem) {
    throw AdaptationError("mixture proposal mean/covariance dimensions disagree");
  }
  return GaussianMixtureProposal(std::move(mu), chol_or_throw(s), alpha, delta);
}

double GaussianMixtureProposal::log_density(const arma::vec& v) const {
  if (v.n_elem != dim()) {
    throw DimensionError("proposal log_density: point has wrong length");
  }
  const double q = static_cast<double>(dim());
  const arma::vec centered = v - mu_;

  // Wide component N(mu, delta I).
  const double wide = -0.5 * q * (kLog2Pi + std::log(delta_)) -
                      0.5 * arma::dot(centered, centered) / delta_;
  if (alpha_ >= 1.0) return wide;

  // Narrow component N(mu, S) through the Cholesky factor.
  const arma::vec u = arma::solve(arma::trimatl(chol_), centered);
  const double narrow = -0.5 * q * kLog2Pi - log_det_half_ - 0.5 * arma::dot(u, u);

  return log_add_exp(std::log1p(-alpha_) + narrow, std::log(alpha_) + wide);
}

arma::vec GaussianMixtureProposal::log_density_rows(const arma::mat& points) const {
  if (points.n_cols != dim()) {
    throw DimensionError("proposal log_density_rows: wrong column count");
  }
  const double q = static_cast<double>(dim());
  arma::mat centered = points.t();  // q x N
  centered.each_col() -= mu_;

  const arma::rowvec sq_wide = arma::sum(arma::square(centered), 0);
  arma::vec wide = -0.5 * q * (kLog2Pi + std::log(delta_)) - 0.5 / delta_ * sq_wide.t();
  if (alpha_ >= 1.0) return wide;

  const arma::mat u = arma::solve(arma::trimatl(chol_), centered);
  const arma::rowvec sq_narrow = arma::sum(arma::square(u), 0);
  const arma::vec narrow = -0.5 * q * kLog2Pi - log_det_half_ - 0.5 * sq_narrow.t();

  arma::vec out(points.n_rows);
  const double la = std::log(alpha_);
  const double l1a = std::log1p(-alpha_);
  for (arma::uword r = 0; r < out.n_elem; ++r) {
    out(r) = log_add_exp(l1a + narrow(r), la + wide(r));
  }
  return out;
}

arma::mat GaussianMixtureProposal::sample(std::size_t n, std::mt19937_64& stream) const {
  if (n < 2) throw DimensionError("proposal sample: need N >= 2 draws");
  const std::size_t q = dim();
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double wide_sd = std::sqrt(delta_);

  arma::mat out(n, q);
  arma::vec z(q);
  for (std::size_t r = 0; r < n; ++r) {
    const bool wide = uniform(stream) < alpha_;
    for (std::size_t k = 0; k < q; ++k) z(k) = normal(stream);
    if (wide) {
      out.row(r) = (mu_ + wide_sd * z).t();
    } else {
      out.row(r) = (mu_ + chol_ * z).t();
    }
  }
  return out;
}

arma::mat repair_spd(const arma::mat& cov) {
  if (!cov.is_finite()) {
    throw AdaptationError("repair_spd: non-finite covariance estimate");
  }
  arma::mat sym = 0.5 * (cov + cov.t());
  arma::mat l;
  if (arma::chol(l, sym, "lower")) return sym;
  const arma::mat eye = arma::eye(sym.n_rows, sym.n_cols);
  for (double jitter = 1e-8; jitter <= 1e-2; jitter *= 2.0) {
    if (arma::chol(l, sym + jitter * eye, "lower")) return sym + jitter * eye;
  }
  // Last resort: keep only the clamped diagonal.
  return arma::diagmat(arma::clamp(sym.diag(), 1e-6, arma::datum::inf));
}

GaussianMixtureProposal adapt_snis(const arma::vec& mean, const arma::mat& cov,
                                   double alpha, double delta) {
  if (!mean.is_finite()) {
    throw AdaptationError("adapt_snis: non-finite moment estimate");
  }
  return GaussianMixtureProposal::make(mean, repair_spd(cov), alpha, delta);
}

GaussianMixtureProposal adapt_hessian(const ModelParams& params, const Dataset& data,
                                      std::size_t i, const arma::vec& mean,
                                      double alpha, double delta) {
  return GaussianMixtureProposal::make(mean, hessian_covariance(params, data, i, mean),
                                       alpha, delta);
}

GaussianMixtureProposal adapt_vem(const arma::vec& m_vem, const arma::vec& s_vem_diag,
                                  double alpha, double delta, bool defensive) {
  if (!m_vem.is_finite() || !s_vem_diag.is_finite()) {
    throw AdaptationError("adapt_vem: non-finite variational parameters");
  }
  if (s_vem_diag.min() <= 0.0) {
    throw AdaptationError("adapt_vem: nonpositive variational variance");
  }
  const double a = defensive ? alpha : 1e-12;
  return GaussianMixtureProposal::make(m_vem, arma::diagmat(s_vem_diag), a, delta);
}

}  // namespace plnpca
