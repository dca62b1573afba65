#include "plnpca/vem.hpp"

#include <cmath>

#include "plnpca/errors.hpp"
#include "plnpca/numeric.hpp"

namespace plnpca {

namespace {

// Shared forward pass: predictor mean A, variance inflation from the
// diagonal variational covariance, and the Poisson mean proxy
// P = E_q[exp(Z)] = exp(A + half-variance).
struct ElboTerms {
  arma::mat a;    // n x p: C m_i + B^T x_i + o_i, rows stacked
  arma::mat s2;   // n x q: variational variances
  arma::mat p;    // n x p: exp(a + 0.5 * s2 C2^T), inf on saturation
  bool saturated = false;
};

ElboTerms forward(const ModelParams& params, const VariationalParams& vp,
                  const Dataset& data) {
  ElboTerms t;
  t.s2 = arma::exp(2.0 * vp.LogS);
  t.a = vp.M * params.C.t() + data.X * params.B + data.O;
  const arma::mat c2 = arma::square(params.C);  // p x q
  arma::mat arg = t.a + 0.5 * t.s2 * c2.t();
  t.saturated = arg.max() > kExpSaturation;
  t.p = arma::exp(arma::clamp(arg, -arma::datum::inf, kExpSaturation));
  return t;
}

double elbo_from_terms(const ElboTerms& t, const VariationalParams& vp,
                       const Dataset& data) {
  if (t.saturated) return kNegInf;
  double lgamma_sum = 0.0;
  for (arma::uword k = 0; k < data.Y.n_elem; ++k) lgamma_sum += std::lgamma(data.Y(k) + 1.0);
  const double nq = static_cast<double>(vp.M.n_rows * vp.M.n_cols);
  return arma::accu(data.Y % t.a - t.p) - lgamma_sum -
         0.5 * (arma::accu(arma::square(vp.M)) + arma::accu(t.s2)) +
         arma::accu(vp.LogS) + 0.5 * nq;
}

void check_dims(const ModelParams& params, const VariationalParams& vp,
                const Dataset& data) {
  params.validate();
  if (vp.M.n_rows != data.individuals() || vp.M.n_cols != params.rank() ||
      arma::size(vp.M) != arma::size(vp.LogS)) {
    throw DimensionError("VariationalParams dimensions disagree with model/data");
  }
}

}  // namespace

double elbo(const ModelParams& params, const VariationalParams& vp, const Dataset& data) {
  check_dims(params, vp, data);
  return elbo_from_terms(forward(params, vp, data), vp, data);
}

double elbo_with_gradient(const ModelParams& params, const VariationalParams& vp,
                          const Dataset& data, ElboGrad& grad) {
  check_dims(params, vp, data);
  const ElboTerms t = forward(params, vp, data);
  const arma::mat resid = data.Y - t.p;        // n x p
  const arma::mat c2 = arma::square(params.C); // p x q

  grad.theta.dB = data.X.t() * resid;
  grad.theta.dC = resid.t() * vp.M - params.C % (t.p.t() * t.s2);
  grad.dM = resid * params.C - vp.M;
  grad.dLogS = -t.s2 % (t.p * c2) - t.s2 + 1.0;
  return elbo_from_terms(t, vp, data);
}

VemResult vem_fit(const Dataset& data, const ModelParams& theta_init,
                  const VemConfig& config) {
  data.validate();
  VemResult res;
  res.params = theta_init;
  res.vp = VariationalParams::neutral(data.individuals(), theta_init.rank());

  double value = elbo(res.params, res.vp, data);
  if (!std::isfinite(value)) {
    throw FitError("vem_fit: ELBO is non-finite at the starting point");
  }
  res.elbo_path.push_back(value);

  double lr = config.learning_rate;
  const double lr_cap = 10.0 * config.learning_rate;

  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    ElboGrad g;
    elbo_with_gradient(res.params, res.vp, data, g);

    bool accepted = false;
    double cand_value = value;
    ModelParams cand_theta = res.params;
    VariationalParams cand_vp = res.vp;
    for (int half = 0; half < 50; ++half) {
      if (config.update_theta) {
        cand_theta.B = res.params.B + lr * g.theta.dB;
        cand_theta.C = res.params.C + lr * g.theta.dC;
      }
      cand_vp.M = res.vp.M + lr * g.dM;
      cand_vp.LogS = res.vp.LogS + lr * g.dLogS;
      cand_value = elbo(cand_theta, cand_vp, data);
      if (std::isfinite(cand_value) && cand_value >= value) {
        accepted = true;
        break;
      }
      lr *= 0.5;
    }
    if (!accepted) {
      // Step size underflowed: nothing improves anymore at double precision.
      res.converged = true;
      return res;
    }

    const double gain = cand_value - value;
    res.params = cand_theta;
    res.vp = cand_vp;
    value = cand_value;
    res.elbo_path.push_back(value);
    if (gain <= config.tol * (1.0 + std::abs(value))) {
      res.converged = true;
      return res;
    }
    lr = std::min(1.5 * lr, lr_cap);
  }
  return res;
}

VemResult fit_variational(const Dataset& data, const ModelParams& theta,
                          const VemConfig& config) {
  VemConfig fixed = config;
  fixed.update_theta = false;
  return vem_fit(data, theta, fixed);
}

namespace {

// Per-column Poisson GLM by damped Newton, offsets included.
arma::vec poisson_glm(const arma::mat& x, const arma::vec& y, const arma::vec& offset) {
  const arma::uword d = x.n_cols;
  const arma::mat ridge = 1e-8 * arma::eye(d, d);

  // Least squares on the log scale as a starting point.
  arma::vec b;
  const arma::vec target = arma::log1p(y) - offset;
  if (!arma::solve(b, x.t() * x + ridge, x.t() * target)) b = arma::zeros(d);

  auto loglik = [&](const arma::vec& beta) {
    const arma::vec eta = arma::clamp(x * beta + offset, -30.0, 30.0);
    return arma::dot(y, eta) - arma::accu(arma::exp(eta));
  };

  double value = loglik(b);
  for (int iter = 0; iter < 40; ++iter) {
    const arma::vec eta = arma::clamp(x * b + offset, -30.0, 30.0);
    const arma::vec mu = arma::exp(eta);
    const arma::vec grad = x.t() * (y - mu);
    if (arma::abs(grad).max() < 1e-10 * (1.0 + arma::abs(y).max())) break;
    const arma::mat hess = x.t() * (x.each_col() % mu) + ridge;
    arma::vec dir;
    if (!arma::solve(dir, hess, grad)) break;
    double step = 1.0;
    bool moved = false;
    for (int half = 0; half < 30; ++half) {
      const arma::vec cand = b + step * dir;
      const double cand_value = loglik(cand);
      if (std::isfinite(cand_value) && cand_value >= value) {
        b = cand;
        value = cand_value;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return arma::clamp(b, -30.0, 30.0);
}

}  // namespace

ModelParams init_heuristic(const Dataset& data, std::size_t q) {
  data.validate();
  const std::size_t n = data.individuals();
  const std::size_t p = data.variables();
  const std::size_t d = data.covariates();
  if (n <= q) throw DimensionError("init_heuristic: need n > q");

  ModelParams out = ModelParams::zeros(d, p, q);
  for (std::size_t j = 0; j < p; ++j) {
    out.B.col(j) = poisson_glm(data.X, data.Y.col(j), data.O.col(j));
  }

  // Latent structure guess from log1p counts: residual covariance factors.
  const arma::mat logy = arma::log1p(data.Y) - data.O;
  arma::mat b_ls;
  const arma::mat ridge = 1e-8 * arma::eye(d, d);
  if (!arma::solve(b_ls, data.X.t() * data.X + ridge, data.X.t() * logy)) {
    b_ls = arma::zeros(d, p);
  }
  const arma::mat resid = logy - data.X * b_ls;
  const arma::mat cov = resid.t() * resid / static_cast<double>(n);

  arma::vec eigval;
  arma::mat eigvec;
  const bool ok = arma::eig_sym(eigval, eigvec, cov);
  if (!ok || eigval.max() < 1e-8) {
    out.C = 0.1 * arma::eye(p, q);
    return out;
  }
  for (std::size_t k = 0; k < q; ++k) {
    const arma::uword idx = eigval.n_elem - 1 - k;  // eig_sym sorts ascending
    const double scale = std::sqrt(std::max(eigval(idx), 0.0));
    out.C.col(k) = scale * eigvec.col(idx);
  }
  return out;
}

}  // namespace plnpca
