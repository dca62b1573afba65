#include "plnpca/model.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <random>
#include <vector>

#include "plnpca/errors.hpp"
#include "plnpca/numeric.hpp"
#include "plnpca/rng.hpp"

namespace plnpca {

namespace {

std::atomic<bool> g_exp_clamp_warned{false};

void warn_exp_clamp() {
  if (!g_exp_clamp_warned.exchange(true)) {
    std::cerr << "plnpca: warning: linear predictor exceeded exp saturation; "
                 "score uses clamped exp(z)\n";
  }
}

// exp with saturation at kExpSaturation, used where -inf is not an option.
inline double exp_clamped(double z) {
  if (z > kExpSaturation) {
    warn_exp_clamp();
    return std::exp(kExpSaturation);
  }
  return std::exp(z);
}

}  // namespace

arma::vec ModelParams::flatten() const {
  return arma::join_cols(arma::vectorise(B), arma::vectorise(C));
}

ModelParams ModelParams::unflatten(const arma::vec& theta, std::size_t d,
                                   std::size_t p, std::size_t q) {
  if (theta.n_elem != d * p + p * q) {
    throw DimensionError("unflatten: length " + std::to_string(theta.n_elem) +
                         " does not match p*(q+d)");
  }
  ModelParams out;
  out.B = arma::reshape(theta.head(d * p), d, p);
  out.C = arma::reshape(theta.tail(p * q), p, q);
  return out;
}

ModelParams ModelParams::zeros(std::size_t d, std::size_t p, std::size_t q) {
  return ModelParams{arma::zeros(d, p), arma::zeros(p, q)};
}

void ModelParams::validate() const {
  if (!B.is_finite() || !C.is_finite()) {
    throw DimensionError("ModelParams: non-finite entries");
  }
  if (B.n_cols != C.n_rows) {
    throw DimensionError("ModelParams: B is d x p and C is p x q, got p = " +
                         std::to_string(B.n_cols) + " vs " + std::to_string(C.n_rows));
  }
  if (C.n_cols > C.n_rows) {
    throw DimensionError("ModelParams: rank q exceeds p");
  }
  if (B.n_rows < 1) {
    throw DimensionError("ModelParams: need at least one covariate (d >= 1)");
  }
}

void Dataset::validate() const {
  if (Y.n_rows != X.n_rows || Y.n_rows != O.n_rows) {
    throw DimensionError("Dataset: row counts of Y, X, O differ");
  }
  if (Y.n_cols != O.n_cols) {
    throw DimensionError("Dataset: Y and O column counts differ");
  }
  if (!X.is_finite() || !O.is_finite() || !Y.is_finite()) {
    throw DimensionError("Dataset: non-finite entries");
  }
  for (arma::uword i = 0; i < Y.n_rows; ++i) {
    for (arma::uword j = 0; j < Y.n_cols; ++j) {
      const double y = Y(i, j);
      if (y < 0.0 || y != std::floor(y)) {
        throw SchemaError("Dataset: Y(" + std::to_string(i) + "," + std::to_string(j) +
                          ") = " + std::to_string(y) + " is not a nonnegative integer");
      }
    }
  }
}

ParamGrad ParamGrad::zeros(std::size_t d, std::size_t p, std::size_t q) {
  return ParamGrad{arma::zeros(d, p), arma::zeros(p, q)};
}

ParamGrad& ParamGrad::operator+=(const ParamGrad& other) {
  dB += other.dB;
  dC += other.dC;
  return *this;
}

ParamGrad& ParamGrad::operator*=(double s) {
  dB *= s;
  dC *= s;
  return *this;
}

arma::vec ParamGrad::flatten() const {
  return arma::join_cols(arma::vectorise(dB), arma::vectorise(dC));
}

double ParamGrad::norm() const {
  return std::sqrt(arma::accu(dB % dB) + arma::accu(dC % dC));
}

IndividualModel::IndividualModel(const ModelParams& params, const Dataset& data,
                                 std::size_t i)
    : params_(&params) {
  if (i >= data.individuals()) {
    throw DimensionError("individual index " + std::to_string(i) + " out of range");
  }
  if (params.variables() != data.variables() || params.covariates() != data.covariates()) {
    throw DimensionError("ModelParams and Dataset dimensions disagree");
  }
  x_ = data.X.row(i).t();
  y_ = data.Y.row(i);
  base_ = params.B.t() * x_ + data.O.row(i).t();
  lgamma_sum_ = 0.0;
  for (arma::uword j = 0; j < y_.n_elem; ++j) lgamma_sum_ += std::lgamma(y_(j) + 1.0);
}

arma::vec IndividualModel::linear_predictor(const LatentPoint& w) const {
  if (w.n_elem != params_->rank()) {
    throw DimensionError("linear_predictor: latent point has wrong length");
  }
  return params_->C * w + base_;
}

double IndividualModel::log_joint(const LatentPoint& w) const {
  const arma::vec z = linear_predictor(w);
  if (z.max() > kExpSaturation) return kNegInf;
  const double poisson = arma::dot(y_.t(), z) - arma::accu(arma::exp(z)) - lgamma_sum_;
  const double q = static_cast<double>(w.n_elem);
  return poisson - 0.5 * arma::dot(w, w) - 0.5 * q * kLog2Pi;
}

ParamGrad IndividualModel::score(const LatentPoint& w) const {
  const arma::vec z = linear_predictor(w);
  arma::vec rate(z.n_elem);
  for (arma::uword j = 0; j < z.n_elem; ++j) rate(j) = exp_clamped(z(j));
  const arma::vec resid = y_.t() - rate;
  return ParamGrad{x_ * resid.t(), resid * w.t()};
}

arma::vec IndividualModel::log_joint_rows(const arma::mat& particles) const {
  const arma::uword n = particles.n_rows;
  if (particles.n_cols != params_->rank()) {
    throw DimensionError("log_joint_rows: particles have wrong column count");
  }
  arma::mat z = particles * params_->C.t();  // N x p
  z.each_row() += base_.t();
  const double q = static_cast<double>(particles.n_cols);
  const double constant = -lgamma_sum_ - 0.5 * q * kLog2Pi;
  arma::vec out(n);
  for (arma::uword r = 0; r < n; ++r) {
    const arma::rowvec zr = z.row(r);
    if (zr.max() > kExpSaturation) {
      out(r) = kNegInf;
      continue;
    }
    out(r) = arma::dot(y_, zr) - arma::accu(arma::exp(zr)) -
             0.5 * arma::dot(particles.row(r), particles.row(r)) + constant;
  }
  return out;
}

ParamGrad IndividualModel::weighted_score(const arma::mat& particles,
                                          const arma::vec& weights) const {
  if (particles.n_rows != weights.n_elem) {
    throw DimensionError("weighted_score: weight count mismatch");
  }
  arma::mat z = particles * params_->C.t();  // N x p
  z.each_row() += base_.t();
  bool clamped = false;
  for (arma::uword k = 0; k < z.n_elem; ++k) {
    if (z(k) > kExpSaturation) {
      z(k) = kExpSaturation;
      clamped = true;
    }
  }
  if (clamped) warn_exp_clamp();
  arma::mat resid = -arma::exp(z);  // N x p
  resid.each_row() += y_;
  const arma::rowvec mean_resid = weights.t() * resid;  // 1 x p
  ParamGrad g;
  g.dB = x_ * mean_resid;
  g.dC = (resid.each_col() % weights).t() * particles;  // p x q
  return g;
}

LatentPoint IndividualModel::conditional_mode() const {
  const std::size_t q = params_->rank();
  arma::vec w = arma::zeros(q);
  double obj = log_joint(w);

  constexpr double kTol = 1e-8;
  constexpr int kMaxIter = 100;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    arma::vec z = linear_predictor(w);
    arma::vec rate(z.n_elem);
    for (arma::uword j = 0; j < z.n_elem; ++j) rate(j) = exp_clamped(z(j));
    const arma::vec grad = params_->C.t() * (y_.t() - rate) - w;
    if (arma::abs(grad).max() < kTol) return w;

    const arma::mat hess = arma::eye(q, q) + params_->C.t() * arma::diagmat(rate) * params_->C;
    arma::vec dir;
    if (!arma::solve(dir, hess, grad, arma::solve_opts::likely_sympd)) {
      throw ConvergenceError("conditional_mode: Newton solve failed",
                             arma::conv_to<std::vector<double>>::from(w));
    }
    double step = 1.0;
    for (int half = 0; half < 60; ++half) {
      const arma::vec cand = w + step * dir;
      const double cand_obj = log_joint(cand);
      if (std::isfinite(cand_obj) && cand_obj >= obj) {
        w = cand;
        obj = cand_obj;
        break;
      }
      step *= 0.5;
    }
  }
  {
    arma::vec z = linear_predictor(w);
    arma::vec rate(z.n_elem);
    for (arma::uword j = 0; j < z.n_elem; ++j) rate(j) = exp_clamped(z(j));
    const arma::vec grad = params_->C.t() * (y_.t() - rate) - w;
    if (arma::abs(grad).max() < kTol) return w;
  }
  throw ConvergenceError("conditional_mode: no convergence after 100 iterations",
                         arma::conv_to<std::vector<double>>::from(w));
}

arma::mat IndividualModel::hessian_covariance(const LatentPoint& mu) const {
  const std::size_t q = params_->rank();
  if (mu.n_elem != q) {
    throw DimensionError("hessian_covariance: mu has wrong length");
  }
  const arma::vec z = linear_predictor(mu);
  arma::vec rate(z.n_elem);
  for (arma::uword j = 0; j < z.n_elem; ++j) rate(j) = exp_clamped(z(j));
  const arma::mat m = arma::eye(q, q) + params_->C.t() * arma::diagmat(rate) * params_->C;
  arma::mat l;
  if (!arma::chol(l, m, "lower")) {
    throw DimensionError("hessian_covariance: factorization failed (non-finite input?)");
  }
  const arma::mat linv = arma::inv(arma::trimatl(l));
  arma::mat s = linv.t() * linv;
  return 0.5 * (s + s.t());
}

arma::vec linear_predictor(const ModelParams& params, const Dataset& data,
                           std::size_t i, const LatentPoint& w) {
  return IndividualModel(params, data, i).linear_predictor(w);
}

double complete_log_density(const ModelParams& params, const Dataset& data,
                            std::size_t i, const LatentPoint& w) {
  return IndividualModel(params, data, i).log_joint(w);
}

ParamGrad complete_score(const ModelParams& params, const Dataset& data,
                         std::size_t i, const LatentPoint& w) {
  return IndividualModel(params, data, i).score(w);
}

LatentPoint conditional_mode(const ModelParams& params, const Dataset& data,
                             std::size_t i) {
  return IndividualModel(params, data, i).conditional_mode();
}

arma::mat hessian_covariance(const ModelParams& params, const Dataset& data,
                             std::size_t i, const LatentPoint& mu) {
  return IndividualModel(params, data, i).hessian_covariance(mu);
}

Dataset simulate(const ModelParams& params, const arma::mat& X,
                 const arma::mat& O, std::uint64_t seed) {
  params.validate();
  const std::size_t n = X.n_rows;
  const std::size_t p = params.variables();
  const std::size_t q = params.rank();
  if (X.n_cols != params.covariates()) {
    throw DimensionError("simulate: X column count does not match B");
  }
  if (O.n_rows != n || O.n_cols != p) {
    throw DimensionError("simulate: O must be n x p");
  }

  Dataset out;
  out.X = X;
  out.O = O;
  out.Y.set_size(n, p);

  constexpr std::uint64_t kSimulateTag = 0x53494D;
  for (std::size_t i = 0; i < n; ++i) {
    auto stream = rng::substream(seed, kSimulateTag, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    arma::vec w(q);
    for (std::size_t k = 0; k < q; ++k) w(k) = normal(stream);
    const arma::vec z = params.C * w + params.B.t() * X.row(i).t() + O.row(i).t();
    for (std::size_t j = 0; j < p; ++j) {
      const double rate = std::exp(z(j));
      if (!std::isfinite(rate)) {
        throw SimulationError("simulate: non-finite Poisson rate at (" +
                                  std::to_string(i) + "," + std::to_string(j) + ")",
                              i, j);
      }
      std::poisson_distribution<long long> poisson(rate);
      out.Y(i, j) = static_cast<double>(poisson(stream));
    }
  }
  return out;
}

}  // namespace plnpca
