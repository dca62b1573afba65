#pragma once

#include <armadillo>
#include <cmath>
#include <limits>

namespace plnpca {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// exp(z) saturates above this; densities return -inf instead of overflowing.
inline constexpr double kExpSaturation = 700.0;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum(exp(x))) with the usual max shift; tolerates -inf entries and
/// returns -inf when all entries are -inf. Fixed-order summation.
inline double log_sum_exp(const arma::vec& x) {
  const double m = x.max();
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (arma::uword r = 0; r < x.n_elem; ++r) acc += std::exp(x(r) - m);
  return m + std::log(acc);
}

inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// softmax of log-values: nonnegative, sums to one; -inf maps to weight zero.
inline arma::vec softmax_from_log(const arma::vec& logw) {
  const double lse = log_sum_exp(logw);
  arma::vec w(logw.n_elem);
  for (arma::uword r = 0; r < logw.n_elem; ++r) {
    w(r) = logw(r) == kNegInf ? 0.0 : std::exp(logw(r) - lse);
  }
  return w / arma::accu(w);
}

}  // namespace plnpca
