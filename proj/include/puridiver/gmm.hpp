#pragma once

// Two-component 1-D Gaussian mixture fitted by EM over sufficient statistics.
// Used to separate small-loss from large-loss examples and low-uncertainty
// from high-uncertainty ones. The "small" component is the one with the
// smaller mean.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace puridiver {

inline constexpr double kVarianceFloor = 1e-8;
inline constexpr double kCollapsedWeight = 1e-3;

struct GmmFit {
  double mean_small = 0.0;
  double mean_large = 0.0;
  double var_small = kVarianceFloor;
  double var_large = kVarianceFloor;
  double weight_small = 0.5;
  double weight_large = 0.5;
  bool degenerate = false;
  int iterations = 0;
  std::vector<double> log_likelihood_history;  // one entry per EM iteration
};

namespace detail {

inline double log_normal_pdf(double v, double mean, double var) {
  const double diff = v - mean;
  return -0.5 * std::log(2.0 * M_PI * var) - diff * diff / (2.0 * var);
}

// log(exp(a) + exp(b)) without overflow.
inline double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace detail

// EM fit. Means initialize at the 25th/75th percentiles (min/max if those
// coincide), both variances at the sample variance, weights at 0.5 each.
// Stops when the log-likelihood delta drops below `tol` or at `max_iter`.
// All-identical values yield a degenerate fit.
inline GmmFit fit_gmm_1d(std::span<const double> values, int max_iter = 100,
                         double tol = 1e-6) {
  const std::size_t n = values.size();
  if (n < 2) throw std::invalid_argument("fit_gmm_1d: need at least two values");

  GmmFit fit;
  const auto [min_it, max_it] = std::minmax_element(values.begin(), values.end());
  if (*min_it == *max_it) {
    fit.mean_small = fit.mean_large = *min_it;
    fit.degenerate = true;
    return fit;
  }

  // EM runs over the sorted copy, making the fit an exact function of the
  // value multiset regardless of input order.
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  double m0 = sorted[n / 4];
  double m1 = sorted[(3 * n) / 4];
  if (m0 == m1) {
    m0 = *min_it;
    m1 = *max_it;
  }

  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : sorted) var += (v - mean) * (v - mean);
  var = std::max(var / static_cast<double>(n), kVarianceFloor);

  double mu[2] = {m0, m1};
  double sigma2[2] = {var, var};
  double w[2] = {0.5, 0.5};

  std::vector<double> resp(n);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iter; ++iter) {
    // E-step; also evaluates the log-likelihood at the current parameters.
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double la = std::log(w[0]) + detail::log_normal_pdf(sorted[i], mu[0], sigma2[0]);
      const double lb = std::log(w[1]) + detail::log_normal_pdf(sorted[i], mu[1], sigma2[1]);
      const double norm = detail::log_sum_exp(la, lb);
      resp[i] = std::exp(la - norm);
      ll += norm;
    }
    fit.log_likelihood_history.push_back(ll);
    fit.iterations = iter + 1;
    if (std::abs(ll - prev_ll) < tol) break;
    prev_ll = ll;

    // M-step.
    double r0 = 0.0, sum0 = 0.0, sum1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      r0 += resp[i];
      sum0 += resp[i] * sorted[i];
      sum1 += (1.0 - resp[i]) * sorted[i];
    }
    const double r1 = static_cast<double>(n) - r0;
    if (r0 > 0.0) mu[0] = sum0 / r0;
    if (r1 > 0.0) mu[1] = sum1 / r1;
    double v0 = 0.0, v1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      v0 += resp[i] * (sorted[i] - mu[0]) * (sorted[i] - mu[0]);
      v1 += (1.0 - resp[i]) * (sorted[i] - mu[1]) * (sorted[i] - mu[1]);
    }
    sigma2[0] = std::max(r0 > 0.0 ? v0 / r0 : kVarianceFloor, kVarianceFloor);
    sigma2[1] = std::max(r1 > 0.0 ? v1 / r1 : kVarianceFloor, kVarianceFloor);
    w[0] = r0 / static_cast<double>(n);
    w[1] = r1 / static_cast<double>(n);
  }

  int small = mu[0] <= mu[1] ? 0 : 1;
  int large = 1 - small;
  fit.mean_small = mu[small];
  fit.mean_large = mu[large];
  fit.var_small = sigma2[small];
  fit.var_large = sigma2[large];
  fit.weight_small = w[small];
  fit.weight_large = w[large];
  if ((fit.weight_small < kCollapsedWeight && fit.var_small <= kVarianceFloor) ||
      (fit.weight_large < kCollapsedWeight && fit.var_large <= kVarianceFloor)) {
    fit.degenerate = true;
  }
  // Components that converged onto each other carry no split information; the
  // posterior would reduce to the weights.
  const double scale = std::sqrt(std::max(fit.var_small, fit.var_large));
  if (fit.mean_large - fit.mean_small <= 1e-3 * scale) {
    fit.degenerate = true;
  }
  return fit;
}

// Bayes posterior of the small-mean component at `value`. Degenerate fits
// report 1.0 (everything treated as the small/clean side).
inline double posterior_small(const GmmFit& gmm, double value) {
  if (gmm.degenerate) return 1.0;
  const double la = (gmm.weight_small > 0.0
                         ? std::log(gmm.weight_small) +
                               detail::log_normal_pdf(value, gmm.mean_small, gmm.var_small)
                         : -std::numeric_limits<double>::infinity());
  const double lb = (gmm.weight_large > 0.0
                         ? std::log(gmm.weight_large) +
                               detail::log_normal_pdf(value, gmm.mean_large, gmm.var_large)
                         : -std::numeric_limits<double>::infinity());
  if (la == -std::numeric_limits<double>::infinity()) return 0.0;
  if (lb == -std::numeric_limits<double>::infinity()) return 1.0;
  return 1.0 / (1.0 + std::exp(lb - la));
}

// Exact complement of posterior_small.
inline double posterior_large(const GmmFit& gmm, double value) {
  return 1.0 - posterior_small(gmm, value);
}

}  // namespace puridiver
