#ifndef GPESMC_TESTS_KALMAN_HPP
#define GPESMC_TESTS_KALMAN_HPP

// Exact filter and smoother for X_{k+1} = X_k + c + N(0, q), Y_k = X_k + N(0, r).

#include <cmath>
#include <numbers>
#include <vector>

namespace testing_support {

struct KalmanResult {
  std::vector<double> filter_mean, filter_var;
  std::vector<double> smooth_mean, smooth_var;
  std::vector<double> smooth_cross;  // Cov(X_k, X_{k+1} | Y_{0:n})
  double log_likelihood = 0.0;
};

inline KalmanResult kalman(const std::vector<double>& ys, double c, double q, double r, double prior_mean,
                           double prior_var) {
  const std::size_t n = ys.size();
  KalmanResult out;
  out.filter_mean.resize(n);
  out.filter_var.resize(n);
  std::vector<double> pred_mean(n), pred_var(n);
  pred_mean[0] = prior_mean;
  pred_var[0] = prior_var;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) {
      pred_mean[k] = out.filter_mean[k - 1] + c;
      pred_var[k] = out.filter_var[k - 1] + q;
    }
    const double s = pred_var[k] + r;
    const double innovation = ys[k] - pred_mean[k];
    out.log_likelihood += -0.5 * std::log(2.0 * std::numbers::pi * s) - innovation * innovation / (2.0 * s);
    const double gain = pred_var[k] / s;
    out.filter_mean[k] = pred_mean[k] + gain * innovation;
    out.filter_var[k] = (1.0 - gain) * pred_var[k];
  }
  out.smooth_mean = out.filter_mean;
  out.smooth_var = out.filter_var;
  out.smooth_cross.assign(n > 0 ? n - 1 : 0, 0.0);
  for (std::size_t k = n - 1; k-- > 0;) {
    const double j = out.filter_var[k] / pred_var[k + 1];
    out.smooth_mean[k] = out.filter_mean[k] + j * (out.smooth_mean[k + 1] - pred_mean[k + 1]);
    out.smooth_var[k] = out.filter_var[k] + j * j * (out.smooth_var[k + 1] - pred_var[k + 1]);
    out.smooth_cross[k] = j * out.smooth_var[k + 1];
  }
  return out;
}

}  // namespace testing_support

#endif  // GPESMC_TESTS_KALMAN_HPP
