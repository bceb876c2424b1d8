#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace sandlab::stats {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::int64_t n = 0;
};

MeanSe mean_se(std::span<const double> xs);

/// Batch-means standard error for (possibly autocorrelated) sequences.
/// Splits xs into n_batches contiguous batches; se is taken across batch means.
MeanSe batch_means(std::span<const double> xs, int n_batches);

/// Standard error of a binomial proportion estimate.
inline double binomial_se(double p_hat, std::int64_t n) {
  if (n <= 0) return 0.0;
  return std::sqrt(std::max(p_hat * (1.0 - p_hat), 0.0) / static_cast<double>(n));
}

/// Unweighted least-squares line fit with the usual slope standard error.
struct LinFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  int n = 0;
  bool ok = false;

  /// |slope|/se > 3, the significance convention used throughout.
  bool slope_significant() const { return ok && slope_se > 0.0 && std::abs(slope) > 3.0 * slope_se; }
};

LinFit least_squares(std::span<const double> x, std::span<const double> y);

/// Fit of log(y) vs x restricted to strictly positive y values.
LinFit log_linear_fit(std::span<const double> x, std::span<const double> y);

double pearson_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace sandlab::stats
