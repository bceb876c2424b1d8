#include "sandlab/stats.hpp"

#include <algorithm>

namespace sandlab::stats {

MeanSe mean_se(std::span<const double> xs) {
  MeanSe out;
  out.n = static_cast<std::int64_t>(xs.size());
  if (out.n == 0) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(out.n);
  if (out.n < 2) return out;
  double ss = 0.0;
  for (double x : xs) {
    const double d = x - out.mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(out.n - 1);
  out.se = std::sqrt(var / static_cast<double>(out.n));
  return out;
}

MeanSe batch_means(std::span<const double> xs, int n_batches) {
  MeanSe out;
  out.n = static_cast<std::int64_t>(xs.size());
  if (out.n == 0) return out;
  n_batches = std::max(2, std::min<int>(n_batches, static_cast<int>(out.n)));
  const std::int64_t base = out.n / n_batches;
  std::vector<double> bm;
  bm.reserve(n_batches);
  std::int64_t idx = 0;
  for (int b = 0; b < n_batches; ++b) {
    // first (n % n_batches) batches take one extra element
    const std::int64_t len = base + (b < out.n % n_batches ? 1 : 0);
    if (len == 0) continue;
    double s = 0.0;
    for (std::int64_t i = 0; i < len; ++i) s += xs[idx + i];
    idx += len;
    bm.push_back(s / static_cast<double>(len));
  }
  const MeanSe inner = mean_se(bm);
  out.mean = inner.mean;
  out.se = inner.se;
  return out;
}

LinFit least_squares(std::span<const double> x, std::span<const double> y) {
  LinFit fit;
  fit.n = static_cast<int>(std::min(x.size(), y.size()));
  if (fit.n < 2) return fit;
  double sx = 0.0, sy = 0.0;
  for (int i = 0; i < fit.n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / fit.n, my = sy / fit.n;
  double sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < fit.n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (fit.n > 2) {
    double ss_res = 0.0;
    for (int i = 0; i < fit.n; ++i) {
      const double r = y[i] - (fit.intercept + fit.slope * x[i]);
      ss_res += r * r;
    }
    fit.slope_se = std::sqrt(ss_res / (fit.n - 2) / sxx);
  }
  fit.ok = true;
  return fit;
}

LinFit log_linear_fit(std::span<const double> x, std::span<const double> y) {
  std::vector<double> xs, ls;
  const std::size_t n = std::min(x.size(), y.size());
  xs.reserve(n);
  ls.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] > 0.0) {
      xs.push_back(x[i]);
      ls.push_back(std::log(y[i]));
    }
  }
  return least_squares(xs, ls);
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = std::min(x.size(), y.size());
  if (n < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace sandlab::stats
