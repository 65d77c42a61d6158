#include "regretlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "regretlab/error.hpp"

namespace regretlab {

double quantile(std::vector<double> values, double q) {
  require(!values.empty(), "quantile of an empty sample");
  require(q >= 0.0 && q <= 1.0, "quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || values[lo] == values[hi]) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double mean(std::span<const double> values) {
  require(!values.empty(), "mean of an empty sample");
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

double variance(std::span<const double> values) {
  require(values.size() >= 2, "variance needs at least two samples");
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return ss / static_cast<double>(values.size() - 1);
}

double standard_error(std::span<const double> values) {
  return std::sqrt(variance(values) / static_cast<double>(values.size()));
}

LineFit loglog_fit(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, "loglog_fit needs >= 2 paired points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, "loglog_fit needs positive data");
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  require(denom > 0.0, "loglog_fit needs distinct x values");
  LineFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

std::vector<double> logspace(double lo, double hi, int n) {
  require(lo > 0.0 && hi >= lo && n >= 1, "logspace needs 0 < lo <= hi, n >= 1");
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < n; ++i) out[i] = std::exp(a + (b - a) * i / (n - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

}  // namespace regretlab
