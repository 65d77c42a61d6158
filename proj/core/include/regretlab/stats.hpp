#pragma once

#include <span>
#include <vector>

namespace regretlab {

// Inclusive linear-interpolation quantile (position q * (n - 1)), q in [0, 1].
double quantile(std::vector<double> values, double q);
double median(std::vector<double> values);
double mean(std::span<const double> values);
// Sample variance with n - 1 denominator.
double variance(std::span<const double> values);
double standard_error(std::span<const double> values);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
// Least-squares fit of log(y) = slope * log(x) + intercept. Points with
// non-positive coordinates are rejected with InvalidArgument.
LineFit loglog_fit(std::span<const double> x, std::span<const double> y);

// n points log-uniformly spaced on [lo, hi], inclusive.
std::vector<double> logspace(double lo, double hi, int n);

}  // namespace regretlab
