#pragma once

// Small numerical and statistical helpers shared by the estimators.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace qpns {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double intercept_se = 0.0;
  double r2 = 0.0;
  std::size_t n = 0;

  // Two-sided Student-t interval for the slope.
  std::pair<double, double> slope_ci(double level = 0.95) const;
};

// Ordinary least squares y = intercept + slope x; needs >= 3 points.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  double variance = 0.0;  // unbiased sample variance
  std::size_t n = 0;
};

MeanSe mean_se(std::span<const double> xs);

// Wilson score interval for a binomial proportion.
std::pair<double, double> wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);

double normal_cdf(double x, double sd = 1.0);
double normal_quantile(double p);
double student_t_quantile(double p, double dof);

// sup_z |F_n(z) - Phi(z / sd)|.
double ks_normal(std::vector<double> samples, double sd);

// Gauss-Legendre rule on [0, 1].
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
};
Quadrature gauss_legendre(std::size_t n);

// Log-spaced values from lo to hi inclusive.
std::vector<double> log_space(double lo, double hi, std::size_t n);

}  // namespace qpns
