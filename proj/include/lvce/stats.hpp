#pragma once

#include <string>
#include <vector>

#include "lvce/errors.hpp"

namespace lvce::stats {

// -- distribution helpers -----------------------------------------------------

/// Standard normal CDF.
double normal_cdf(double z);

/// Standard normal quantile (AS 241, PPND16 precision).
double normal_quantile(double p);

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value for a Student-t statistic with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

// -- tests --------------------------------------------------------------------

struct ShapiroWilkResult {
  double w = 0.0;
  double p = 0.0;
};

/// Shapiro-Wilk normality test, Royston's AS R94 approximation.
/// Requires 3 <= n <= 5000 and non-zero sample variance.
ShapiroWilkResult shapiro_wilk(const std::vector<double>& samples);

enum class WilcoxonMethod { kExact, kNormalApprox };

struct WilcoxonResult {
  double w_minus = 0.0;  // rank sum of negative differences (zeros dropped)
  double p = 0.0;        // two-sided
  WilcoxonMethod method = WilcoxonMethod::kExact;
  int n_used = 0;  // pairs remaining after dropping zero differences
};

/// Wilcoxon signed-rank test on paired samples. Zero differences are dropped
/// (Wilcoxon's treatment), tied |differences| receive average ranks. The
/// two-sided p-value is exact (full enumeration of sign assignments) for
/// n <= 12 and a tie- and continuity-corrected normal approximation above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

struct PairedTResult {
  double t = 0.0;
  double df = 0.0;
  double p = 0.0;
};

/// Paired two-sided t-test; throws DegenerateRangeError when the differences
/// have zero variance.
PairedTResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct SlopeRegressionResult {
  double slope = 0.0;
  double intercept = 0.0;
  double p_slope = 1.0;  // two-sided test of slope == 0
  bool exact_fit = false;
};

/// Ordinary least squares y = slope*x + intercept with a t-test on the slope
/// (df = n-2). A perfect fit with non-zero slope is reported with the
/// exact_fit sentinel (p_slope = 0); constant y gives slope 0, p 1.
SlopeRegressionResult slope_regression(const std::vector<double>& x,
                                       const std::vector<double>& y);

double mean(const std::vector<double>& v);
double sample_sd(const std::vector<double>& v);

}  // namespace lvce::stats
