#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lvce/rng.hpp"
#include "lvce/stats.hpp"

using namespace lvce;
using namespace lvce::stats;

// Reference values below were produced with an independent statistics
// package (scipy 1.15) before this implementation was written, and frozen.

namespace {
const std::vector<double> kNorm10 = {2.1, 3.4, 1.9, 5.6, 3.2, 4.8, 2.7, 3.9, 4.1, 3.3};
const std::vector<double> kNorm17 = {0.12, -1.53, 0.87, -0.22, 1.41, -0.64,  0.33, -1.91, 0.05,
                                     0.78, -0.41, 1.12, -0.95, 0.51, -0.13, 1.77, -0.68};
const std::vector<double> kSkew10 = {1.0, 1.1, 1.2, 1.3, 1.5, 2.0, 3.0, 5.0, 9.0, 17.0};
const std::vector<double> kBimod20 = {0.10, 0.15, 0.12, 0.08, 0.11, 0.13, 0.09, 0.14, 0.10, 0.12,
                                      0.90, 0.88, 0.93, 0.91, 0.87, 0.92, 0.89, 0.94, 0.90, 0.86};
const std::vector<double> kPairA = {10.2, 11.5, 9.8,  12.3, 10.9, 11.1, 10.5, 12.8, 9.5,
                                    11.9, 10.1, 11.3, 10.7, 12.1, 9.9,  11.7, 10.4};
const std::vector<double> kPairB = {9.8,  11.9, 9.1,  11.8, 11.4, 10.6, 10.9, 12.1, 10.2,
                                    11.2, 9.7,  11.8, 10.3, 11.5, 10.6, 11.2, 10.0};
}  // namespace

TEST_CASE("normal quantile round-trips through the normal CDF") {
  for (double p : {0.001, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999}) {
    const double z = normal_quantile(p);
    CHECK(normal_cdf(z) == doctest::Approx(p).epsilon(1e-12));
  }
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0));
  CHECK_THROWS_AS(normal_quantile(0.0), InvalidArgument);
}

TEST_CASE("shapiro-wilk: symmetric 3-sample is exactly normal") {
  const auto r = shapiro_wilk({-1.0, 0.0, 1.0});
  CHECK(r.w == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.p == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("shapiro-wilk matches the frozen reference oracle") {
  struct Case {
    const std::vector<double>* samples;
    double w, p;
  };
  const Case cases[] = {
      {&kNorm10, 0.970377470728, 0.894322869950},
      {&kNorm17, 0.989072035248, 0.998268216468},
      {&kSkew10, 0.689718728327, 0.000661377492},
      {&kBimod20, 0.693036828586, 0.000032103237},
  };
  for (const auto& c : cases) {
    const auto r = shapiro_wilk(*c.samples);
    CHECK(r.w == doctest::Approx(c.w).epsilon(1e-4));
    CHECK(std::fabs(r.p - c.p) < 1e-3);
  }
}

TEST_CASE("shapiro-wilk input validation") {
  CHECK_THROWS_AS(shapiro_wilk({1.0, 1.0, 1.0}), InvalidArgument);  // zero variance
  CHECK_THROWS_AS(shapiro_wilk({1.0, 2.0}), InvalidArgument);       // n < 3
  CHECK_THROWS_AS(shapiro_wilk(std::vector<double>(5001, 0.0)), InvalidArgument);
}

TEST_CASE("wilcoxon: all-positive differences, exact enumeration") {
  const auto r = wilcoxon_signed_rank({1.0, 2.0, 3.0}, {0.0, 0.0, 0.0});
  CHECK(r.w_minus == 0.0);
  CHECK(r.method == WilcoxonMethod::kExact);
  CHECK(r.p == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("wilcoxon: zeros dropped, single pair left") {
  const auto r = wilcoxon_signed_rank({1.0, 1.0, 2.0}, {1.0, 1.0, 1.5});
  CHECK(r.n_used == 1);
  CHECK(r.p == doctest::Approx(1.0));
}

TEST_CASE("wilcoxon: tied magnitudes use average ranks") {
  const auto r = wilcoxon_signed_rank({-1.0, 1.0}, {0.0, 0.0});
  CHECK(r.w_minus == doctest::Approx(1.5));
  CHECK(r.p == doctest::Approx(1.0));
}

TEST_CASE("wilcoxon: all-zero differences rejected") {
  CHECK_THROWS_AS(wilcoxon_signed_rank({1.0, 2.0}, {1.0, 2.0}), InvalidArgument);
}

TEST_CASE("wilcoxon: exact p invariant under sign flip; p in (0, 1]") {
  Rng rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 3 + static_cast<int>(rng.uniform_index(9));
    std::vector<double> a(static_cast<std::size_t>(n)), b(a.size(), 0.0);
    for (auto& x : a) {
      x = rng.uniform(-1.0, 1.0);
      if (x == 0.0) x = 0.5;
    }
    const auto r1 = wilcoxon_signed_rank(a, b);
    std::vector<double> neg = a;
    for (auto& x : neg) x = -x;
    const auto r2 = wilcoxon_signed_rank(neg, b);
    CHECK(r1.p == doctest::Approx(r2.p).epsilon(1e-12));
    CHECK(r1.p > 0.0);
    CHECK(r1.p <= 1.0);
  }
}

TEST_CASE("wilcoxon: n=17 tie-corrected normal approximation matches the oracle") {
  const auto r = wilcoxon_signed_rank(kPairA, kPairB);
  CHECK(r.method == WilcoxonMethod::kNormalApprox);
  CHECK(r.w_minus == doctest::Approx(54.0));
  CHECK(r.p == doctest::Approx(0.295224423221).epsilon(1e-6));
}

TEST_CASE("paired t: closed-form [1,2,3] case") {
  const auto r = paired_t_test({1.0, 2.0, 3.0}, {0.0, 0.0, 0.0});
  CHECK(r.t == doctest::Approx(2.0 * std::sqrt(3.0)).epsilon(1e-9));
  CHECK(r.df == 2.0);
  CHECK(r.p == doctest::Approx(0.074179900227).epsilon(1e-6));
}

TEST_CASE("paired t: antisymmetry and degenerate variance") {
  const auto f = paired_t_test(kPairA, kPairB);
  const auto b = paired_t_test(kPairB, kPairA);
  CHECK(f.t == doctest::Approx(-b.t).epsilon(1e-12));
  CHECK(f.p == doctest::Approx(b.p).epsilon(1e-12));
  CHECK_THROWS_AS(paired_t_test({1.0, 2.0}, {0.0, 1.0}), DegenerateRangeError);
}

TEST_CASE("paired t: n=17 case against the frozen oracle") {
  const auto r = paired_t_test(kPairA, kPairB);
  CHECK(r.t == doctest::Approx(1.173214243862).epsilon(1e-6));
  CHECK(std::fabs(r.p - 0.257880232242) < 1e-4);
}

TEST_CASE("slope regression: exact line sentinel, constant y, zero x-variance") {
  const auto exact = slope_regression({0.0, 1.0, 2.0, 3.0}, {1.0, 3.0, 5.0, 7.0});
  CHECK(exact.slope == doctest::Approx(2.0));
  CHECK(exact.intercept == doctest::Approx(1.0));
  CHECK(exact.exact_fit);
  CHECK(exact.p_slope == 0.0);

  const auto flat = slope_regression({0.0, 1.0, 2.0}, {4.0, 4.0, 4.0});
  CHECK(flat.slope == 0.0);
  CHECK(flat.p_slope == 1.0);

  CHECK_THROWS_AS(slope_regression({1.0, 2.0}, {1.0, 2.0}), InvalidArgument);
  CHECK_THROWS_AS(slope_regression({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), InvalidArgument);
}

TEST_CASE("slope regression matches the frozen OLS oracle") {
  const std::vector<double> x = {0.10, 0.15, 0.20, 0.25, 0.33};
  const std::vector<double> y = {0.931, 0.938, 0.941, 0.947, 0.952};
  const auto r = slope_regression(x, y);
  CHECK(r.slope == doctest::Approx(0.090037831021).epsilon(1e-6));
  CHECK(r.intercept == doctest::Approx(0.923252206810).epsilon(1e-6));
  CHECK(r.p_slope == doctest::Approx(0.001347331359).epsilon(1e-4));
}
