#include "lvce/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

namespace lvce::stats {

double mean(const std::vector<double>& v) {
  if (v.empty()) throw InvalidArgument("mean of empty vector");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// AS 241 algorithm PPND16.
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("normal_quantile: p must be in (0,1)");
  const double q = p - 0.5;
  double r;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                 67265.770927008700853) *
                    r +
                45921.953931549871457) *
                   r +
               13731.693765509461125) *
                  r +
              1971.5909503065514427) *
                 r +
             133.14166789178437745) *
                r +
            3.387132872796366608) /
           (((((((5226.495278852545703 * r + 28729.085735721942674) * r +
                 39307.89580009271061) *
                    r +
                21213.794301586595867) *
                   r +
               5394.1960214247511077) *
                  r +
              687.1870074920579083) *
                 r +
             42.313330701600911252) *
                r +
            1.0);
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
                0.24178072517745061177) *
                   r +
               1.27045825245236838258) *
                  r +
              3.64784832476320460504) *
                 r +
             5.7694972214606914055) *
                r +
            4.6303378461565452959) *
               r +
           1.42343711074968357734) /
          (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
                0.0151986665636164571966) *
                   r +
               0.14810397642748007459) *
                  r +
              0.68976733498510000455) *
                 r +
             1.6763848301838038494) *
                r +
            2.05319162663775882187) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                0.0012426609473880784386) *
                   r +
               0.026532189526576123093) *
                  r +
              0.29656057182850489123) *
                 r +
             1.7848265399172913358) *
                r +
            5.4637849111641143699) *
               r +
           6.6579046435011037772) /
          (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
                1.8463183175100546818e-5) *
                   r +
               7.868691311456132591e-4) *
                  r +
              0.0148753612908506148525) *
                 r +
             0.13692988092273580531) *
                r +
            0.59983220655588793769) *
               r +
           1.0);
  }
  return q < 0.0 ? -val : val;
}

namespace {

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = a * std::log(x) + b * std::log(1.0 - x) - log_beta(a, b);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (df <= 0.0) throw InvalidArgument("student_t_two_sided_p: df must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

// -- Shapiro-Wilk (AS R94) ------------------------------------------------------

namespace {

double poly(const double* c, int n, double x) {
  double v = c[0];
  double xi = 1.0;
  for (int i = 1; i < n; ++i) {
    xi *= x;
    v += c[i] * xi;
  }
  return v;
}

}  // namespace

ShapiroWilkResult shapiro_wilk(const std::vector<double>& samples) {
  const int n = static_cast<int>(samples.size());
  if (n < 3 || n > 5000)
    throw InvalidArgument("shapiro_wilk: sample size must satisfy 3 <= n <= 5000");
  std::vector<double> x = samples;
  std::sort(x.begin(), x.end());
  if (x.back() - x.front() <= 0.0)
    throw InvalidArgument("shapiro_wilk: sample has zero variance");

  const int n2 = n / 2;
  std::vector<double> a(n2);
  if (n == 3) {
    a[0] = std::sqrt(0.5);
  } else {
    // Expected normal order statistics via Blom scores, polished into the
    // W coefficients with Royston's correction polynomials.
    std::vector<double> m(n2);
    double ssq_m = 0.0;
    const double an25 = n + 0.25;
    for (int i = 0; i < n2; ++i) {
      m[i] = normal_quantile((i + 1 - 0.375) / an25);
      ssq_m += m[i] * m[i];
    }
    ssq_m *= 2.0;
    const double rsn = 1.0 / std::sqrt(static_cast<double>(n));
    static const double c1[6] = {0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
    static const double c2[6] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    const double a1 = poly(c1, 6, rsn) - m[0] / std::sqrt(ssq_m);
    int i1;
    double fac;
    if (n > 5) {
      i1 = 2;
      const double a2 = poly(c2, 6, rsn) - m[1] / std::sqrt(ssq_m);
      fac = std::sqrt((ssq_m - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) /
                      (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
      a[0] = a1;
      a[1] = a2;
    } else {
      i1 = 1;
      fac = std::sqrt((ssq_m - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1));
      a[0] = a1;
    }
    for (int i = i1; i < n2; ++i) a[i] = -m[i] / fac;
  }

  const double xbar = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ssq = 0.0;
  for (double v : x) ssq += (v - xbar) * (v - xbar);
  double b = 0.0;
  for (int i = 0; i < n2; ++i) b += a[i] * (x[n - 1 - i] - x[i]);
  double w = b * b / ssq;
  if (w > 1.0) w = 1.0;

  double p;
  if (n == 3) {
    constexpr double kPi6 = 1.90985931710274;    // 6/pi
    constexpr double kStqr = 1.04719755119660;   // asin(sqrt(3/4))
    p = kPi6 * (std::asin(std::sqrt(w)) - kStqr);
    p = std::clamp(p, 0.0, 1.0);
  } else if (n <= 11) {
    static const double g[2] = {-2.273, 0.459};
    static const double c3[4] = {0.5440, -0.39978, 0.025054, -0.0006714};
    static const double c4[4] = {1.3822, -0.77857, 0.062767, -0.0020322};
    const double gamma = poly(g, 2, static_cast<double>(n));
    const double arg = gamma - std::log(1.0 - w);
    if (arg <= 0.0) {
      p = 1e-99;
    } else {
      const double y = -std::log(arg);
      const double mu = poly(c3, 4, static_cast<double>(n));
      const double sigma = std::exp(poly(c4, 4, static_cast<double>(n)));
      p = 1.0 - normal_cdf((y - mu) / sigma);
    }
  } else {
    static const double c5[4] = {-1.5861, -0.31082, -0.083751, 0.0038915};
    static const double c6[3] = {-0.4803, -0.082676, 0.0030302};
    const double ln_n = std::log(static_cast<double>(n));
    const double y = std::log(1.0 - w);
    const double mu = poly(c5, 4, ln_n);
    const double sigma = std::exp(poly(c6, 3, ln_n));
    p = 1.0 - normal_cdf((y - mu) / sigma);
  }
  return {w, p};
}

// -- Wilcoxon signed-rank --------------------------------------------------------

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw InvalidArgument("wilcoxon_signed_rank: paired samples must have equal length");
  std::vector<double> d;
  d.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double di = a[i] - b[i];
    if (di != 0.0) d.push_back(di);
  }
  const int n = static_cast<int>(d.size());
  if (n == 0) throw InvalidArgument("wilcoxon_signed_rank: all differences are zero");

  // Average ranks of |d|.
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](int i, int j) { return std::fabs(d[i]) < std::fabs(d[j]); });
  std::vector<double> rank(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && std::fabs(d[idx[j + 1]]) == std::fabs(d[idx[i]])) ++j;
    const double avg = (i + j) / 2.0 + 1.0;
    for (int k = i; k <= j; ++k) rank[idx[k]] = avg;
    i = j + 1;
  }

  double w_minus = 0.0, w_plus = 0.0;
  for (int k = 0; k < n; ++k) (d[k] < 0.0 ? w_minus : w_plus) += rank[k];

  WilcoxonResult res;
  res.w_minus = w_minus;
  res.n_used = n;

  if (n <= 12) {
    // Exact two-sided p by enumerating every sign assignment; ties are
    // handled naturally because the enumeration reuses the average ranks.
    res.method = WilcoxonMethod::kExact;
    const std::uint32_t total = 1u << n;
    std::uint32_t count_le = 0, count_ge = 0;
    constexpr double kTieEps = 1e-9;
    for (std::uint32_t s = 0; s < total; ++s) {
      double wm = 0.0;
      for (int k = 0; k < n; ++k)
        if (s & (1u << k)) wm += rank[k];
      if (wm <= w_minus + kTieEps) ++count_le;
      if (wm >= w_minus - kTieEps) ++count_ge;
    }
    const double p_le = static_cast<double>(count_le) / total;
    const double p_ge = static_cast<double>(count_ge) / total;
    res.p = std::min(1.0, 2.0 * std::min(p_le, p_ge));
  } else {
    res.method = WilcoxonMethod::kNormalApprox;
    const double dn = n;
    const double mn = dn * (dn + 1.0) / 4.0;
    double tie_term = 0.0;
    i = 0;
    std::sort(idx.begin(), idx.end(),
              [&](int ii, int jj) { return std::fabs(d[ii]) < std::fabs(d[jj]); });
    while (i < n) {
      int j = i;
      while (j + 1 < n && std::fabs(d[idx[j + 1]]) == std::fabs(d[idx[i]])) ++j;
      const double t = j - i + 1;
      tie_term += t * t * t - t;
      i = j + 1;
    }
    const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
    if (var <= 0.0) throw InvalidArgument("wilcoxon_signed_rank: degenerate rank variance");
    const double t_stat = std::min(w_minus, w_plus);
    double num = t_stat - mn;
    // Continuity correction toward the mean.
    if (num < 0.0)
      num += 0.5;
    else if (num > 0.0)
      num -= 0.5;
    const double z = num / std::sqrt(var);
    res.p = std::min(1.0, 2.0 * normal_cdf(-std::fabs(z)));
  }
  return res;
}

PairedTResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw InvalidArgument("paired_t_test: paired samples must have equal length");
  const int n = static_cast<int>(a.size());
  if (n < 2) throw InvalidArgument("paired_t_test: need at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double md = mean(d);
  double ss = 0.0;
  for (double x : d) ss += (x - md) * (x - md);
  const double sd = std::sqrt(ss / (n - 1));
  if (sd == 0.0) throw DegenerateRangeError("paired_t_test: differences have zero variance");
  PairedTResult res;
  res.t = md / (sd / std::sqrt(static_cast<double>(n)));
  res.df = n - 1;
  res.p = student_t_two_sided_p(res.t, res.df);
  return res;
}

SlopeRegressionResult slope_regression(const std::vector<double>& x,
                                       const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("slope_regression: x/y length mismatch");
  const int n = static_cast<int>(x.size());
  if (n < 3) throw InvalidArgument("slope_regression: need at least 3 points");
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw InvalidArgument("slope_regression: zero variance in x");

  SlopeRegressionResult res;
  res.slope = sxy / sxx;
  res.intercept = my - res.slope * mx;
  const double rss = std::max(0.0, syy - res.slope * sxy);
  // Residuals at floating-point noise level mean the line is exact: the
  // t-statistic is unbounded, so report via sentinel instead.
  const double scale = std::max(syy, 1e-30);
  if (rss <= 1e-12 * scale) {
    if (res.slope == 0.0) {
      res.p_slope = 1.0;
    } else {
      res.exact_fit = true;
      res.p_slope = 0.0;
    }
    return res;
  }
  const double df = n - 2;
  const double se = std::sqrt(rss / df / sxx);
  const double t = res.slope / se;
  res.p_slope = student_t_two_sided_p(t, df);
  return res;
}

}  // namespace lvce::stats
