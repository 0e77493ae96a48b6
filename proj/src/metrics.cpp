#include "lvce/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "lvce/threading.hpp"

namespace lvce::eval {

namespace {

void check_same_shape(const Volume& a, const Volume& b, const char* op) {
  if (a.dims != b.dims)
    throw ShapeError(std::string(op) + ": pred/ref dims differ");
}

std::size_t masked_count(const std::vector<std::uint8_t>& mask) {
  std::size_t n = 0;
  for (auto m : mask) n += m != 0;
  return n;
}

}  // namespace

double mse_metric(const Volume& pred, const Volume& ref, const std::vector<std::uint8_t>* mask) {
  check_same_shape(pred, ref, "mse_metric");
  if (mask && mask->size() != pred.size())
    throw ShapeError("mse_metric: mask length does not match volume");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (mask && (*mask)[i] == 0) continue;
    const double d = pred.data[i] - ref.data[i];
    acc += d * d;
    ++n;
  }
  if (n == 0) throw InvalidArgument("mse_metric: empty mask");
  return acc / static_cast<double>(n);
}

double psnr(const Volume& pred, const Volume& ref, const std::vector<std::uint8_t>* mask,
            double data_range) {
  if (!(data_range > 0.0)) throw InvalidArgument("psnr: data_range must be positive");
  const double mse = mse_metric(pred, ref, mask);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

namespace {

// One separable pass of an (unnormalized) truncated Gaussian along `axis`,
// zero beyond the bounds. Applied to pre-masked fields, so bound handling
// and mask handling coincide.
void gaussian_pass(std::vector<double>& field, const Index3& dims, int axis,
                   const std::vector<double>& kernel, int radius) {
  const std::size_t sx = 1;
  const std::size_t sy = static_cast<std::size_t>(dims[0]);
  const std::size_t sz = sy * static_cast<std::size_t>(dims[1]);
  const std::size_t strides[3] = {sx, sy, sz};
  const std::size_t stride = strides[axis];
  const int len = dims[axis];

  // Iterate over all lines along `axis`.
  const int a1 = axis == 0 ? 1 : 0;
  const int a2 = axis == 2 ? 1 : 2;
  const std::size_t s1 = strides[a1];
  const std::size_t s2 = strides[a2];
  const int n1 = dims[a1];
  const int n2 = dims[a2];

  parallel_for(n2, [&](std::int64_t b, std::int64_t e) {
    std::vector<double> line(static_cast<std::size_t>(len));
    for (std::int64_t i2 = b; i2 < e; ++i2) {
      for (int i1 = 0; i1 < n1; ++i1) {
        const std::size_t base = static_cast<std::size_t>(i2) * s2 + static_cast<std::size_t>(i1) * s1;
        for (int i = 0; i < len; ++i) line[static_cast<std::size_t>(i)] = field[base + i * stride];
        for (int i = 0; i < len; ++i) {
          const int k0 = std::max(-radius, -i);
          const int k1 = std::min(radius, len - 1 - i);
          double acc = 0.0;
          for (int k = k0; k <= k1; ++k)
            acc += kernel[static_cast<std::size_t>(k + radius)] * line[static_cast<std::size_t>(i + k)];
          field[base + i * stride] = acc;
        }
      }
    }
  });
}

void gaussian_filter(std::vector<double>& field, const Index3& dims,
                     const std::vector<double>& kernel, int radius) {
  for (int axis = 0; axis < 3; ++axis) gaussian_pass(field, dims, axis, kernel, radius);
}

}  // namespace

double ssim(const Volume& pred, const Volume& ref, const std::vector<std::uint8_t>* mask,
            const SsimParams& params) {
  check_same_shape(pred, ref, "ssim");
  if (mask && mask->size() != pred.size()) throw ShapeError("ssim: mask length does not match volume");
  const int window = 2 * params.radius + 1;
  for (int a = 0; a < 3; ++a) {
    if (pred.dims[a] < window)
      throw InvalidArgument("ssim: volume smaller than the filter window on axis " +
                            std::to_string(a));
  }

  std::vector<double> kernel(static_cast<std::size_t>(window));
  for (int k = -params.radius; k <= params.radius; ++k)
    kernel[static_cast<std::size_t>(k + params.radius)] =
        std::exp(-0.5 * k * k / (params.sigma * params.sigma));

  const std::size_t n = pred.size();
  std::vector<double> wsum(n, 1.0);
  if (mask)
    for (std::size_t i = 0; i < n; ++i) wsum[i] = (*mask)[i] != 0 ? 1.0 : 0.0;

  std::vector<double> mu_x(n), mu_y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double m = wsum[i];
    const double x = pred.data[i] * m;
    const double y = ref.data[i] * m;
    mu_x[i] = x;
    mu_y[i] = y;
    xx[i] = pred.data[i] * x;
    yy[i] = ref.data[i] * y;
    xy[i] = pred.data[i] * y;
  }
  gaussian_filter(wsum, pred.dims, kernel, params.radius);
  gaussian_filter(mu_x, pred.dims, kernel, params.radius);
  gaussian_filter(mu_y, pred.dims, kernel, params.radius);
  gaussian_filter(xx, pred.dims, kernel, params.radius);
  gaussian_filter(yy, pred.dims, kernel, params.radius);
  gaussian_filter(xy, pred.dims, kernel, params.radius);

  const double c1 = params.k1 * params.data_range * params.k1 * params.data_range;
  const double c2 = params.k2 * params.data_range * params.k2 * params.data_range;

  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask && (*mask)[i] == 0) continue;
    const double w = wsum[i];
    const double m1 = mu_x[i] / w;
    const double m2 = mu_y[i] / w;
    const double v1 = xx[i] / w - m1 * m1;
    const double v2 = yy[i] / w - m2 * m2;
    const double cov = xy[i] / w - m1 * m2;
    const double value = ((2.0 * m1 * m2 + c1) * (2.0 * cov + c2)) /
                         ((m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2));
    acc += value;
    ++count;
  }
  if (count == 0) throw InvalidArgument("ssim: empty mask");
  return acc / static_cast<double>(count);
}

std::string model_tag_name(ModelTag tag) {
  switch (tag) {
    case ModelTag::kT1Ld:
      return "t1_ld";
    case ModelTag::kSingleSession:
      return "single_session";
    case ModelTag::kLongitudinal:
      return "longitudinal";
  }
  return "?";
}

ModelTag model_tag_from_name(const std::string& name) {
  if (name == "t1_ld") return ModelTag::kT1Ld;
  if (name == "single_session") return ModelTag::kSingleSession;
  if (name == "longitudinal") return ModelTag::kLongitudinal;
  throw InvalidArgument("unknown model tag: " + name);
}

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::kMse:
      return "mse";
    case Metric::kPsnr:
      return "psnr";
    case Metric::kSsim:
      return "ssim";
  }
  return "?";
}

bool metric_higher_is_better(Metric m) { return m != Metric::kMse; }

double MetricsRow::metric(Metric m) const {
  switch (m) {
    case Metric::kMse:
      return mse;
    case Metric::kPsnr:
      return psnr;
    case Metric::kSsim:
      return ssim;
  }
  return 0.0;
}

ComparisonReport compare_models(const std::vector<MetricsRow>& rows_a,
                                const std::vector<MetricsRow>& rows_b, Metric metric,
                                double alpha) {
  std::map<std::string, double> by_id_a, by_id_b;
  for (const auto& r : rows_a) by_id_a[r.subject_id] = r.metric(metric);
  for (const auto& r : rows_b) by_id_b[r.subject_id] = r.metric(metric);
  std::string missing;
  for (const auto& [id, v] : by_id_a)
    if (!by_id_b.count(id)) missing += " " + id;
  for (const auto& [id, v] : by_id_b)
    if (!by_id_a.count(id)) missing += " " + id;
  if (!missing.empty())
    throw InvalidArgument("compare_models: subject sets differ, missing:" + missing);
  if (by_id_a.empty()) throw InvalidArgument("compare_models: no subjects");

  std::vector<double> va, vb, diff;
  for (const auto& [id, v] : by_id_a) {
    va.push_back(v);
    vb.push_back(by_id_b[id]);
    diff.push_back(v - by_id_b[id]);
  }

  ComparisonReport rep;
  rep.metric = metric;
  rep.alpha = alpha;
  rep.n = static_cast<int>(va.size());
  rep.model_a = rows_a.empty() ? "a" : model_tag_name(rows_a.front().model_tag);
  rep.model_b = rows_b.empty() ? "b" : model_tag_name(rows_b.front().model_tag);
  rep.mean_a = stats::mean(va);
  rep.sd_a = stats::sample_sd(va);
  rep.mean_b = stats::mean(vb);
  rep.sd_b = stats::sample_sd(vb);

  if (rep.mean_a == rep.mean_b) {
    rep.better_model = "none";
  } else {
    const bool a_better =
        metric_higher_is_better(metric) ? rep.mean_a > rep.mean_b : rep.mean_a < rep.mean_b;
    rep.better_model = a_better ? rep.model_a : rep.model_b;
  }

  const bool all_zero = std::all_of(diff.begin(), diff.end(), [](double d) { return d == 0.0; });
  bool degenerate = all_zero;
  if (!degenerate) {
    try {
      const auto sw = stats::shapiro_wilk(diff);
      rep.shapiro_w = sw.w;
      rep.shapiro_p = sw.p;
    } catch (const InvalidArgument&) {
      degenerate = true;  // constant non-zero differences
    }
  }
  if (degenerate) {
    if (all_zero) {
      rep.chosen_test = ChosenTest::kNoDifference;
      rep.p = 1.0;
      return rep;
    }
    // Constant non-zero differences: normality is untestable; the Wilcoxon
    // path is the distribution-free fallback.
    rep.shapiro_p = 0.0;
  }

  if (rep.shapiro_p < alpha) {
    rep.chosen_test = ChosenTest::kWilcoxon;
    const auto wres = stats::wilcoxon_signed_rank(va, vb);
    rep.statistic = wres.w_minus;
    rep.p = wres.p;
  } else {
    rep.chosen_test = ChosenTest::kPairedT;
    const auto tres = stats::paired_t_test(va, vb);
    rep.statistic = tres.t;
    rep.p = tres.p;
  }
  return rep;
}

}  // namespace lvce::eval
