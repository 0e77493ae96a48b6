#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lvce/metrics.hpp"
#include "lvce/rng.hpp"

using namespace lvce;
using namespace lvce::eval;

namespace {

Volume random_volume(Index3 dims, std::uint64_t seed) {
  Volume v(dims, {1.0, 1.0, 1.0});
  Rng rng(seed);
  for (double& x : v.data) x = rng.uniform();
  return v;
}

std::vector<std::uint8_t> ball_mask(const Index3& dims, double radius_frac) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2], 0);
  const double cx = (dims[0] - 1) / 2.0, cy = (dims[1] - 1) / 2.0, cz = (dims[2] - 1) / 2.0;
  const double r = radius_frac * dims[0] / 2.0;
  std::size_t i = 0;
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x, ++i) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz);
        mask[i] = d2 <= r * r ? 1 : 0;
      }
  return mask;
}

// Direct per-window SSIM: for every evaluated voxel, sum the truncated
// Gaussian weights over the in-bounds, in-mask neighborhood and apply the
// SSIM formula. Deliberately brute force.
double ssim_brute_force(const Volume& x, const Volume& y,
                        const std::vector<std::uint8_t>* mask) {
  const int radius = 5;
  const double sigma = 1.5;
  const double c1 = 1e-4, c2 = 9e-4;
  const auto& d = x.dims;
  double acc = 0.0;
  std::size_t count = 0;
  for (int zc = 0; zc < d[2]; ++zc)
    for (int yc = 0; yc < d[1]; ++yc)
      for (int xc = 0; xc < d[0]; ++xc) {
        const std::size_t ic = x.index(xc, yc, zc);
        if (mask && (*mask)[ic] == 0) continue;
        double wm = 0, wx = 0, wy = 0, wxx = 0, wyy = 0, wxy = 0;
        for (int dz = -radius; dz <= radius; ++dz)
          for (int dy = -radius; dy <= radius; ++dy)
            for (int dx = -radius; dx <= radius; ++dx) {
              const int xi = xc + dx, yi = yc + dy, zi = zc + dz;
              if (xi < 0 || yi < 0 || zi < 0 || xi >= d[0] || yi >= d[1] || zi >= d[2]) continue;
              const std::size_t ii = x.index(xi, yi, zi);
              if (mask && (*mask)[ii] == 0) continue;
              const double w =
                  std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * sigma * sigma));
              wm += w;
              wx += w * x.data[ii];
              wy += w * y.data[ii];
              wxx += w * x.data[ii] * x.data[ii];
              wyy += w * y.data[ii] * y.data[ii];
              wxy += w * x.data[ii] * y.data[ii];
            }
        const double m1 = wx / wm, m2 = wy / wm;
        const double v1 = wxx / wm - m1 * m1;
        const double v2 = wyy / wm - m2 * m2;
        const double cov = wxy / wm - m1 * m2;
        acc += ((2 * m1 * m2 + c1) * (2 * cov + c2)) /
               ((m1 * m1 + m2 * m2 + c1) * (v1 + v2 + c2));
        ++count;
      }
  return acc / static_cast<double>(count);
}

}  // namespace

TEST_CASE("mse and psnr closed forms") {
  const Volume ref = random_volume({6, 6, 6}, 5);
  CHECK(mse_metric(ref, ref) == 0.0);
  CHECK(std::isinf(psnr(ref, ref)));

  Volume off = ref;
  for (double& v : off.data) v += 0.1;
  CHECK(mse_metric(off, ref) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(psnr(off, ref) == doctest::Approx(20.0).epsilon(1e-9));

  Volume small = ref;
  for (double& v : small.data) v += std::sqrt(1e-3);
  CHECK(psnr(small, ref) == doctest::Approx(30.0).epsilon(1e-9));

  Volume other({5, 6, 6}, {1, 1, 1});
  CHECK_THROWS_AS(mse_metric(other, ref), ShapeError);
}

TEST_CASE("psnr strictly decreases as mse increases") {
  const Volume ref = random_volume({6, 6, 6}, 8);
  double last_psnr = std::numeric_limits<double>::infinity();
  for (double delta : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Volume noisy = ref;
    for (double& v : noisy.data) v += delta;
    const double p = psnr(noisy, ref);
    CHECK(p < last_psnr);
    last_psnr = p;
  }
}

TEST_CASE("ssim of an image with itself is 1; symmetric") {
  const Volume a = random_volume({16, 16, 16}, 12);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  const Volume b = random_volume({16, 16, 16}, 13);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
}

TEST_CASE("ssim constant-image closed form") {
  Volume a(Index3{16, 16, 16}, Real3{1, 1, 1});
  Volume b = a;
  std::fill(a.data.begin(), a.data.end(), 0.5);
  std::fill(b.data.begin(), b.data.end(), 0.25);
  const double expected = (2.0 * 0.5 * 0.25 + 1e-4) / (0.5 * 0.5 + 0.25 * 0.25 + 1e-4);
  CHECK(ssim(a, b) == doctest::Approx(expected).epsilon(1e-6));
  CHECK(expected == doctest::Approx(0.80006).epsilon(1e-4));
}

TEST_CASE("ssim matches the brute-force windowed oracle") {
  const Volume a = random_volume({16, 16, 16}, 21);
  const Volume b = random_volume({16, 16, 16}, 22);
  CHECK(ssim(a, b) == doctest::Approx(ssim_brute_force(a, b, nullptr)).epsilon(1e-9));

  const auto mask = ball_mask(a.dims, 0.8);
  CHECK(ssim(a, b, &mask) == doctest::Approx(ssim_brute_force(a, b, &mask)).epsilon(1e-9));
}

TEST_CASE("ssim rejects volumes smaller than the window") {
  const Volume tiny = random_volume({8, 8, 8}, 2);
  CHECK_THROWS_AS(ssim(tiny, tiny), InvalidArgument);
}

TEST_CASE("masked metrics ignore values outside the mask entirely") {
  const Volume a = random_volume({16, 16, 16}, 31);
  const Volume b = random_volume({16, 16, 16}, 32);
  const auto mask = ball_mask(a.dims, 0.7);

  Volume a_junk = a, b_junk = b;
  Rng rng(77);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) continue;
    a_junk.data[i] = rng.uniform(-100.0, 100.0);
    b_junk.data[i] = rng.uniform(-100.0, 100.0);
  }
  CHECK(mse_metric(a_junk, b_junk, &mask) == mse_metric(a, b, &mask));
  CHECK(psnr(a_junk, b_junk, &mask) == psnr(a, b, &mask));
  CHECK(ssim(a_junk, b_junk, &mask) == ssim(a, b, &mask));
}

namespace {

std::vector<MetricsRow> make_rows(ModelTag tag, const std::vector<double>& ssim_values) {
  std::vector<MetricsRow> rows;
  for (std::size_t i = 0; i < ssim_values.size(); ++i) {
    MetricsRow r;
    r.subject_id = "sub-" + std::to_string(100 + i);
    r.model_tag = tag;
    r.dose = 0.25;
    r.mse = 0.01;
    r.psnr = 20.0;
    r.ssim = ssim_values[i];
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

TEST_CASE("compare_models gates on Shapiro-Wilk normality") {
  // Strongly skewed differences: Wilcoxon path.
  const auto a_skew = make_rows(ModelTag::kSingleSession,
                                {0.90, 0.901, 0.902, 0.903, 0.905, 0.91, 0.92, 0.95, 0.99, 0.999});
  const auto b_skew = make_rows(ModelTag::kLongitudinal,
                                {0.90, 0.90, 0.90, 0.90, 0.90, 0.90, 0.90, 0.90, 0.90, 0.90});
  const auto rep1 = compare_models(a_skew, b_skew, Metric::kSsim);
  CHECK(rep1.shapiro_p < 0.05);
  CHECK(rep1.chosen_test == ChosenTest::kWilcoxon);

  // Normal-looking differences (SW p ~ 0.72 per the reference oracle):
  // paired t path.
  const auto a_norm = make_rows(
      ModelTag::kSingleSession, {0.90, 0.91, 0.93, 0.94, 0.95, 0.955, 0.96, 0.97, 0.99, 1.00});
  const auto b_norm = make_rows(
      ModelTag::kLongitudinal,
      {0.8988, 0.9253, 0.9213, 0.9422, 0.9359, 0.9614, 0.9567, 0.9891, 0.9895, 0.9922});
  const auto rep2 = compare_models(a_norm, b_norm, Metric::kSsim);
  CHECK(rep2.shapiro_p >= 0.05);
  CHECK(rep2.chosen_test == ChosenTest::kPairedT);

  // The gate is a pure function of (shapiro_p, alpha).
  CHECK((rep1.chosen_test == ChosenTest::kWilcoxon) == (rep1.shapiro_p < rep1.alpha));
  CHECK((rep2.chosen_test == ChosenTest::kWilcoxon) == (rep2.shapiro_p < rep2.alpha));
}

TEST_CASE("compare_models: identical rows degrade to a no-difference report") {
  const auto rows = make_rows(ModelTag::kSingleSession, {0.9, 0.91, 0.92, 0.93});
  auto rows_b = rows;
  for (auto& r : rows_b) r.model_tag = ModelTag::kLongitudinal;
  const auto rep = compare_models(rows, rows_b, Metric::kSsim);
  CHECK(rep.chosen_test == ChosenTest::kNoDifference);
  CHECK(rep.p == 1.0);
  CHECK(rep.better_model == "none");
}

TEST_CASE("compare_models: mismatched subject sets list the missing ids") {
  const auto a = make_rows(ModelTag::kSingleSession, {0.9, 0.91, 0.92});
  auto b = make_rows(ModelTag::kLongitudinal, {0.9, 0.91, 0.92});
  b.pop_back();
  CHECK_THROWS_WITH_AS(compare_models(a, b, Metric::kSsim), doctest::Contains("sub-102"),
                       InvalidArgument);
}

TEST_CASE("compare_models reports the better model per metric polarity") {
  const auto worse = make_rows(ModelTag::kSingleSession, {0.90, 0.91, 0.92, 0.93, 0.94});
  const auto better = make_rows(ModelTag::kLongitudinal, {0.95, 0.96, 0.97, 0.98, 0.99});
  const auto rep = compare_models(worse, better, Metric::kSsim);
  CHECK(rep.better_model == "longitudinal");

  auto high_mse = worse;
  auto low_mse = better;
  for (auto& r : high_mse) r.mse = 0.02;
  for (auto& r : low_mse) r.mse = 0.01;
  const auto rep_mse = compare_models(high_mse, low_mse, Metric::kMse);
  CHECK(rep_mse.better_model == "longitudinal");
}
