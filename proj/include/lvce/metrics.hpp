#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lvce/stats.hpp"
#include "lvce/volume.hpp"

namespace lvce::eval {

/// Mean squared difference over the mask (whole volume when absent).
/// Shapes must match; images are expected on the normalized [0,1] scale.
double mse_metric(const Volume& pred, const Volume& ref,
                  const std::vector<std::uint8_t>* mask = nullptr);

/// 10*log10(data_range^2 / mse); +infinity when mse is (exactly) zero.
double psnr(const Volume& pred, const Volume& ref,
            const std::vector<std::uint8_t>* mask = nullptr, double data_range = 1.0);

struct SsimParams {
  double sigma = 1.5;  // Gaussian window, truncated at radius
  int radius = 5;      // 11^3 support
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Structural similarity with a 3D Gaussian window. Local statistics are
/// weighted means restricted to in-bounds, in-mask voxels (weights
/// renormalized per window), and the SSIM map is averaged over the mask, so
/// voxels outside the mask can never influence the result. Throws when the
/// volume is smaller than the window support.
double ssim(const Volume& pred, const Volume& ref,
            const std::vector<std::uint8_t>* mask = nullptr, const SsimParams& params = {});

// -- cohort-level comparison ---------------------------------------------------

enum class ModelTag { kT1Ld, kSingleSession, kLongitudinal };
std::string model_tag_name(ModelTag tag);
ModelTag model_tag_from_name(const std::string& name);

enum class Metric { kMse, kPsnr, kSsim };
std::string metric_name(Metric m);
/// True when larger values of the metric are better.
bool metric_higher_is_better(Metric m);

struct MetricsRow {
  std::string subject_id;
  ModelTag model_tag = ModelTag::kT1Ld;
  double dose = 0.0;
  double mse = 0.0;   // raw scale; reports multiply by 100 for display
  double psnr = 0.0;  // dB
  double ssim = 0.0;
  double metric(Metric m) const;
};

enum class ChosenTest { kWilcoxon, kPairedT, kNoDifference };

struct ComparisonReport {
  Metric metric = Metric::kMse;
  std::string model_a;  // e.g. "single_session"
  std::string model_b;  // e.g. "longitudinal"
  int n = 0;
  double mean_a = 0.0, sd_a = 0.0;
  double mean_b = 0.0, sd_b = 0.0;
  double shapiro_w = 0.0;
  double shapiro_p = 1.0;
  ChosenTest chosen_test = ChosenTest::kNoDifference;
  double statistic = 0.0;
  double p = 1.0;
  /// Model whose mean is better under the metric's polarity ("none" on ties).
  std::string better_model;
  double alpha = 0.05;
};

/// Paired comparison of two models on one metric: Shapiro-Wilk on the
/// paired differences decides between the Wilcoxon signed-rank test
/// (non-normal, p < alpha) and the paired t-test. Rows are matched by
/// subject id; a mismatch lists the missing ids. Identical samples
/// degenerate to a "no difference" report.
ComparisonReport compare_models(const std::vector<MetricsRow>& rows_a,
                                const std::vector<MetricsRow>& rows_b, Metric metric,
                                double alpha = 0.05);

}  // namespace lvce::eval
