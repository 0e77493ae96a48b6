#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lvce/metrics.hpp"
#include "lvce/stats.hpp"
#include "lvce/volume.hpp"

namespace lvce::study {

// -- metrics tables ---------------------------------------------------------------

std::string metrics_csv_header();
std::string metrics_row_csv(const eval::MetricsRow& row);
std::vector<eval::MetricsRow> parse_metrics_csv(const std::string& text);

/// Plain-text table mirroring the study write-up layout: three rows
/// (T1-LD / Single Session / Longitudinal), mean +/- sd per metric with MSE
/// scaled x10^-2, plus a p-value row for longitudinal vs single-session.
std::string render_comparison_table(const std::vector<eval::MetricsRow>& ld_rows,
                                    const std::vector<eval::MetricsRow>& single_rows,
                                    const std::vector<eval::MetricsRow>& longitudinal_rows,
                                    const std::vector<eval::ComparisonReport>& comparisons);

nlohmann::json comparison_to_json(const eval::ComparisonReport& rep);

// -- figures -----------------------------------------------------------------------

struct BoxStats {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};
BoxStats box_stats(std::vector<double> values);

std::string boxplot_csv(const std::vector<std::string>& labels,
                        const std::vector<BoxStats>& stats);

/// Self-contained SVG boxplot; the quartile data is embedded as comments so
/// the figure doubles as its own data record.
std::string boxplot_svg(const std::string& title, const std::vector<std::string>& labels,
                        const std::vector<BoxStats>& stats);

struct DoseSeries {
  std::string model;
  std::vector<double> mean;  // aligned with the dose vector
  std::vector<double> sd;
  stats::SlopeRegressionResult fit;
};

/// Metric-vs-dose line plot with error bars and dotted fitted regression
/// lines, one polyline per model.
std::string dose_lines_svg(const std::string& title, const std::vector<double>& doses,
                           const std::vector<DoseSeries>& series);

/// Mid-axial slice panel [PC | LD | prediction | SD | abs-error] as binary
/// PGM (P5): five X-by-Y tiles side by side, uint8. Intensities clamp from
/// [0,1]; the error tile is |pred - sd| scaled by 4 for visibility.
void write_slice_panel_pgm(const std::string& path, const Volume& pc, const Volume& ld,
                           const Volume& pred, const Volume& sd);

}  // namespace lvce::study
