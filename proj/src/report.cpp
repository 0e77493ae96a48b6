#include "lvce/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lvce::study {

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string mean_sd_cell(const std::vector<double>& values, double scale) {
  const double m = stats::mean(values) * scale;
  const double s = stats::sample_sd(values) * scale;
  return fmt("%.4f", m) + " \xC2\xB1 " + fmt("%.4f", s);  // UTF-8 plus-minus
}

std::string p_cell(double p) {
  if (p < 1e-4) return "p < 0.0001";
  return "p = " + fmt("%.4f", p);
}

std::vector<double> column(const std::vector<eval::MetricsRow>& rows, eval::Metric m) {
  std::vector<double> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.push_back(r.metric(m));
  return v;
}

}  // namespace

std::string metrics_csv_header() { return "subject,model,dose,mse,psnr,ssim\n"; }

std::string metrics_row_csv(const eval::MetricsRow& row) {
  std::ostringstream os;
  os << row.subject_id << ',' << eval::model_tag_name(row.model_tag) << ',' << fmt_g(row.dose)
     << ',' << fmt_g(row.mse) << ',' << fmt_g(row.psnr) << ',' << fmt_g(row.ssim) << '\n';
  return os.str();
}

std::vector<eval::MetricsRow> parse_metrics_csv(const std::string& text) {
  std::vector<eval::MetricsRow> rows;
  std::istringstream is(text);
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    eval::MetricsRow row;
    std::getline(ls, row.subject_id, ',');
    std::getline(ls, field, ',');
    row.model_tag = eval::model_tag_from_name(field);
    std::getline(ls, field, ',');
    row.dose = std::stod(field);
    std::getline(ls, field, ',');
    row.mse = std::stod(field);
    std::getline(ls, field, ',');
    row.psnr = std::stod(field);
    std::getline(ls, field, ',');
    row.ssim = std::stod(field);
    rows.push_back(row);
  }
  return rows;
}

std::string render_comparison_table(const std::vector<eval::MetricsRow>& ld_rows,
                                    const std::vector<eval::MetricsRow>& single_rows,
                                    const std::vector<eval::MetricsRow>& longitudinal_rows,
                                    const std::vector<eval::ComparisonReport>& comparisons) {
  struct Entry {
    std::string name;
    const std::vector<eval::MetricsRow>* rows;
  };
  const Entry entries[3] = {{"T1-LD", &ld_rows},
                            {"Single Session", &single_rows},
                            {"Longitudinal", &longitudinal_rows}};

  std::ostringstream os;
  os << std::left;
  auto pad = [](const std::string& s, std::size_t width) {
    std::string out = s;
    // UTF-8 plus-minus is 2 bytes but 1 column; compensate so columns align.
    std::size_t display = out.size();
    const std::size_t pm = out.find("\xC2\xB1");
    if (pm != std::string::npos) display -= 1;
    while (display < width) {
      out += ' ';
      ++display;
    }
    return out;
  };

  os << pad("Model", 18) << pad("MSE (x10^-2)", 22) << pad("PSNR (dB)", 22) << pad("SSIM", 22)
     << '\n';
  os << std::string(82, '-') << '\n';
  for (const auto& e : entries) {
    os << pad(e.name, 18);
    os << pad(mean_sd_cell(column(*e.rows, eval::Metric::kMse), 100.0), 22);
    os << pad(mean_sd_cell(column(*e.rows, eval::Metric::kPsnr), 1.0), 22);
    os << pad(mean_sd_cell(column(*e.rows, eval::Metric::kSsim), 1.0), 22);
    os << '\n';
  }
  // p-values: longitudinal vs single-session, in metric column order.
  os << pad("", 18);
  for (eval::Metric m : {eval::Metric::kMse, eval::Metric::kPsnr, eval::Metric::kSsim}) {
    std::string cell = "-";
    for (const auto& rep : comparisons)
      if (rep.metric == m) cell = p_cell(rep.p);
    os << pad(cell, 22);
  }
  os << '\n';
  return os.str();
}

nlohmann::json comparison_to_json(const eval::ComparisonReport& rep) {
  const char* test = rep.chosen_test == eval::ChosenTest::kWilcoxon   ? "wilcoxon"
                     : rep.chosen_test == eval::ChosenTest::kPairedT ? "paired_t"
                                                                     : "no_difference";
  return nlohmann::json{{"metric", eval::metric_name(rep.metric)},
                        {"model_a", rep.model_a},
                        {"model_b", rep.model_b},
                        {"n", rep.n},
                        {"mean_a", rep.mean_a},
                        {"sd_a", rep.sd_a},
                        {"mean_b", rep.mean_b},
                        {"sd_b", rep.sd_b},
                        {"shapiro_w", rep.shapiro_w},
                        {"shapiro_p", rep.shapiro_p},
                        {"chosen_test", test},
                        {"statistic", rep.statistic},
                        {"p", rep.p},
                        {"better_model", rep.better_model},
                        {"alpha", rep.alpha}};
}

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("box_stats: no values");
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double w = pos - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + w * (values[lo + 1] - values[lo]);
  };
  return {values.front(), quantile(0.25), quantile(0.5), quantile(0.75), values.back()};
}

std::string boxplot_csv(const std::vector<std::string>& labels,
                        const std::vector<BoxStats>& stats) {
  std::ostringstream os;
  os << "model,min,q1,median,q3,max\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& s = stats[i];
    os << labels[i] << ',' << fmt_g(s.min) << ',' << fmt_g(s.q1) << ',' << fmt_g(s.median) << ','
       << fmt_g(s.q3) << ',' << fmt_g(s.max) << '\n';
  }
  return os.str();
}

namespace {

struct PlotFrame {
  double width = 480, height = 320;
  double left = 60, right = 20, top = 36, bottom = 44;
  double lo = 0.0, hi = 1.0;  // value axis range

  double px(double frac) const { return left + frac * (width - left - right); }
  double py(double value) const {
    const double f = (value - lo) / (hi - lo);
    return height - bottom - f * (height - top - bottom);
  }
};

void value_axis(std::ostringstream& os, const PlotFrame& f) {
  os << "  <line x1='" << f.left << "' y1='" << f.py(f.lo) << "' x2='" << f.left << "' y2='"
     << f.py(f.hi) << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = f.lo + (f.hi - f.lo) * i / 4.0;
    os << "  <line x1='" << f.left - 4 << "' y1='" << f.py(v) << "' x2='" << f.left << "' y2='"
       << f.py(v) << "' stroke='black'/>\n";
    os << "  <text x='" << f.left - 8 << "' y='" << f.py(v) + 4
       << "' font-size='10' text-anchor='end'>" << fmt("%.4g", v) << "</text>\n";
  }
}

}  // namespace

std::string boxplot_svg(const std::string& title, const std::vector<std::string>& labels,
                        const std::vector<BoxStats>& stats) {
  PlotFrame f;
  f.lo = stats.front().min;
  f.hi = stats.front().max;
  for (const auto& s : stats) {
    f.lo = std::min(f.lo, s.min);
    f.hi = std::max(f.hi, s.max);
  }
  if (f.hi <= f.lo) f.hi = f.lo + 1e-9;
  const double pad = 0.08 * (f.hi - f.lo);
  f.lo -= pad;
  f.hi += pad;

  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << f.width << "' height='" << f.height
     << "'>\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& s = stats[i];
    os << "  <!-- data model=" << labels[i] << " min=" << fmt_g(s.min) << " q1=" << fmt_g(s.q1)
       << " median=" << fmt_g(s.median) << " q3=" << fmt_g(s.q3) << " max=" << fmt_g(s.max)
       << " -->\n";
  }
  os << "  <text x='" << f.width / 2 << "' y='20' font-size='13' text-anchor='middle'>" << title
     << "</text>\n";
  value_axis(os, f);
  const double n = static_cast<double>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& s = stats[i];
    const double cx = f.px((static_cast<double>(i) + 0.5) / n);
    const double half = 0.14 * (f.width - f.left - f.right) / n * 2.0;
    os << "  <line x1='" << cx << "' y1='" << f.py(s.min) << "' x2='" << cx << "' y2='"
       << f.py(s.max) << "' stroke='black'/>\n";
    for (double v : {s.min, s.max})
      os << "  <line x1='" << cx - half / 2 << "' y1='" << f.py(v) << "' x2='" << cx + half / 2
         << "' y2='" << f.py(v) << "' stroke='black'/>\n";
    os << "  <rect x='" << cx - half << "' y='" << f.py(s.q3) << "' width='" << 2 * half
       << "' height='" << f.py(s.q1) - f.py(s.q3)
       << "' fill='steelblue' fill-opacity='0.5' stroke='black'/>\n";
    os << "  <line x1='" << cx - half << "' y1='" << f.py(s.median) << "' x2='" << cx + half
       << "' y2='" << f.py(s.median) << "' stroke='black' stroke-width='2'/>\n";
    os << "  <text x='" << cx << "' y='" << f.height - f.bottom + 16
       << "' font-size='11' text-anchor='middle'>" << labels[i] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string dose_lines_svg(const std::string& title, const std::vector<double>& doses,
                           const std::vector<DoseSeries>& series) {
  PlotFrame f;
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      const double lo = s.mean[i] - s.sd[i], hi = s.mean[i] + s.sd[i];
      if (first) {
        f.lo = lo;
        f.hi = hi;
        first = false;
      } else {
        f.lo = std::min(f.lo, lo);
        f.hi = std::max(f.hi, hi);
      }
    }
  if (f.hi <= f.lo) f.hi = f.lo + 1e-9;
  const double pad = 0.08 * (f.hi - f.lo);
  f.lo -= pad;
  f.hi += pad;

  const double dmin = doses.front(), dmax = doses.back();
  auto dx = [&](double d) { return f.px((d - dmin) / (dmax - dmin)); };
  static const char* colors[] = {"steelblue", "firebrick", "seagreen", "darkorange"};

  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << f.width << "' height='" << f.height
     << "'>\n";
  for (const auto& s : series) {
    os << "  <!-- data model=" << s.model << " doses=";
    for (double d : doses) os << fmt_g(d) << ";";
    os << " mean=";
    for (double v : s.mean) os << fmt_g(v) << ";";
    os << " sd=";
    for (double v : s.sd) os << fmt_g(v) << ";";
    os << " slope=" << fmt_g(s.fit.slope) << " intercept=" << fmt_g(s.fit.intercept)
       << " p_slope=" << fmt_g(s.fit.p_slope) << " -->\n";
  }
  os << "  <text x='" << f.width / 2 << "' y='20' font-size='13' text-anchor='middle'>" << title
     << "</text>\n";
  value_axis(os, f);
  os << "  <line x1='" << f.left << "' y1='" << f.py(f.lo) << "' x2='" << f.width - f.right
     << "' y2='" << f.py(f.lo) << "' stroke='black'/>\n";
  for (double d : doses)
    os << "  <text x='" << dx(d) << "' y='" << f.height - f.bottom + 16
       << "' font-size='10' text-anchor='middle'>" << fmt("%.0f", d * 100) << "%</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = colors[si % 4];
    os << "  <polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < doses.size(); ++i)
      os << dx(doses[i]) << ',' << f.py(s.mean[i]) << ' ';
    os << "'/>\n";
    for (std::size_t i = 0; i < doses.size(); ++i) {
      os << "  <line x1='" << dx(doses[i]) << "' y1='" << f.py(s.mean[i] - s.sd[i]) << "' x2='"
         << dx(doses[i]) << "' y2='" << f.py(s.mean[i] + s.sd[i]) << "' stroke='" << color
         << "'/>\n";
      os << "  <circle cx='" << dx(doses[i]) << "' cy='" << f.py(s.mean[i]) << "' r='2.5' fill='"
         << color << "'/>\n";
    }
    // Fitted regression, dotted.
    const double y0 = s.fit.intercept + s.fit.slope * dmin;
    const double y1 = s.fit.intercept + s.fit.slope * dmax;
    os << "  <line x1='" << dx(dmin) << "' y1='" << f.py(y0) << "' x2='" << dx(dmax) << "' y2='"
       << f.py(y1) << "' stroke='" << color << "' stroke-dasharray='3,3'/>\n";
    os << "  <text x='" << f.width - f.right << "' y='" << f.top + 14 * static_cast<double>(si)
       << "' font-size='10' text-anchor='end' fill='" << color << "'>" << s.model << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_slice_panel_pgm(const std::string& path, const Volume& pc, const Volume& ld,
                           const Volume& pred, const Volume& sd) {
  const Volume* tiles[4] = {&pc, &ld, &pred, &sd};
  for (const Volume* v : tiles)
    if (v->dims != pc.dims) throw ShapeError("slice panel: volume dims differ");
  const int X = pc.dims[0], Y = pc.dims[1];
  const int z = pc.dims[2] / 2;
  const int width = 5 * X;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("slice panel: cannot open " + path);
  os << "P5\n" << width << " " << Y << "\n255\n";
  auto to_byte = [](double v) {
    const int b = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    return static_cast<unsigned char>(b);
  };
  std::vector<unsigned char> row(static_cast<std::size_t>(width));
  for (int y = 0; y < Y; ++y) {
    for (int t = 0; t < 5; ++t)
      for (int x = 0; x < X; ++x) {
        double v;
        if (t < 4)
          v = tiles[t]->at(x, y, z);
        else
          v = std::fabs(pred.at(x, y, z) - sd.at(x, y, z)) * 4.0;  // error amplified 4x
        row[static_cast<std::size_t>(t * X + x)] = to_byte(v);
      }
    os.write(reinterpret_cast<const char*>(row.data()), width);
  }
  if (!os) throw FormatError("slice panel: failed writing " + path);
}

}  // namespace lvce::study
