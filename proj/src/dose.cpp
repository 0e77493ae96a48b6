#include "lvce/dose.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace lvce::dose {

std::string dose_model_kind_name(DoseModelKind kind) {
  return kind == DoseModelKind::kLinear ? "linear" : "saturating";
}

DoseModelKind dose_model_kind_from_name(const std::string& name) {
  if (name == "linear") return DoseModelKind::kLinear;
  if (name == "saturating") return DoseModelKind::kSaturating;
  throw InvalidArgument("unknown dose model kind: " + name);
}

void DoseModel::validate() const {
  if (!(k > 0.0)) throw InvalidArgument("DoseModel: k must be positive");
  if (noise_sigma_ld < 0.0) throw InvalidArgument("DoseModel: noise_sigma_ld must be non-negative");
}

DoseFraction DoseFraction::of(double d) {
  if (!(d >= 0.0 && d <= 1.0))
    throw InvalidArgument("DoseFraction: dose must be in [0, 1], got " + std::to_string(d));
  return DoseFraction{d};
}

std::string DoseFraction::percent_label() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%d", static_cast<int>(std::lround(value * 100.0)));
  return buf;
}

double enhancement_scale(const DoseModel& model, double d) {
  if (!(d >= 0.0 && d <= 1.0)) throw InvalidArgument("enhancement_scale: dose outside [0, 1]");
  if (model.kind == DoseModelKind::kLinear) return d;
  return (1.0 - std::exp(-model.k * d)) / (1.0 - std::exp(-model.k));
}

Volume simulate_low_dose(const Volume& pc, const Volume& sd, DoseFraction d,
                         const DoseModel& model, Rng& rng) {
  model.validate();
  if (pc.dims != sd.dims) throw ShapeError("simulate_low_dose: pc/sd dims differ");
  if (pc.spacing != sd.spacing) throw ShapeError("simulate_low_dose: pc/sd spacing differs");
  if (!(d.value >= 0.0 && d.value <= 1.0))
    throw InvalidArgument("simulate_low_dose: dose outside [0, 1]");

  const double s = enhancement_scale(model, d.value);
  Volume out;
  if (s == 0.0) {
    out = pc;
  } else if (s == 1.0) {
    out = sd;
    out.mask = pc.mask;
  } else {
    out = pc;
    for (std::size_t i = 0; i < out.size(); ++i)
      out.data[i] = pc.data[i] + s * (sd.data[i] - pc.data[i]);
  }
  if (model.noise_sigma_ld > 0.0)
    for (double& v : out.data) v += rng.gaussian(0.0, model.noise_sigma_ld);
  return out;
}

std::vector<DoseFraction> dose_schedule(const std::vector<double>& levels) {
  if (levels.empty()) throw InvalidArgument("dose_schedule: empty level list");
  std::vector<double> sorted = levels;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (!(sorted[i] > 0.0 && sorted[i] <= 1.0))
      throw InvalidArgument("dose_schedule: level " + std::to_string(sorted[i]) +
                            " outside (0, 1]");
    if (i > 0 && sorted[i] == sorted[i - 1])
      throw InvalidArgument("dose_schedule: duplicate level " + std::to_string(sorted[i]));
  }
  std::vector<DoseFraction> out;
  out.reserve(sorted.size());
  for (double v : sorted) out.push_back(DoseFraction::of(v));
  return out;
}

}  // namespace lvce::dose
