#pragma once

#include <string>
#include <vector>

#include "lvce/rng.hpp"
#include "lvce/volume.hpp"

namespace lvce::dose {

enum class DoseModelKind { kLinear, kSaturating };
std::string dose_model_kind_name(DoseModelKind kind);
DoseModelKind dose_model_kind_from_name(const std::string& name);

/// Parametric enhancement-scaling model for synthesizing low-dose images.
struct DoseModel {
  DoseModelKind kind = DoseModelKind::kLinear;
  double k = 6.0;                // saturation rate (saturating model only)
  double noise_sigma_ld = 0.005; // extra acquisition noise on the low-dose image

  void validate() const;
};

/// Fraction of the standard gadolinium dose, in [0, 1].
struct DoseFraction {
  double value = 0.25;

  static DoseFraction of(double d);
  /// Display form, e.g. 0.25 -> "25".
  std::string percent_label() const;
};

/// Enhancement scale s(d): linear s = d; saturating
/// s = (1 - exp(-k d)) / (1 - exp(-k)). Both satisfy s(0) = 0, s(1) = 1
/// exactly.
double enhancement_scale(const DoseModel& model, double d);

/// LD = PC + s(d) * (SD - PC), plus optional Gaussian acquisition noise.
/// At zero noise the endpoints are bitwise exact: LD(0) = PC, LD(1) = SD.
Volume simulate_low_dose(const Volume& pc, const Volume& sd, DoseFraction d,
                         const DoseModel& model, Rng& rng);

/// Validates study dose levels: each in (0, 1], sorted ascending, no
/// duplicates.
std::vector<DoseFraction> dose_schedule(const std::vector<double>& levels);

}  // namespace lvce::dose
