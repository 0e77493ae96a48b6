#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lvce/dose.hpp"
#include "lvce/volume.hpp"

using namespace lvce;
using namespace lvce::dose;

namespace {

void make_pair(Volume& pc, Volume& sd, std::uint64_t seed, bool enhancement_nonnegative) {
  pc = Volume({6, 6, 6}, {1, 1, 1});
  sd = pc;
  Rng rng(seed);
  for (std::size_t i = 0; i < pc.size(); ++i) {
    pc.data[i] = rng.uniform(0.1, 0.6);
    const double e = enhancement_nonnegative ? rng.uniform(0.0, 0.4) : rng.uniform(-0.2, 0.4);
    sd.data[i] = pc.data[i] + e;
  }
}

DoseModel quiet(DoseModelKind kind, double k = 3.0) {
  DoseModel m;
  m.kind = kind;
  m.k = k;
  m.noise_sigma_ld = 0.0;
  return m;
}

}  // namespace

TEST_CASE("endpoints are bitwise exact at zero noise for both model kinds") {
  Volume pc, sd;
  make_pair(pc, sd, 3, false);
  for (auto kind : {DoseModelKind::kLinear, DoseModelKind::kSaturating}) {
    Rng rng(1);
    const Volume at0 = simulate_low_dose(pc, sd, DoseFraction::of(0.0), quiet(kind), rng);
    const Volume at1 = simulate_low_dose(pc, sd, DoseFraction::of(1.0), quiet(kind), rng);
    CHECK(at0.data == pc.data);
    CHECK(at1.data == sd.data);
  }
}

TEST_CASE("linear model: worked example 0.2 + 0.25 * 0.4 = 0.3") {
  Volume pc({1, 1, 1}, {1, 1, 1});
  Volume sd = pc;
  pc.data = {0.2};
  sd.data = {0.6};
  Rng rng(1);
  const Volume ld =
      simulate_low_dose(pc, sd, DoseFraction::of(0.25), quiet(DoseModelKind::kLinear), rng);
  CHECK(ld.data[0] == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("saturating model matches the closed-form scalar oracle voxelwise") {
  Volume pc, sd;
  make_pair(pc, sd, 9, false);
  const double k = 3.0, d = 0.25;
  const double s = (1.0 - std::exp(-k * d)) / (1.0 - std::exp(-k));
  Rng rng(1);
  const Volume ld =
      simulate_low_dose(pc, sd, DoseFraction::of(d), quiet(DoseModelKind::kSaturating, k), rng);
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const double expected = pc.data[i] + s * (sd.data[i] - pc.data[i]);
    CHECK(ld.data[i] == doctest::Approx(expected).epsilon(1e-15));
  }
}

TEST_CASE("enhancement scale is monotone and hits both endpoints exactly") {
  for (auto kind : {DoseModelKind::kLinear, DoseModelKind::kSaturating}) {
    const DoseModel m = quiet(kind, 6.0);
    CHECK(enhancement_scale(m, 0.0) == 0.0);
    CHECK(enhancement_scale(m, 1.0) == 1.0);
    double prev = -1.0;
    for (double d = 0.0; d <= 1.0; d += 0.05) {
      const double s = enhancement_scale(m, d);
      CHECK(s >= prev);
      prev = s;
    }
  }
}

TEST_CASE("voxelwise monotonicity in dose wherever the enhancement is non-negative") {
  Volume pc, sd;
  make_pair(pc, sd, 11, false);  // mixed-sign enhancement
  for (auto kind : {DoseModelKind::kLinear, DoseModelKind::kSaturating}) {
    Rng rng(1);
    const Volume lo = simulate_low_dose(pc, sd, DoseFraction::of(0.15), quiet(kind), rng);
    const Volume hi = simulate_low_dose(pc, sd, DoseFraction::of(0.65), quiet(kind), rng);
    for (std::size_t i = 0; i < pc.size(); ++i) {
      if (sd.data[i] >= pc.data[i]) CHECK(lo.data[i] <= hi.data[i]);
    }
  }
}

TEST_CASE("input validation: shapes, dose range, model parameters") {
  Volume pc, sd;
  make_pair(pc, sd, 13, true);
  Volume small({4, 6, 6}, {1, 1, 1});
  Rng rng(1);
  CHECK_THROWS_AS(simulate_low_dose(small, sd, DoseFraction::of(0.2), quiet(DoseModelKind::kLinear), rng),
                  ShapeError);
  CHECK_THROWS_AS(DoseFraction::of(1.2), InvalidArgument);
  CHECK_THROWS_AS(DoseFraction::of(-0.1), InvalidArgument);
  DoseModel bad;
  bad.k = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("noise is applied only when configured, deterministically per rng") {
  Volume pc, sd;
  make_pair(pc, sd, 17, true);
  DoseModel model = quiet(DoseModelKind::kLinear);
  model.noise_sigma_ld = 0.005;
  Rng rng1(123), rng2(123);
  const Volume a = simulate_low_dose(pc, sd, DoseFraction::of(0.25), model, rng1);
  const Volume b = simulate_low_dose(pc, sd, DoseFraction::of(0.25), model, rng2);
  CHECK(a.data == b.data);
  Rng rng3(1);
  const Volume clean =
      simulate_low_dose(pc, sd, DoseFraction::of(0.25), quiet(DoseModelKind::kLinear), rng3);
  CHECK(a.data != clean.data);
}

TEST_CASE("dose schedule: validation and ordering") {
  const auto study = dose_schedule({0.10, 0.15, 0.20, 0.25, 0.33});
  REQUIRE(study.size() == 5);
  CHECK(study.front().value == 0.10);
  CHECK(study.back().value == 0.33);

  const auto sorted = dose_schedule({0.25, 0.10});
  CHECK(sorted[0].value == 0.10);
  CHECK(sorted[1].value == 0.25);

  CHECK_THROWS_AS(dose_schedule({0.0}), InvalidArgument);
  CHECK_THROWS_AS(dose_schedule({0.2, 0.2}), InvalidArgument);
  CHECK_THROWS_AS(dose_schedule({1.5}), InvalidArgument);
  CHECK_THROWS_AS(dose_schedule({}), InvalidArgument);
}

TEST_CASE("percent labels round to integers") {
  CHECK(DoseFraction::of(0.10).percent_label() == "10");
  CHECK(DoseFraction::of(0.33).percent_label() == "33");
  CHECK(DoseFraction::of(0.25).percent_label() == "25");
}

TEST_CASE("linear model commutes with joint min-max normalization") {
  Volume pc, sd;
  make_pair(pc, sd, 21, true);
  const DoseModel model = quiet(DoseModelKind::kLinear);

  // Path A: simulate on raw volumes, then apply the joint affine map.
  Rng rng_a(1);
  const Volume ld_raw = simulate_low_dose(pc, sd, DoseFraction::of(0.3), model, rng_a);
  IntensityRange range;
  const auto normalized = joint_minmax_normalize({pc, sd}, range);
  Volume ld_mapped = ld_raw;
  for (double& v : ld_mapped.data) v = (v - range.min) / (range.max - range.min);

  // Path B: simulate on the normalized volumes.
  Rng rng_b(1);
  const Volume ld_norm =
      simulate_low_dose(normalized[0], normalized[1], DoseFraction::of(0.3), model, rng_b);

  for (std::size_t i = 0; i < ld_norm.size(); ++i)
    CHECK(ld_norm.data[i] == doctest::Approx(ld_mapped.data[i]).epsilon(1e-12));
}
