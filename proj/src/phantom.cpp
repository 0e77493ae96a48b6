#include "lvce/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lvce/rng.hpp"

namespace lvce::phantom {

std::string evolution_name(Evolution e) {
  switch (e) {
    case Evolution::kGrowth:
      return "growth";
    case Evolution::kShrinkage:
      return "shrinkage";
    case Evolution::kStable:
      return "stable";
  }
  return "?";
}

Evolution evolution_from_name(const std::string& name) {
  if (name == "growth") return Evolution::kGrowth;
  if (name == "shrinkage") return Evolution::kShrinkage;
  if (name == "stable") return Evolution::kStable;
  throw InvalidArgument("unknown evolution label: " + name);
}

void PhantomConfig::validate() const {
  for (int a = 0; a < 3; ++a)
    if (dims[a] < 16) throw InvalidArgument("PhantomConfig: dims must be >= 16 per axis");
  if (n_subjects <= 0) throw InvalidArgument("PhantomConfig: n_subjects must be positive");
  const double sum = lesion_evolution_mix[0] + lesion_evolution_mix[1] + lesion_evolution_mix[2];
  if (std::fabs(sum - 1.0) > 1e-9)
    throw InvalidArgument("PhantomConfig: lesion_evolution_mix must sum to 1");
  for (double p : lesion_evolution_mix)
    if (p < 0.0) throw InvalidArgument("PhantomConfig: negative evolution probability");
  // Zero gain is permitted as a diagnostic setting (SD degenerates to PC).
  if (enhancement_gain < 0.0 || enhancement_gain > 1.0)
    throw InvalidArgument("PhantomConfig: enhancement_gain must be in [0, 1]");
  if (misalignment_rot_max < 0.0 || misalignment_trans_max < 0.0)
    throw InvalidArgument("PhantomConfig: misalignment bounds must be non-negative");
  if (noise_sigma < 0.0) throw InvalidArgument("PhantomConfig: noise_sigma must be non-negative");
}

std::string subject_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "sub-%03d", index + 1);
  return buf;
}

namespace {

struct TextureMode {
  Real3 k;
  double phase;
  double amp;
};

struct Blob {
  Real3 center;  // voxel coords
  Real3 semi;    // voxels
  double depth;
};

struct LesionSpec {
  Real3 center;     // voxel coords (shared between sessions)
  double radius;    // voxels at ses-01
  double enh;       // enhancement intensity factor, persistent
  double pc_bump;   // pre-contrast visibility
  bool ring;
};

// Analytic scene shared by the two sessions; only lesion radii differ.
struct Scene {
  Real3 brain_center;
  Real3 brain_semi;
  std::vector<TextureMode> modes;
  std::vector<Blob> blobs;
  std::vector<LesionSpec> lesions;
  double lesion_scale_ses02 = 1.0;

  double brain_r(const Real3& p) const {
    double r2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double u = (p[a] - brain_center[a]) / brain_semi[a];
      r2 += u * u;
    }
    return std::sqrt(r2);
  }

  bool inside(const Real3& p) const { return brain_r(p) <= 1.0; }

  // Brain boundary ramp wide enough that trilinear resampling of the edge
  // stays well below the phantom noise floor.
  double edge_window(double r) const { return std::clamp((1.0 - r) / 0.18, 0.0, 1.0); }

  double lesion_profile(const LesionSpec& l, const Real3& p, double radius_scale) const {
    const double rho = l.radius * radius_scale;
    const double dx = p[0] - l.center[0];
    const double dy = p[1] - l.center[1];
    const double dz = p[2] - l.center[2];
    const double u = std::sqrt(dx * dx + dy * dy + dz * dz) / rho;
    if (u >= 1.0) return 0.0;
    const double core = (1.0 - u * u) * (1.0 - u * u);
    if (!l.ring) return core;
    const double g = std::exp(-((u - 0.7) / 0.22) * ((u - 0.7) / 0.22));
    return core * g;
  }

  double tissue(const Real3& p) const {
    const double r = brain_r(p);
    const double w = edge_window(r);
    if (w == 0.0) return 0.0;
    double tex = 0.0;
    for (const auto& m : modes)
      tex += m.amp * std::cos(m.k[0] * p[0] + m.k[1] * p[1] + m.k[2] * p[2] + m.phase);
    double v = 0.5 + 0.12 * tex;
    for (const auto& b : blobs) {
      double u2 = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double u = (p[a] - b.center[a]) / b.semi[a];
        u2 += u * u;
      }
      if (u2 < 1.0) v -= b.depth * (1.0 - u2) * (1.0 - u2);
    }
    return v * w;
  }

  double pre_contrast(const Real3& p, int session) const {
    const double scale = session == 1 ? 1.0 : lesion_scale_ses02;
    double v = tissue(p);
    if (v == 0.0) return 0.0;
    for (const auto& l : lesions) v += l.pc_bump * lesion_profile(l, p, scale);
    return v;
  }

  double enhancement(const Real3& p, int session) const {
    if (!inside(p)) return 0.0;
    const double scale = session == 1 ? 1.0 : lesion_scale_ses02;
    double e = 0.0;
    for (const auto& l : lesions) e += l.enh * lesion_profile(l, p, scale);
    return std::min(e, 1.0);
  }
};

Scene draw_scene(const PhantomConfig& cfg, Rng& rng) {
  Scene s;
  const double nx = cfg.dims[0], ny = cfg.dims[1], nz = cfg.dims[2];
  s.brain_center = {nx / 2.0 + rng.uniform(-1.0, 1.0), ny / 2.0 + rng.uniform(-1.0, 1.0),
                    nz / 2.0 + rng.uniform(-1.0, 1.0)};
  s.brain_semi = {(0.38 + rng.uniform(0.0, 0.04)) * nx, (0.38 + rng.uniform(0.0, 0.04)) * ny,
                  (0.38 + rng.uniform(0.0, 0.04)) * nz};

  const double two_pi = 6.283185307179586;
  for (int j = 0; j < 4; ++j) {
    TextureMode m;
    for (int a = 0; a < 3; ++a) m.k[a] = rng.uniform(0.5, 2.0) * two_pi / cfg.dims[a];
    m.phase = rng.uniform(0.0, two_pi);
    m.amp = rng.uniform(0.15, 0.25);
    s.modes.push_back(m);
  }

  for (int j = 0; j < 2; ++j) {
    Blob b;
    for (int a = 0; a < 3; ++a)
      b.center[a] = s.brain_center[a] + rng.uniform(-0.3, 0.3) * s.brain_semi[a];
    for (int a = 0; a < 3; ++a)
      b.semi[a] = rng.uniform(0.10, 0.22) * s.brain_semi[a];
    b.depth = rng.uniform(0.08, 0.16);
    s.blobs.push_back(b);
  }

  const int n_lesions = 1 + static_cast<int>(rng.uniform_index(3));
  const double min_semi = std::min({s.brain_semi[0], s.brain_semi[1], s.brain_semi[2]});
  for (int j = 0; j < n_lesions; ++j) {
    LesionSpec l;
    // Keep lesions well inside the brain so growth never crosses the mask.
    for (;;) {
      double r2 = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double u = rng.uniform(-0.55, 0.55);
        l.center[a] = s.brain_center[a] + u * s.brain_semi[a];
        r2 += u * u;
      }
      if (r2 <= 0.55 * 0.55) break;
    }
    l.radius = rng.uniform(0.12, 0.22) * min_semi;
    l.enh = rng.uniform(0.6, 1.0);
    l.pc_bump = 0.10;
    l.ring = rng.bernoulli(0.3);
    s.lesions.push_back(l);
  }
  return s;
}

}  // namespace

SubjectRecord generate_subject(const PhantomConfig& cfg, int subject_index) {
  cfg.validate();
  if (subject_index < 0 || subject_index >= cfg.n_subjects)
    throw InvalidArgument("generate_subject: subject_index out of range");

  Rng rng(Rng::derive_seed(cfg.seed, static_cast<std::uint64_t>(subject_index)));
  Scene scene = draw_scene(cfg, rng);

  SubjectRecord rec;
  rec.subject_id = subject_name(subject_index);

  // Evolution label.
  {
    const double u = rng.uniform();
    if (u < cfg.lesion_evolution_mix[0])
      rec.evolution_label = Evolution::kGrowth;
    else if (u < cfg.lesion_evolution_mix[0] + cfg.lesion_evolution_mix[1])
      rec.evolution_label = Evolution::kShrinkage;
    else
      rec.evolution_label = Evolution::kStable;
  }
  scene.lesion_scale_ses02 = rec.evolution_label == Evolution::kGrowth     ? 1.3
                             : rec.evolution_label == Evolution::kShrinkage ? 0.7
                                                                            : 1.0;

  // Inter-session misalignment (physical == voxel coordinates at 1 mm).
  for (int a = 0; a < 3; ++a)
    rec.true_misalignment.rotation[a] =
        rng.uniform(-cfg.misalignment_rot_max, cfg.misalignment_rot_max);
  for (int a = 0; a < 3; ++a)
    rec.true_misalignment.translation[a] =
        rng.uniform(-cfg.misalignment_trans_max, cfg.misalignment_trans_max);

  const Real3 spacing{1.0, 1.0, 1.0};
  auto make_volume = [&]() {
    Volume v(cfg.dims, spacing);
    v.mask.emplace(v.size(), 0);
    return v;
  };

  Session& s1 = rec.ses01;
  Session& s2 = rec.ses02;
  s1.t1_pc = make_volume();
  s1.t1_sd = make_volume();
  s2.t1_pc = make_volume();
  s2.t1_sd = make_volume();
  rec.enhancement_ses01 = Volume(cfg.dims, spacing);
  rec.enhancement_ses02_aligned = Volume(cfg.dims, spacing);

  const reg::Mat3 rot = reg::Mat3::from_euler(rec.true_misalignment.rotation);
  const Real3 c = reg::volume_center(s1.t1_pc);
  const Real3& t = rec.true_misalignment.translation;

  std::size_t i = 0;
  for (int z = 0; z < cfg.dims[2]; ++z)
    for (int y = 0; y < cfg.dims[1]; ++y)
      for (int x = 0; x < cfg.dims[0]; ++x, ++i) {
        const Real3 p{static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)};

        // ses-01 sampled on the grid.
        const double pc1 = scene.pre_contrast(p, 1);
        const double e1 = scene.enhancement(p, 1);
        s1.t1_pc.data[i] = pc1;
        s1.t1_sd.data[i] = pc1 + cfg.enhancement_gain * e1;
        const bool in1 = scene.inside(p);
        (*s1.t1_pc.mask)[i] = in1 ? 1 : 0;
        (*s1.t1_sd.mask)[i] = in1 ? 1 : 0;
        rec.enhancement_ses01.data[i] = e1;
        rec.enhancement_ses02_aligned.data[i] = scene.enhancement(p, 2);

        // ses-02 sampled through the misalignment: the scene is analytic, so
        // the misaligned image is exact rather than a resampled copy.
        const Real3 pr{p[0] - c[0], p[1] - c[1], p[2] - c[2]};
        const Real3 rp = rot * pr;
        const Real3 q{rp[0] + c[0] + t[0], rp[1] + c[1] + t[1], rp[2] + c[2] + t[2]};
        const double pc2 = scene.pre_contrast(q, 2);
        const double e2 = scene.enhancement(q, 2);
        s2.t1_pc.data[i] = pc2;
        s2.t1_sd.data[i] = pc2 + cfg.enhancement_gain * e2;
        const bool in2 = scene.inside(q);
        (*s2.t1_pc.mask)[i] = in2 ? 1 : 0;
        (*s2.t1_sd.mask)[i] = in2 ? 1 : 0;
      }

  // Fresh acquisition noise per image, after all structure.
  if (cfg.noise_sigma > 0.0) {
    for (Volume* v : {&s1.t1_pc, &s1.t1_sd, &s2.t1_pc, &s2.t1_sd})
      for (double& d : v->data) d += rng.gaussian(0.0, cfg.noise_sigma);
  }
  return rec;
}

std::vector<SubjectRecord> generate_cohort(const PhantomConfig& cfg) {
  cfg.validate();
  std::vector<SubjectRecord> cohort;
  cohort.reserve(static_cast<std::size_t>(cfg.n_subjects));
  for (int i = 0; i < cfg.n_subjects; ++i) cohort.push_back(generate_subject(cfg, i));
  return cohort;
}

CohortSplit split_cohort(int n_subjects, const std::array<double, 3>& fractions,
                         std::uint64_t seed, bool allow_empty) {
  if (n_subjects <= 0) throw InvalidArgument("split_cohort: empty cohort");
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::fabs(sum - 1.0) > 1e-9) throw InvalidArgument("split_cohort: fractions must sum to 1");
  for (double f : fractions)
    if (f < 0.0) throw InvalidArgument("split_cohort: negative fraction");

  const int n_train = static_cast<int>(std::lround(fractions[0] * n_subjects));
  const int n_val = static_cast<int>(std::lround(fractions[1] * n_subjects));
  const int n_test = n_subjects - n_train - n_val;
  if (n_test < 0) throw InvalidArgument("split_cohort: rounding produced negative test split");
  if (!allow_empty && (n_train == 0 || n_val == 0 || n_test == 0))
    throw InvalidArgument("split_cohort: fractions yield an empty split");

  std::vector<int> idx(static_cast<std::size_t>(n_subjects));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(Rng::derive_seed(seed, 0x51u));
  for (int i = n_subjects - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i + 1)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }

  CohortSplit split;
  split.train.assign(idx.begin(), idx.begin() + n_train);
  split.val.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
  split.test.assign(idx.begin() + n_train + n_val, idx.end());
  return split;
}

}  // namespace lvce::phantom
