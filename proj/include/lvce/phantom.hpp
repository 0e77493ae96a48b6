#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lvce/rigid.hpp"
#include "lvce/volume.hpp"

namespace lvce::phantom {

enum class Evolution { kGrowth, kShrinkage, kStable };
std::string evolution_name(Evolution e);
Evolution evolution_from_name(const std::string& name);

struct PhantomConfig {
  Index3 dims{32, 32, 32};
  int n_subjects = 20;
  /// Probabilities for {growth, shrinkage, stable}; must sum to 1.
  std::array<double, 3> lesion_evolution_mix{0.4, 0.3, 0.3};
  /// Peak lesion enhancement added to the post-contrast image, in (0, 1].
  double enhancement_gain = 0.35;
  double misalignment_rot_max = 0.04;   // radians per axis
  double misalignment_trans_max = 3.0;  // voxels per axis
  double noise_sigma = 0.01;
  std::uint64_t seed = 1;

  void validate() const;
};

/// One imaging session: pre-contrast and standard-dose post-contrast volumes
/// (low-dose is attached later by the dose simulator). All volumes carry the
/// session brain mask.
struct Session {
  Volume t1_pc;
  Volume t1_sd;
  std::optional<Volume> t1_ld;
};

struct SubjectRecord {
  std::string subject_id;
  Session ses01;
  Session ses02;
  Evolution evolution_label = Evolution::kStable;
  /// Rigid transform baked into ses-02: ses02(v) = anatomy(T(p_v)).
  /// Registering ses-02 onto ses-01 should recover its inverse.
  reg::RigidParams true_misalignment;

  /// Lesion enhancement maps in the aligned (ses-01) frame; analysis aids,
  /// not part of the on-disk cohort.
  Volume enhancement_ses01;
  Volume enhancement_ses02_aligned;
};

/// Deterministic synthetic subject: smooth textured brain ellipsoid, 1-3
/// enhancing lesions (30% ring-enhancing), ses-02 = ses-01 anatomy with
/// lesion radii scaled per evolution label, rigidly misaligned, fresh noise.
SubjectRecord generate_subject(const PhantomConfig& cfg, int subject_index);

std::vector<SubjectRecord> generate_cohort(const PhantomConfig& cfg);

struct CohortSplit {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

/// Seeded random partition honoring the fractions to rounding. Empty splits
/// are an error unless allow_empty is set.
CohortSplit split_cohort(int n_subjects, const std::array<double, 3>& fractions,
                         std::uint64_t seed, bool allow_empty = false);

std::string subject_name(int index);

}  // namespace lvce::phantom
