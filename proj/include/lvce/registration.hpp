#pragma once

#include <vector>

#include "lvce/phantom.hpp"
#include "lvce/rigid.hpp"
#include "lvce/volume.hpp"

namespace lvce::reg {

struct RegistrationConfig {
  int pyramid_levels = 3;       // downsample factors 2^(L-1) ... 1
  int max_iters_per_level = 80;
  double step_size = 1.0;       // initial trust step, mm in scaled space
  double convergence_tol = 1e-7;  // relative MSE change

  void validate() const;
};

struct LevelTrace {
  int downsample_factor = 1;
  double start_mse = 0.0;
  double end_mse = 0.0;
  int iterations = 0;
};

struct RegistrationResult {
  RigidParams params;
  std::vector<LevelTrace> levels;
  double initial_mse = 0.0;  // identity parameters at full resolution
  double final_mse = 0.0;    // recovered parameters at full resolution
  /// Set when the final MSE exceeds the pre-registration MSE; also logged.
  bool regressed = false;
};

/// Rigid registration of moving onto fixed by coarse-to-fine gradient
/// descent on the masked MSE, with analytic image-gradient chain rule and a
/// monotone (accept-only) line search. Deterministic. The returned params
/// satisfy warp_rigid(moving, params) ~ fixed.
/// Throws RegistrationFailure when the masked supports do not overlap.
RegistrationResult register_rigid(const Volume& moving, const Volume& fixed,
                                  const RegistrationConfig& cfg = {});

/// Applies one transform to every image of a session (pc, sd, ld, masks),
/// preserving intra-session voxel correspondence.
phantom::Session apply_rigid_to_session(const phantom::Session& sess, const RigidParams& params);

}  // namespace lvce::reg
