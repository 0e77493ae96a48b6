#pragma once

#include <array>

#include "lvce/volume.hpp"

namespace lvce::reg {

struct Mat3 {
  double m[3][3];

  static Mat3 identity();
  /// Rotation applied in fixed axis order x -> y -> z (R = Rz * Ry * Rx).
  static Mat3 from_euler(const Real3& rotation_rad);
  Mat3 transposed() const;
  Mat3 operator*(const Mat3& o) const;
  Real3 operator*(const Real3& v) const;
};

/// Euler angles (x -> y -> z convention) recovered from a rotation matrix,
/// wrapped to (-pi, pi].
Real3 euler_from_matrix(const Mat3& r);

/// Rigid transform acting on physical (mm) coordinates about a center c:
/// T(p) = R (p - c) + c + t. The center is always the physical center of the
/// volume the transform is applied to, so it is not stored here.
struct RigidParams {
  Real3 rotation{0.0, 0.0, 0.0};     // radians, x -> y -> z order
  Real3 translation{0.0, 0.0, 0.0};  // mm

  bool is_identity() const {
    return rotation == Real3{0.0, 0.0, 0.0} && translation == Real3{0.0, 0.0, 0.0};
  }
};

/// Physical center of a volume (origin + (dims-1)/2 * spacing).
Real3 volume_center(const Volume& vol);

/// Inverse about the same center: R' = R^T, t' = -R^T t.
RigidParams invert_rigid(const RigidParams& params);

/// Composition a(b(p)) about a shared center.
RigidParams compose_rigid(const RigidParams& a, const RigidParams& b);

Real3 transform_point(const RigidParams& params, const Real3& center, const Real3& p);

/// Resamples vol at T(p): out(v) = vol(T(p_v)), trilinear for data,
/// nearest-neighbor for the mask, zero fill outside the support. Identity
/// parameters return the input unchanged.
Volume warp_rigid(const Volume& vol, const RigidParams& params);

/// Mean displacement (in voxels) of compose(a, b) from the identity over the
/// masked voxels; the registration-recovery figure of merit when b is a
/// recovered transform and a is the ground truth it should invert.
double mean_residual_displacement_voxels(const RigidParams& a, const RigidParams& b,
                                         const Volume& mask_vol);

}  // namespace lvce::reg
