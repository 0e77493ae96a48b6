#include "lvce/rigid.hpp"

#include <cmath>

#include "lvce/threading.hpp"

namespace lvce::reg {

Mat3 Mat3::identity() {
  Mat3 r{};
  r.m[0][0] = r.m[1][1] = r.m[2][2] = 1.0;
  return r;
}

Mat3 Mat3::from_euler(const Real3& rot) {
  const double cx = std::cos(rot[0]), sx = std::sin(rot[0]);
  const double cy = std::cos(rot[1]), sy = std::sin(rot[1]);
  const double cz = std::cos(rot[2]), sz = std::sin(rot[2]);
  Mat3 r;
  r.m[0][0] = cz * cy;
  r.m[0][1] = cz * sy * sx - sz * cx;
  r.m[0][2] = cz * sy * cx + sz * sx;
  r.m[1][0] = sz * cy;
  r.m[1][1] = sz * sy * sx + cz * cx;
  r.m[1][2] = sz * sy * cx - cz * sx;
  r.m[2][0] = -sy;
  r.m[2][1] = cy * sx;
  r.m[2][2] = cy * cx;
  return r;
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
  return r;
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += m[i][k] * o.m[k][j];
      r.m[i][j] = acc;
    }
  return r;
}

Real3 Mat3::operator*(const Real3& v) const {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

namespace {

double wrap_angle(double a) {
  constexpr double kPi = 3.14159265358979323846;
  while (a <= -kPi) a += 2.0 * kPi;
  while (a > kPi) a -= 2.0 * kPi;
  return a;
}

}  // namespace

Real3 euler_from_matrix(const Mat3& r) {
  const double sy = -r.m[2][0];
  Real3 angles;
  angles[1] = std::asin(std::clamp(sy, -1.0, 1.0));
  if (std::fabs(sy) < 1.0 - 1e-12) {
    angles[0] = std::atan2(r.m[2][1], r.m[2][2]);
    angles[2] = std::atan2(r.m[1][0], r.m[0][0]);
  } else {
    // Gimbal lock: distribute the remaining rotation into x.
    angles[0] = std::atan2(-r.m[0][1], r.m[1][1]);
    angles[2] = 0.0;
  }
  for (double& a : angles) a = wrap_angle(a);
  return angles;
}

Real3 volume_center(const Volume& vol) {
  return {vol.origin[0] + (vol.dims[0] - 1) / 2.0 * vol.spacing[0],
          vol.origin[1] + (vol.dims[1] - 1) / 2.0 * vol.spacing[1],
          vol.origin[2] + (vol.dims[2] - 1) / 2.0 * vol.spacing[2]};
}

RigidParams invert_rigid(const RigidParams& params) {
  const Mat3 rt = Mat3::from_euler(params.rotation).transposed();
  const Real3 t = rt * params.translation;
  RigidParams inv;
  inv.rotation = euler_from_matrix(rt);
  inv.translation = {-t[0], -t[1], -t[2]};
  return inv;
}

RigidParams compose_rigid(const RigidParams& a, const RigidParams& b) {
  const Mat3 ra = Mat3::from_euler(a.rotation);
  const Mat3 rb = Mat3::from_euler(b.rotation);
  const Real3 tb = ra * b.translation;
  RigidParams c;
  c.rotation = euler_from_matrix(ra * rb);
  c.translation = {tb[0] + a.translation[0], tb[1] + a.translation[1], tb[2] + a.translation[2]};
  return c;
}

Real3 transform_point(const RigidParams& params, const Real3& center, const Real3& p) {
  const Mat3 r = Mat3::from_euler(params.rotation);
  const Real3 q = r * Real3{p[0] - center[0], p[1] - center[1], p[2] - center[2]};
  return {q[0] + center[0] + params.translation[0], q[1] + center[1] + params.translation[1],
          q[2] + center[2] + params.translation[2]};
}

Volume warp_rigid(const Volume& vol, const RigidParams& params) {
  vol.validate();
  if (params.is_identity()) return vol;
  const Mat3 r = Mat3::from_euler(params.rotation);
  const Real3 c = volume_center(vol);
  const auto& d = vol.dims;
  Volume out = vol;
  parallel_for(d[2], [&](std::int64_t z0, std::int64_t z1) {
    for (std::int64_t z = z0; z < z1; ++z)
      for (int y = 0; y < d[1]; ++y)
        for (int x = 0; x < d[0]; ++x) {
          const Real3 p{vol.origin[0] + x * vol.spacing[0], vol.origin[1] + y * vol.spacing[1],
                        vol.origin[2] + z * vol.spacing[2]};
          const Real3 pc{p[0] - c[0], p[1] - c[1], p[2] - c[2]};
          const Real3 q = r * pc;
          const double qx = q[0] + c[0] + params.translation[0];
          const double qy = q[1] + c[1] + params.translation[1];
          const double qz = q[2] + c[2] + params.translation[2];
          const double ux = (qx - vol.origin[0]) / vol.spacing[0];
          const double uy = (qy - vol.origin[1]) / vol.spacing[1];
          const double uz = (qz - vol.origin[2]) / vol.spacing[2];
          const std::size_t i = out.index(x, y, static_cast<int>(z));
          out.data[i] = sample_trilinear(vol, ux, uy, uz);
          if (vol.mask)
            (*out.mask)[i] = sample_mask_nearest(*vol.mask, vol.dims, ux, uy, uz) ? 1 : 0;
        }
  });
  return out;
}

double mean_residual_displacement_voxels(const RigidParams& a, const RigidParams& b,
                                         const Volume& mask_vol) {
  const RigidParams comp = compose_rigid(a, b);
  const Real3 c = volume_center(mask_vol);
  const auto& d = mask_vol.dims;
  const double mean_spacing =
      (mask_vol.spacing[0] + mask_vol.spacing[1] + mask_vol.spacing[2]) / 3.0;
  double acc = 0.0;
  std::size_t n = 0;
  std::size_t i = 0;
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x, ++i) {
        if (mask_vol.mask && (*mask_vol.mask)[i] == 0) continue;
        if (!mask_vol.mask && mask_vol.data[i] == 0.0) continue;
        const Real3 p{mask_vol.origin[0] + x * mask_vol.spacing[0],
                      mask_vol.origin[1] + y * mask_vol.spacing[1],
                      mask_vol.origin[2] + z * mask_vol.spacing[2]};
        const Real3 q = transform_point(comp, c, p);
        const double dx = q[0] - p[0], dy = q[1] - p[1], dz = q[2] - p[2];
        acc += std::sqrt(dx * dx + dy * dy + dz * dz);
        ++n;
      }
  if (n == 0) throw InvalidArgument("mean_residual_displacement: empty mask");
  return acc / static_cast<double>(n) / mean_spacing;
}

}  // namespace lvce::reg
