#include "lvce/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lvce/threading.hpp"

namespace lvce {

Volume::Volume(Index3 d, Real3 sp, Real3 org) : dims(d), spacing(sp), origin(org) {
  for (int a = 0; a < 3; ++a) {
    if (d[a] <= 0) throw InvalidArgument("Volume dims must be positive");
    if (sp[a] <= 0.0) throw InvalidArgument("Volume spacing must be positive");
  }
  data.assign(static_cast<std::size_t>(d[0]) * d[1] * d[2], 0.0);
}

void Volume::validate() const {
  std::size_t n = 1;
  for (int a = 0; a < 3; ++a) {
    if (dims[a] <= 0) throw InvalidArgument("Volume dims must be positive");
    if (spacing[a] <= 0.0) throw InvalidArgument("Volume spacing must be positive");
    n *= static_cast<std::size_t>(dims[a]);
  }
  if (data.size() != n) throw InvalidArgument("Volume data length does not match dims");
  if (mask && mask->size() != n) throw InvalidArgument("Volume mask length does not match dims");
}

int channel_count(ChannelOrder order) {
  return order == ChannelOrder::kLongitudinal ? 4 : 2;
}

std::string channel_order_name(ChannelOrder order) {
  return order == ChannelOrder::kLongitudinal ? "longitudinal" : "single_session";
}

double sample_trilinear(const Volume& vol, double ux, double uy, double uz) {
  const auto& d = vol.dims;
  if (ux < 0.0 || uy < 0.0 || uz < 0.0 || ux > d[0] - 1 || uy > d[1] - 1 || uz > d[2] - 1)
    return 0.0;
  int x0 = static_cast<int>(std::floor(ux));
  int y0 = static_cast<int>(std::floor(uy));
  int z0 = static_cast<int>(std::floor(uz));
  if (x0 == d[0] - 1) --x0;
  if (y0 == d[1] - 1) --y0;
  if (z0 == d[2] - 1) --z0;
  if (d[0] == 1) x0 = 0;
  if (d[1] == 1) y0 = 0;
  if (d[2] == 1) z0 = 0;
  const double fx = ux - x0, fy = uy - y0, fz = uz - z0;
  const int x1 = std::min(x0 + 1, d[0] - 1);
  const int y1 = std::min(y0 + 1, d[1] - 1);
  const int z1 = std::min(z0 + 1, d[2] - 1);
  const double c000 = vol.at(x0, y0, z0), c100 = vol.at(x1, y0, z0);
  const double c010 = vol.at(x0, y1, z0), c110 = vol.at(x1, y1, z0);
  const double c001 = vol.at(x0, y0, z1), c101 = vol.at(x1, y0, z1);
  const double c011 = vol.at(x0, y1, z1), c111 = vol.at(x1, y1, z1);
  const double c00 = c000 + fx * (c100 - c000);
  const double c10 = c010 + fx * (c110 - c010);
  const double c01 = c001 + fx * (c101 - c001);
  const double c11 = c011 + fx * (c111 - c011);
  const double c0 = c00 + fy * (c10 - c00);
  const double c1 = c01 + fy * (c11 - c01);
  return c0 + fz * (c1 - c0);
}

double sample_trilinear_grad(const Volume& vol, double ux, double uy, double uz, Real3& grad) {
  grad = {0.0, 0.0, 0.0};
  const auto& d = vol.dims;
  if (ux < 0.0 || uy < 0.0 || uz < 0.0 || ux > d[0] - 1 || uy > d[1] - 1 || uz > d[2] - 1)
    return 0.0;
  int x0 = static_cast<int>(std::floor(ux));
  int y0 = static_cast<int>(std::floor(uy));
  int z0 = static_cast<int>(std::floor(uz));
  if (x0 == d[0] - 1) --x0;
  if (y0 == d[1] - 1) --y0;
  if (z0 == d[2] - 1) --z0;
  if (d[0] == 1) x0 = 0;
  if (d[1] == 1) y0 = 0;
  if (d[2] == 1) z0 = 0;
  const double fx = ux - x0, fy = uy - y0, fz = uz - z0;
  const int x1 = std::min(x0 + 1, d[0] - 1);
  const int y1 = std::min(y0 + 1, d[1] - 1);
  const int z1 = std::min(z0 + 1, d[2] - 1);
  const double c000 = vol.at(x0, y0, z0), c100 = vol.at(x1, y0, z0);
  const double c010 = vol.at(x0, y1, z0), c110 = vol.at(x1, y1, z0);
  const double c001 = vol.at(x0, y0, z1), c101 = vol.at(x1, y0, z1);
  const double c011 = vol.at(x0, y1, z1), c111 = vol.at(x1, y1, z1);
  const double gx = (1 - fy) * (1 - fz) * (c100 - c000) + fy * (1 - fz) * (c110 - c010) +
                    (1 - fy) * fz * (c101 - c001) + fy * fz * (c111 - c011);
  const double gy = (1 - fx) * (1 - fz) * (c010 - c000) + fx * (1 - fz) * (c110 - c100) +
                    (1 - fx) * fz * (c011 - c001) + fx * fz * (c111 - c101);
  const double gz = (1 - fx) * (1 - fy) * (c001 - c000) + fx * (1 - fy) * (c101 - c100) +
                    (1 - fx) * fy * (c011 - c010) + fx * fy * (c111 - c110);
  grad = {gx, gy, gz};
  const double c00 = c000 + fx * (c100 - c000);
  const double c10 = c010 + fx * (c110 - c010);
  const double c01 = c001 + fx * (c101 - c001);
  const double c11 = c011 + fx * (c111 - c011);
  const double c0 = c00 + fy * (c10 - c00);
  const double c1 = c01 + fy * (c11 - c01);
  return c0 + fz * (c1 - c0);
}

bool sample_mask_nearest(const std::vector<std::uint8_t>& mask, const Index3& dims, double ux,
                         double uy, double uz) {
  if (ux < -0.5 || uy < -0.5 || uz < -0.5 || ux >= dims[0] - 0.5 || uy >= dims[1] - 0.5 ||
      uz >= dims[2] - 0.5)
    return false;
  const int x = std::clamp(static_cast<int>(std::lround(ux)), 0, dims[0] - 1);
  const int y = std::clamp(static_cast<int>(std::lround(uy)), 0, dims[1] - 1);
  const int z = std::clamp(static_cast<int>(std::lround(uz)), 0, dims[2] - 1);
  return mask[static_cast<std::size_t>(x) +
              static_cast<std::size_t>(dims[0]) *
                  (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z)] != 0;
}

Volume resample_trilinear(const Volume& vol, const Real3& target_spacing) {
  vol.validate();
  for (int a = 0; a < 3; ++a) {
    if (target_spacing[a] <= 0.0) throw InvalidArgument("resample: target spacing must be positive");
  }
  if (vol.spacing == target_spacing) return vol;

  Index3 out_dims;
  for (int a = 0; a < 3; ++a) {
    out_dims[a] = static_cast<int>(
        std::ceil(static_cast<double>(vol.dims[a]) * vol.spacing[a] / target_spacing[a]));
    out_dims[a] = std::max(out_dims[a], 1);
  }
  Volume out(out_dims, target_spacing, vol.origin);
  if (vol.mask) out.mask.emplace(out.size(), 0);

  const double rx = target_spacing[0] / vol.spacing[0];
  const double ry = target_spacing[1] / vol.spacing[1];
  const double rz = target_spacing[2] / vol.spacing[2];
  parallel_for(out_dims[2], [&](std::int64_t z0, std::int64_t z1) {
    for (std::int64_t z = z0; z < z1; ++z) {
      const double uz = static_cast<double>(z) * rz;
      for (int y = 0; y < out_dims[1]; ++y) {
        const double uy = static_cast<double>(y) * ry;
        for (int x = 0; x < out_dims[0]; ++x) {
          const double ux = static_cast<double>(x) * rx;
          const std::size_t i = out.index(x, y, static_cast<int>(z));
          out.data[i] = sample_trilinear(vol, ux, uy, uz);
          if (vol.mask)
            (*out.mask)[i] = sample_mask_nearest(*vol.mask, vol.dims, ux, uy, uz) ? 1 : 0;
        }
      }
    }
  });
  return out;
}

BoundingBox compute_crop_box(const Volume& mask_vol, int margin) {
  if (margin < 0) throw InvalidArgument("compute_crop_box: margin must be non-negative");
  const std::vector<std::uint8_t>* m = mask_vol.mask ? &*mask_vol.mask : nullptr;
  Index3 lo = mask_vol.dims;
  Index3 hi{-1, -1, -1};
  std::size_t i = 0;
  for (int z = 0; z < mask_vol.dims[2]; ++z)
    for (int y = 0; y < mask_vol.dims[1]; ++y)
      for (int x = 0; x < mask_vol.dims[0]; ++x, ++i) {
        const bool on = m ? (*m)[i] != 0 : mask_vol.data[i] != 0.0;
        if (!on) continue;
        lo[0] = std::min(lo[0], x);
        lo[1] = std::min(lo[1], y);
        lo[2] = std::min(lo[2], z);
        hi[0] = std::max(hi[0], x);
        hi[1] = std::max(hi[1], y);
        hi[2] = std::max(hi[2], z);
      }
  if (hi[0] < 0) throw EmptyRegionError("compute_crop_box: mask has no true voxel");
  BoundingBox box;
  for (int a = 0; a < 3; ++a) {
    box.min[a] = std::max(lo[a] - margin, 0);
    box.max[a] = std::min(hi[a] + 1 + margin, mask_vol.dims[a]);
  }
  return box;
}

BoundingBox fit_box_to_dims(const BoundingBox& box, const Index3& target_dims,
                            const Index3& vol_dims) {
  BoundingBox out = box;
  for (int a = 0; a < 3; ++a) {
    if (target_dims[a] <= 0) throw InvalidArgument("fit_box_to_dims: target dims must be positive");
    if (target_dims[a] > vol_dims[a])
      throw InvalidArgument("fit_box_to_dims: volume smaller than requested crop on axis " +
                            std::to_string(a));
    const int extent = box.max[a] - box.min[a];
    const int grow = target_dims[a] - extent;
    int lo = box.min[a] - grow / 2;
    lo = std::clamp(lo, 0, vol_dims[a] - target_dims[a]);
    out.min[a] = lo;
    out.max[a] = lo + target_dims[a];
  }
  return out;
}

Volume crop(const Volume& vol, const BoundingBox& box) {
  vol.validate();
  for (int a = 0; a < 3; ++a) {
    if (box.min[a] < 0 || box.max[a] > vol.dims[a] || box.min[a] >= box.max[a])
      throw InvalidArgument("crop: box outside volume bounds on axis " + std::to_string(a));
  }
  const Index3 ext = box.extents();
  Real3 origin = vol.origin;
  for (int a = 0; a < 3; ++a) origin[a] += box.min[a] * vol.spacing[a];
  Volume out(ext, vol.spacing, origin);
  if (vol.mask) out.mask.emplace(out.size(), 0);
  for (int z = 0; z < ext[2]; ++z)
    for (int y = 0; y < ext[1]; ++y) {
      const std::size_t src = vol.index(box.min[0], box.min[1] + y, box.min[2] + z);
      const std::size_t dst = out.index(0, y, z);
      std::copy_n(vol.data.begin() + src, ext[0], out.data.begin() + dst);
      if (vol.mask) std::copy_n(vol.mask->begin() + src, ext[0], out.mask->begin() + dst);
    }
  return out;
}

std::vector<Volume> joint_minmax_normalize(const std::vector<Volume>& vols) {
  IntensityRange range;
  return joint_minmax_normalize(vols, range);
}

std::vector<Volume> joint_minmax_normalize(const std::vector<Volume>& vols,
                                           IntensityRange& range) {
  if (vols.empty()) throw InvalidArgument("joint_minmax_normalize: empty volume list");
  double gmin = std::numeric_limits<double>::infinity();
  double gmax = -std::numeric_limits<double>::infinity();
  for (const auto& v : vols) {
    for (double x : v.data) {
      gmin = std::min(gmin, x);
      gmax = std::max(gmax, x);
    }
  }
  if (!(gmax > gmin))
    throw DegenerateRangeError("joint_minmax_normalize: constant joint intensity range");
  range = {gmin, gmax};
  const double inv = 1.0 / (gmax - gmin);
  std::vector<Volume> out = vols;
  for (auto& v : out)
    for (double& x : v.data) x = (x - gmin) * inv;
  return out;
}

MultiChannelVolume stack_channels(const std::vector<Volume>& vols, ChannelOrder order) {
  const int expected = channel_count(order);
  if (static_cast<int>(vols.size()) != expected)
    throw ShapeError("stack_channels: " + channel_order_name(order) + " input requires " +
                     std::to_string(expected) + " channels, got " + std::to_string(vols.size()));
  for (std::size_t i = 1; i < vols.size(); ++i) {
    if (vols[i].dims != vols[0].dims || vols[i].spacing != vols[0].spacing)
      throw ShapeError("stack_channels: channel " + std::to_string(i) +
                       " does not match channel 0 dims/spacing");
  }
  MultiChannelVolume mcv;
  mcv.channels = vols;
  mcv.order = order;
  return mcv;
}

std::vector<Volume> unstack_channels(const MultiChannelVolume& mcv) { return mcv.channels; }

Volume flip(const Volume& vol, int axis) {
  if (axis < 0 || axis > 2) throw InvalidArgument("flip: axis must be 0, 1 or 2");
  Volume out = vol;
  const auto& d = vol.dims;
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        const int sx = axis == 0 ? d[0] - 1 - x : x;
        const int sy = axis == 1 ? d[1] - 1 - y : y;
        const int sz = axis == 2 ? d[2] - 1 - z : z;
        const std::size_t dst = out.index(x, y, z);
        const std::size_t src = vol.index(sx, sy, sz);
        out.data[dst] = vol.data[src];
        if (vol.mask) (*out.mask)[dst] = (*vol.mask)[src];
      }
  return out;
}

namespace {

// Rotation matrix for intrinsic rotations applied in fixed axis order
// x -> y -> z, i.e. R = Rz * Ry * Rx.
void rotation_matrix(const Real3& r, double R[3][3]) {
  const double cx = std::cos(r[0]), sx = std::sin(r[0]);
  const double cy = std::cos(r[1]), sy = std::sin(r[1]);
  const double cz = std::cos(r[2]), sz = std::sin(r[2]);
  R[0][0] = cz * cy;
  R[0][1] = cz * sy * sx - sz * cx;
  R[0][2] = cz * sy * cx + sz * sx;
  R[1][0] = sz * cy;
  R[1][1] = sz * sy * sx + cz * cx;
  R[1][2] = sz * sy * cx - cz * sx;
  R[2][0] = -sy;
  R[2][1] = cy * sx;
  R[2][2] = cy * cx;
}

}  // namespace

Volume apply_affine(const Volume& vol, const Real3& rotation_rad, const Real3& translation_vox,
                    double scale) {
  vol.validate();
  if (!(scale > 0.0)) throw InvalidArgument("apply_affine: scale must be positive");
  if (rotation_rad == Real3{0.0, 0.0, 0.0} && translation_vox == Real3{0.0, 0.0, 0.0} &&
      scale == 1.0)
    return vol;

  double R[3][3];
  rotation_matrix(rotation_rad, R);
  const auto& d = vol.dims;
  const Real3 c{(d[0] - 1) / 2.0, (d[1] - 1) / 2.0, (d[2] - 1) / 2.0};
  Volume out = vol;
  // Inverse map of "scale, rotate about the center, then translate":
  // source = R^T ((v - c - t)) / scale + c.
  parallel_for(d[2], [&](std::int64_t z0, std::int64_t z1) {
    for (std::int64_t z = z0; z < z1; ++z)
      for (int y = 0; y < d[1]; ++y)
        for (int x = 0; x < d[0]; ++x) {
          const double px = x - c[0] - translation_vox[0];
          const double py = y - c[1] - translation_vox[1];
          const double pz = z - c[2] - translation_vox[2];
          const double ux = (R[0][0] * px + R[1][0] * py + R[2][0] * pz) / scale + c[0];
          const double uy = (R[0][1] * px + R[1][1] * py + R[2][1] * pz) / scale + c[1];
          const double uz = (R[0][2] * px + R[1][2] * py + R[2][2] * pz) / scale + c[2];
          const std::size_t i = out.index(x, y, static_cast<int>(z));
          out.data[i] = sample_trilinear(vol, ux, uy, uz);
          if (vol.mask)
            (*out.mask)[i] = sample_mask_nearest(*vol.mask, vol.dims, ux, uy, uz) ? 1 : 0;
        }
  });
  return out;
}

Volume add_gaussian_noise(const Volume& vol, double sigma, Rng& rng) {
  if (sigma < 0.0) throw InvalidArgument("add_gaussian_noise: sigma must be non-negative");
  if (sigma == 0.0) return vol;
  Volume out = vol;
  for (double& x : out.data) x += rng.gaussian(0.0, sigma);
  return out;
}

Volume shift_intensity(const Volume& vol, double offset) {
  Volume out = vol;
  for (double& x : out.data) x += offset;
  return out;
}

}  // namespace lvce
