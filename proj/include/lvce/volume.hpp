#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lvce/errors.hpp"
#include "lvce/rng.hpp"

namespace lvce {

using Index3 = std::array<int, 3>;
using Real3 = std::array<double, 3>;

/// A 3D scalar image. Data is stored flat in row-major order with x fastest:
/// index = x + dims[0] * (y + dims[1] * z). The physical position of voxel
/// (x,y,z) is origin + (x,y,z) * spacing (voxel 0 centered at the origin).
/// An optional brain mask shares the layout.
struct Volume {
  Index3 dims{0, 0, 0};
  Real3 spacing{1.0, 1.0, 1.0};
  Real3 origin{0.0, 0.0, 0.0};
  std::vector<double> data;
  std::optional<std::vector<std::uint8_t>> mask;

  Volume() = default;
  Volume(Index3 d, Real3 sp, Real3 org = {0.0, 0.0, 0.0});

  std::size_t size() const { return data.size(); }
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
  }
  double& at(int x, int y, int z) { return data[index(x, y, z)]; }
  double at(int x, int y, int z) const { return data[index(x, y, z)]; }
  bool mask_at(std::size_t i) const { return !mask || (*mask)[i] != 0; }

  /// Throws InvalidArgument when dims/spacing/data/mask are inconsistent.
  void validate() const;
};

/// Half-open voxel box: min inclusive, max exclusive.
struct BoundingBox {
  Index3 min{0, 0, 0};
  Index3 max{0, 0, 0};

  Index3 extents() const {
    return {max[0] - min[0], max[1] - min[1], max[2] - min[2]};
  }
};

/// Semantic channel layouts accepted by the network front end.
enum class ChannelOrder {
  kLongitudinal,   // [ses01-T1-PC, ses01-T1-SD, ses02-T1-PC, ses02-T1-LD]
  kSingleSession,  // [ses02-T1-PC, ses02-T1-LD]
};

int channel_count(ChannelOrder order);
std::string channel_order_name(ChannelOrder order);

/// Ordered stack of same-geometry volumes forming one network input.
struct MultiChannelVolume {
  std::vector<Volume> channels;
  ChannelOrder order = ChannelOrder::kLongitudinal;

  const Volume& channel(int i) const { return channels.at(static_cast<std::size_t>(i)); }
  int count() const { return static_cast<int>(channels.size()); }
};

// -- interpolation ----------------------------------------------------------

/// Trilinear sample of vol at continuous voxel coordinate u. Outside the
/// support [0, dims-1]^3 the value is 0.
double sample_trilinear(const Volume& vol, double ux, double uy, double uz);

/// Same sample plus the spatial gradient of the interpolant w.r.t. u.
/// Outside the support both are 0.
double sample_trilinear_grad(const Volume& vol, double ux, double uy, double uz, Real3& grad);

/// Nearest-neighbor mask sample; false outside [-0.5, dims-0.5).
bool sample_mask_nearest(const std::vector<std::uint8_t>& mask, const Index3& dims, double ux,
                         double uy, double uz);

// -- preprocessing operations ------------------------------------------------

/// Resamples to the target voxel spacing. Output dims are
/// ceil(dims * spacing / target_spacing); intensities are trilinear, the
/// mask is nearest-neighbor, out-of-support samples are 0. Resampling to the
/// identical spacing returns the input bitwise.
Volume resample_trilinear(const Volume& vol, const Real3& target_spacing);

/// Tight box around true mask voxels, dilated by margin and clamped to the
/// volume bounds. Throws EmptyRegionError when no voxel is set.
BoundingBox compute_crop_box(const Volume& mask_vol, int margin);

/// Grows/shrinks the box symmetrically to the requested extents, shifting it
/// to stay inside the volume. Used to give every subject identical crop dims.
BoundingBox fit_box_to_dims(const BoundingBox& box, const Index3& target_dims,
                            const Index3& vol_dims);

Volume crop(const Volume& vol, const BoundingBox& box);

struct IntensityRange {
  double min = 0.0;
  double max = 0.0;
};

/// Min-max normalization with the range taken jointly over every listed
/// volume, so relative intensity scales between them are preserved.
/// Throws DegenerateRangeError when the joint range is a single point.
std::vector<Volume> joint_minmax_normalize(const std::vector<Volume>& vols);
std::vector<Volume> joint_minmax_normalize(const std::vector<Volume>& vols, IntensityRange& range);

MultiChannelVolume stack_channels(const std::vector<Volume>& vols, ChannelOrder order);
std::vector<Volume> unstack_channels(const MultiChannelVolume& mcv);

/// Reverses voxel order (data and mask) along one axis. Involution.
Volume flip(const Volume& vol, int axis);

/// Affine resample about the volume center, in voxel coordinates:
/// the content is scaled, rotated (x->y->z axis order) and translated;
/// off-support samples are 0, masks move nearest-neighbor.
Volume apply_affine(const Volume& vol, const Real3& rotation_rad, const Real3& translation_vox,
                    double scale);

Volume add_gaussian_noise(const Volume& vol, double sigma, Rng& rng);

Volume shift_intensity(const Volume& vol, double offset);

}  // namespace lvce
