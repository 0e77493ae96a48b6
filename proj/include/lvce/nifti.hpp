#pragma once

#include <string>

#include "lvce/volume.hpp"

namespace lvce {

/// Scalar datatypes supported for writing.
enum class NiftiDType { kUint8, kInt16, kFloat32, kFloat64 };

/// Reads a single-file NIfTI-1 image (.nii, or .nii.gz via zlib).
/// dims/spacing/origin come from the header; values are converted to double
/// with the header scl_slope/scl_inter applied (slope 0 means no scaling).
/// Accepted on-disk datatypes: uint8, int16, float32, float64.
/// Throws FormatError naming the offending field on malformed input.
Volume read_nifti(const std::string& path);

/// Writes vol as a single-file NIfTI-1 image; gzip-compressed when the path
/// ends in .gz. Values are cast to the requested datatype (scl_slope 1,
/// scl_inter 0), so the default float32 round-trips within float precision.
/// The in-memory mask is not part of the file; cohort layouts store masks as
/// separate uint8 images.
void write_nifti(const Volume& vol, const std::string& path,
                 NiftiDType dtype = NiftiDType::kFloat32);

}  // namespace lvce
