#include "lvce/nifti.hpp"

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <vector>

namespace lvce {

namespace {

// On-disk NIfTI-1 header, 348 bytes. The member types align naturally, so no
// packing pragma is needed; the static_assert guards against surprises.
struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1;
  float intent_p2;
  float intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max;
  float cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax;
  std::int32_t glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b;
  float quatern_c;
  float quatern_d;
  float qoffset_x;
  float qoffset_y;
  float qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must pack to 348 bytes");

constexpr std::int16_t kDtUint8 = 2;
constexpr std::int16_t kDtInt16 = 4;
constexpr std::int16_t kDtFloat32 = 16;
constexpr std::int16_t kDtFloat64 = 64;

struct GzFileCloser {
  void operator()(gzFile f) const {
    if (f) gzclose(f);
  }
};

class GzReader {
 public:
  explicit GzReader(const std::string& path) : path_(path), f_(gzopen(path.c_str(), "rb")) {
    if (!f_) throw FormatError("nifti: cannot open " + path);
  }
  ~GzReader() { gzclose(f_); }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;

  void read_exact(void* dst, std::size_t n, const char* what) {
    const int got = gzread(f_, dst, static_cast<unsigned>(n));
    if (got < 0 || static_cast<std::size_t>(got) != n)
      throw FormatError("nifti: truncated file while reading " + std::string(what) + " from " +
                        path_);
  }

  void skip_to(std::size_t offset) {
    if (gzseek(f_, static_cast<z_off_t>(offset), SEEK_SET) < 0)
      throw FormatError("nifti: cannot seek to voxel data in " + path_);
  }

 private:
  std::string path_;
  gzFile f_;
};

template <typename T>
void convert_raw(const std::vector<char>& raw, std::vector<double>& out, double slope,
                 double inter) {
  const T* src = reinterpret_cast<const T*>(raw.data());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i)
    out[i] = slope * static_cast<double>(src[i]) + inter;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

Volume read_nifti(const std::string& path) {
  GzReader in(path);
  Nifti1Header hdr{};
  in.read_exact(&hdr, sizeof(hdr), "header");

  if (hdr.sizeof_hdr != 348) {
    // 348 byte-swapped is 1543569408: a valid big-endian file, just not one
    // this reader supports.
    if (hdr.sizeof_hdr == 1543569408)
      throw FormatError("nifti: big-endian file not supported (sizeof_hdr byte-swapped): " + path);
    throw FormatError("nifti: malformed header, sizeof_hdr != 348 in " + path);
  }
  if (std::memcmp(hdr.magic, "n+1", 4) != 0) {
    if (std::memcmp(hdr.magic, "ni1", 4) == 0)
      throw FormatError("nifti: two-file (.hdr/.img) images not supported: " + path);
    throw FormatError("nifti: malformed header, magic is not \"n+1\\0\" in " + path);
  }
  if (hdr.dim[0] < 1 || hdr.dim[0] > 7)
    throw FormatError("nifti: malformed header, dim[0] out of range in " + path);
  for (int a = hdr.dim[0]; a >= 4; --a) {
    if (hdr.dim[a] > 1)
      throw FormatError("nifti: only 3-D scalar images supported, dim[" + std::to_string(a) +
                        "] > 1 in " + path);
  }

  Index3 dims;
  Real3 spacing;
  for (int a = 0; a < 3; ++a) {
    dims[a] = a < hdr.dim[0] ? hdr.dim[a + 1] : 1;
    if (dims[a] < 1)
      throw FormatError("nifti: malformed header, dim[" + std::to_string(a + 1) +
                        "] < 1 in " + path);
    spacing[a] = a < hdr.dim[0] ? hdr.pixdim[a + 1] : 1.0f;
    if (!(spacing[a] > 0.0))
      throw FormatError("nifti: malformed header, pixdim[" + std::to_string(a + 1) +
                        "] must be positive in " + path);
  }

  std::size_t elem_size = 0;
  switch (hdr.datatype) {
    case kDtUint8:
      elem_size = 1;
      break;
    case kDtInt16:
      elem_size = 2;
      break;
    case kDtFloat32:
      elem_size = 4;
      break;
    case kDtFloat64:
      elem_size = 8;
      break;
    default:
      throw FormatError("nifti: unsupported datatype code " + std::to_string(hdr.datatype) +
                        " in " + path);
  }
  if (hdr.bitpix != static_cast<std::int16_t>(elem_size * 8))
    throw FormatError("nifti: malformed header, bitpix inconsistent with datatype in " + path);

  const std::size_t offset =
      hdr.vox_offset >= 348.0f ? static_cast<std::size_t>(hdr.vox_offset) : 352u;

  Volume vol(dims, spacing);
  if (hdr.sform_code > 0) {
    vol.origin = {hdr.srow_x[3], hdr.srow_y[3], hdr.srow_z[3]};
  } else if (hdr.qform_code > 0) {
    vol.origin = {hdr.qoffset_x, hdr.qoffset_y, hdr.qoffset_z};
  }

  const std::size_t n = vol.size();
  std::vector<char> raw(n * elem_size);
  in.skip_to(offset);
  in.read_exact(raw.data(), raw.size(), "voxel data");

  // slope == 0 means "no scaling information" per the standard.
  const double slope = hdr.scl_slope == 0.0f ? 1.0 : static_cast<double>(hdr.scl_slope);
  const double inter = hdr.scl_slope == 0.0f ? 0.0 : static_cast<double>(hdr.scl_inter);
  switch (hdr.datatype) {
    case kDtUint8:
      convert_raw<std::uint8_t>(raw, vol.data, slope, inter);
      break;
    case kDtInt16:
      convert_raw<std::int16_t>(raw, vol.data, slope, inter);
      break;
    case kDtFloat32:
      convert_raw<float>(raw, vol.data, slope, inter);
      break;
    case kDtFloat64:
      convert_raw<double>(raw, vol.data, slope, inter);
      break;
  }
  return vol;
}

void write_nifti(const Volume& vol, const std::string& path, NiftiDType dtype) {
  vol.validate();

  Nifti1Header hdr{};
  hdr.sizeof_hdr = 348;
  hdr.regular = 'r';
  hdr.dim[0] = 3;
  for (int a = 0; a < 3; ++a) {
    hdr.dim[a + 1] = static_cast<std::int16_t>(vol.dims[a]);
    hdr.pixdim[a + 1] = static_cast<float>(vol.spacing[a]);
  }
  for (int a = 4; a < 8; ++a) hdr.dim[a] = 1;
  hdr.pixdim[0] = 1.0f;
  switch (dtype) {
    case NiftiDType::kUint8:
      hdr.datatype = kDtUint8;
      hdr.bitpix = 8;
      break;
    case NiftiDType::kInt16:
      hdr.datatype = kDtInt16;
      hdr.bitpix = 16;
      break;
    case NiftiDType::kFloat32:
      hdr.datatype = kDtFloat32;
      hdr.bitpix = 32;
      break;
    case NiftiDType::kFloat64:
      hdr.datatype = kDtFloat64;
      hdr.bitpix = 64;
      break;
  }
  hdr.vox_offset = 352.0f;
  hdr.scl_slope = 1.0f;
  hdr.scl_inter = 0.0f;
  hdr.xyzt_units = 2;  // millimetres
  hdr.sform_code = 1;
  hdr.srow_x[0] = static_cast<float>(vol.spacing[0]);
  hdr.srow_y[1] = static_cast<float>(vol.spacing[1]);
  hdr.srow_z[2] = static_cast<float>(vol.spacing[2]);
  hdr.srow_x[3] = static_cast<float>(vol.origin[0]);
  hdr.srow_y[3] = static_cast<float>(vol.origin[1]);
  hdr.srow_z[3] = static_cast<float>(vol.origin[2]);
  std::memcpy(hdr.magic, "n+1", 4);

  const std::size_t n = vol.size();
  std::vector<char> raw;
  switch (dtype) {
    case NiftiDType::kUint8: {
      raw.resize(n);
      auto* dst = reinterpret_cast<std::uint8_t*>(raw.data());
      for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<std::uint8_t>(vol.data[i]);
      break;
    }
    case NiftiDType::kInt16: {
      raw.resize(n * 2);
      auto* dst = reinterpret_cast<std::int16_t*>(raw.data());
      for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<std::int16_t>(vol.data[i]);
      break;
    }
    case NiftiDType::kFloat32: {
      raw.resize(n * 4);
      auto* dst = reinterpret_cast<float*>(raw.data());
      for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(vol.data[i]);
      break;
    }
    case NiftiDType::kFloat64: {
      raw.resize(n * 8);
      std::memcpy(raw.data(), vol.data.data(), raw.size());
      break;
    }
  }

  // "wT" writes raw bytes through the gz API, so one code path serves both
  // compressed and plain output.
  const char* mode = ends_with(path, ".gz") ? "wb" : "wbT";
  gzFile f = gzopen(path.c_str(), mode);
  if (!f) throw FormatError("nifti: cannot open " + path + " for writing");
  const char ext_flag[4] = {0, 0, 0, 0};
  bool ok = gzwrite(f, &hdr, sizeof(hdr)) == static_cast<int>(sizeof(hdr));
  ok = ok && gzwrite(f, ext_flag, 4) == 4;
  ok = ok && gzwrite(f, raw.data(), static_cast<unsigned>(raw.size())) ==
                 static_cast<int>(raw.size());
  const int rc = gzclose(f);
  if (!ok || rc != Z_OK) throw FormatError("nifti: failed writing " + path);
}

}  // namespace lvce
