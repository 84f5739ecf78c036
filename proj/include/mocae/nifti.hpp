#pragma once
// Minimal single-file NIfTI-1 (.nii) reader/writer. Supports uint8, int16
// and float32 payloads; both byte orders are accepted on read via the
// sizeof_hdr probe. Written files are little-endian with vox_offset 352.

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "mocae/dataset.hpp"

namespace mocae {

namespace nifti {

inline constexpr std::int16_t kDtUint8 = 2;
inline constexpr std::int16_t kDtInt16 = 4;
inline constexpr std::int16_t kDtFloat32 = 16;
inline constexpr std::size_t kHeaderSize = 348;

template <class T>
T byteswap_val(T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
    std::swap(b[i], b[sizeof(T) - 1 - i]);
  std::memcpy(&v, b, sizeof(T));
  return v;
}

template <class T>
T read_field(const std::uint8_t* p, std::size_t off, bool swap) {
  T v;
  std::memcpy(&v, p + off, sizeof(T));
  return swap ? byteswap_val(v) : v;
}

}  // namespace nifti

inline Volume parse_nifti(const std::uint8_t* p, std::size_t n,
                          Modality modality = Modality::T1) {
  using namespace nifti;
  if (n < kHeaderSize)
    throw FormatError("nifti: file shorter than the 348-byte header (" +
                      std::to_string(n) + " bytes)");
  // byte-order probe
  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, p, 4);
  bool swap = false;
  if (sizeof_hdr != 348) {
    if (byteswap_val(sizeof_hdr) == 348)
      swap = true;
    else
      throw FormatError("nifti: sizeof_hdr is " + std::to_string(sizeof_hdr) +
                        ", not 348 in either byte order");
  }
  char magic[4];
  std::memcpy(magic, p + 344, 4);
  if (std::memcmp(magic, "n+1", 4) != 0)
    throw FormatError("nifti: unsupported magic (expected single-file \"n+1\")");

  std::int16_t dim[8];
  for (int i = 0; i < 8; ++i)
    dim[i] = read_field<std::int16_t>(p, 40 + 2 * static_cast<std::size_t>(i), swap);
  if (dim[0] < 3)
    throw FormatError("nifti: expected at least 3 dimensions, got dim[0]=" +
                      std::to_string(dim[0]));
  for (int i = 1; i <= 3; ++i)
    if (dim[i] < 1)
      throw FormatError("nifti: non-positive extent dim[" + std::to_string(i) +
                        "]=" + std::to_string(dim[i]));
  for (int i = 4; i <= dim[0]; ++i)
    if (dim[i] > 1)
      throw FormatError("nifti: only scalar 3-D volumes are supported");

  const auto datatype = read_field<std::int16_t>(p, 70, swap);
  const auto bitpix = read_field<std::int16_t>(p, 72, swap);
  const float vox_offset_f = read_field<float>(p, 108, swap);
  float scl_slope = read_field<float>(p, 112, swap);
  const float scl_inter = read_field<float>(p, 116, swap);
  if (scl_slope == 0.0f) scl_slope = 1.0f;

  std::size_t elem;
  switch (datatype) {
    case kDtUint8: elem = 1; break;
    case kDtInt16: elem = 2; break;
    case kDtFloat32: elem = 4; break;
    default:
      throw FormatError("nifti: unsupported datatype code " +
                        std::to_string(datatype));
  }
  if (bitpix != static_cast<std::int16_t>(elem * 8))
    throw FormatError("nifti: bitpix " + std::to_string(bitpix) +
                      " inconsistent with datatype " + std::to_string(datatype));

  const std::size_t X = static_cast<std::size_t>(dim[1]);
  const std::size_t Y = static_cast<std::size_t>(dim[2]);
  const std::size_t Z = static_cast<std::size_t>(dim[3]);
  const std::size_t voxels = X * Y * Z;
  const std::size_t off = static_cast<std::size_t>(vox_offset_f);
  if (off < kHeaderSize)
    throw FormatError("nifti: vox_offset " + std::to_string(off) +
                      " inside the header");
  if (n < off + voxels * elem)
    throw FormatError("nifti: truncated payload, expected " +
                      std::to_string(off + voxels * elem) + " bytes but got " +
                      std::to_string(n));

  Volume v(X, Y, Z, modality);
  const std::uint8_t* d = p + off;
  for (std::size_t i = 0; i < voxels; ++i) {
    float raw;
    switch (datatype) {
      case kDtUint8:
        raw = static_cast<float>(d[i]);
        break;
      case kDtInt16: {
        std::int16_t s;
        std::memcpy(&s, d + 2 * i, 2);
        if (swap) s = byteswap_val(s);
        raw = static_cast<float>(s);
        break;
      }
      default: {
        float f;
        std::memcpy(&f, d + 4 * i, 4);
        if (swap) f = byteswap_val(f);
        raw = f;
        break;
      }
    }
    v.data[i] = raw * scl_slope + scl_inter;
  }
  return v;
}

inline Volume parse_nifti_file(const std::string& path,
                               Modality modality = Modality::T1) {
  const auto b = read_file_bytes(path);
  try {
    return parse_nifti(b.data(), b.size(), modality);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline std::vector<std::uint8_t> write_nifti(const Volume& v,
                                             std::int16_t datatype = nifti::kDtFloat32) {
  using namespace nifti;
  std::size_t elem;
  switch (datatype) {
    case kDtUint8: elem = 1; break;
    case kDtInt16: elem = 2; break;
    case kDtFloat32: elem = 4; break;
    default:
      throw FormatError("nifti writer: unsupported datatype code " +
                        std::to_string(datatype));
  }
  std::vector<std::uint8_t> out(352 + v.numel() * elem, 0);
  auto put = [&](std::size_t off, const void* src, std::size_t k) {
    std::memcpy(out.data() + off, src, k);
  };
  const std::int32_t hdr = 348;
  put(0, &hdr, 4);
  std::int16_t dim[8] = {3,
                         static_cast<std::int16_t>(v.x),
                         static_cast<std::int16_t>(v.y),
                         static_cast<std::int16_t>(v.z),
                         1, 1, 1, 1};
  put(40, dim, 16);
  const std::int16_t bitpix = static_cast<std::int16_t>(elem * 8);
  put(70, &datatype, 2);
  put(72, &bitpix, 2);
  const float vox_offset = 352.0f;
  put(108, &vox_offset, 4);
  const float slope = 1.0f, inter = 0.0f;
  put(112, &slope, 4);
  put(116, &inter, 4);
  float pixdim[8] = {1, 1, 1, 1, 1, 1, 1, 1};
  put(76, pixdim, 32);
  put(344, "n+1", 4);  // includes the terminating NUL

  std::uint8_t* d = out.data() + 352;
  for (std::size_t i = 0; i < v.numel(); ++i) {
    switch (datatype) {
      case kDtUint8:
        d[i] = static_cast<std::uint8_t>(v.data[i]);
        break;
      case kDtInt16: {
        const std::int16_t s = static_cast<std::int16_t>(v.data[i]);
        std::memcpy(d + 2 * i, &s, 2);
        break;
      }
      default:
        std::memcpy(d + 4 * i, &v.data[i], 4);
        break;
    }
  }
  return out;
}

inline void write_nifti_file(const std::string& path, const Volume& v,
                             std::int16_t datatype = nifti::kDtFloat32) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  const auto b = write_nifti(v, datatype);
  f.write(reinterpret_cast<const char*>(b.data()),
          static_cast<std::streamsize>(b.size()));
  if (!f) throw FormatError("write failed: " + path);
}

}  // namespace mocae
