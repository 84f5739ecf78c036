#pragma once
// Volumes, slice samples, per-slice normalization and the binary dataset
// archive ("MOCDS"). Volumes store voxels plane-by-plane: index
// z*X*Y + y*X + x, matching the NIfTI payload order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mocae/common.hpp"
#include "mocae/tensor.hpp"

namespace mocae {

enum class Modality : std::uint8_t { T1 = 0, T1Gd, T2, FLAIR, SEG, ANAT };

inline const char* modality_name(Modality m) {
  switch (m) {
    case Modality::T1: return "T1";
    case Modality::T1Gd: return "T1Gd";
    case Modality::T2: return "T2";
    case Modality::FLAIR: return "FLAIR";
    case Modality::SEG: return "SEG";
    case Modality::ANAT: return "ANAT";
  }
  return "?";
}

struct Volume {
  std::size_t x = 0, y = 0, z = 0;
  std::vector<float> data;
  Modality modality = Modality::T1;

  Volume() = default;
  Volume(std::size_t x, std::size_t y, std::size_t z, Modality m)
      : x(x), y(y), z(z), data(x * y * z, 0.0f), modality(m) {}

  float& at(std::size_t xi, std::size_t yi, std::size_t zi) {
    return data[zi * x * y + yi * x + xi];
  }
  float at(std::size_t xi, std::size_t yi, std::size_t zi) const {
    return data[zi * x * y + yi * x + xi];
  }
  std::size_t numel() const { return x * y * z; }
  bool same_extents(const Volume& o) const {
    return x == o.x && y == o.y && z == o.z;
  }
};

// 2-D label map (tumour segmentation / anatomical regions).
struct Mask {
  std::size_t h = 0, w = 0;
  std::vector<std::uint8_t> v;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : h(h), w(w), v(h * w, 0) {}
  std::size_t count_nonzero() const {
    std::size_t n = 0;
    for (auto b : v) n += (b != 0);
    return n;
  }
  bool operator==(const Mask&) const = default;
};

struct SliceSample {
  Tensor<float> image;        // [4,H,W] in [-1,1], order (T1, T1Gd, T2, FLAIR)
  bool tumour_present = false;
  Mask seg;                   // raw labels {0,1,2,4}
  Mask anat;                  // {0..6}
  bool has_anat = true;
  std::uint32_t case_id = 0;
  std::uint32_t z = 0;

  Mask tumour_mask() const {
    Mask m(seg.h, seg.w);
    for (std::size_t i = 0; i < seg.v.size(); ++i) m.v[i] = seg.v[i] != 0;
    return m;
  }
};

struct Dataset {
  std::vector<SliceSample> samples;
};

// Stack slice images into a [N,4,H,W] batch of the requested scalar type.
template <class S>
Tensor<S> make_batch(const Dataset& ds, const std::vector<std::size_t>& idx) {
  const auto& first = ds.samples[idx[0]].image;
  Tensor<S> batch({idx.size(), first.dim(0), first.dim(1), first.dim(2)});
  const std::size_t per = first.numel();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& img = ds.samples[idx[i]].image;
    for (std::size_t j = 0; j < per; ++j)
      batch.data[i * per + j] = static_cast<S>(img.data[j]);
  }
  return batch;
}

struct CaseVolumes {
  std::uint32_t case_id = 0;
  Volume t1, t1gd, t2, flair, seg, anat;
  bool has_seg = true;
  bool has_anat = true;
};

// Min-max map to [-1,1]; a constant plane maps to all zeros.
inline void normalize_slice(std::vector<float>& plane) {
  float lo = plane.empty() ? 0.0f : plane[0];
  float hi = lo;
  for (float v : plane) {
    if (!std::isfinite(v))
      throw ConfigError("normalize_slice: non-finite input value");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) {
    for (float& v : plane) v = 0.0f;
    return;
  }
  const float scale = 2.0f / (hi - lo);
  // clamp: (v - lo) * scale can overshoot 2 by an ulp in float
  for (float& v : plane) v = std::clamp((v - lo) * scale - 1.0f, -1.0f, 1.0f);
}

// One sample per z-plane; modality planes are normalized independently.
inline std::vector<SliceSample> slice_volume(const CaseVolumes& cv) {
  const Volume* mods[4] = {&cv.t1, &cv.t1gd, &cv.t2, &cv.flair};
  const Modality names[4] = {Modality::T1, Modality::T1Gd, Modality::T2,
                             Modality::FLAIR};
  for (int i = 0; i < 4; ++i)
    if (!mods[i]->same_extents(cv.t1))
      throw ShapeError(std::string("slice_volume: extent mismatch in modality ") +
                       modality_name(names[i]));
  if (cv.has_seg && !cv.seg.same_extents(cv.t1))
    throw ShapeError("slice_volume: extent mismatch in modality SEG");
  if (cv.has_anat && !cv.anat.same_extents(cv.t1))
    throw ShapeError("slice_volume: extent mismatch in modality ANAT");

  const std::size_t X = cv.t1.x, Y = cv.t1.y, Z = cv.t1.z;
  std::vector<SliceSample> out;
  out.reserve(Z);
  for (std::size_t z = 0; z < Z; ++z) {
    SliceSample s;
    s.case_id = cv.case_id;
    s.z = static_cast<std::uint32_t>(z);
    s.image = Tensor<float>({4, Y, X});
    for (int m = 0; m < 4; ++m) {
      std::vector<float> plane(mods[m]->data.begin() + z * X * Y,
                               mods[m]->data.begin() + (z + 1) * X * Y);
      normalize_slice(plane);
      std::copy(plane.begin(), plane.end(),
                s.image.data.begin() + static_cast<std::size_t>(m) * X * Y);
    }
    s.seg = Mask(Y, X);
    if (cv.has_seg)
      for (std::size_t i = 0; i < X * Y; ++i)
        s.seg.v[i] = static_cast<std::uint8_t>(cv.seg.data[z * X * Y + i]);
    s.anat = Mask(Y, X);
    s.has_anat = cv.has_anat;
    if (cv.has_anat)
      for (std::size_t i = 0; i < X * Y; ++i)
        s.anat.v[i] = static_cast<std::uint8_t>(cv.anat.data[z * X * Y + i]);
    s.tumour_present = s.seg.count_nonzero() > 0;
    out.push_back(std::move(s));
  }
  return out;
}

namespace detail {

inline void put_u32(std::string& b, std::uint32_t v) {
  char c[4];
  std::memcpy(c, &v, 4);
  b.append(c, 4);
}
inline void put_u64(std::string& b, std::uint64_t v) {
  char c[8];
  std::memcpy(c, &v, 8);
  b.append(c, 8);
}

struct ByteReader {
  const std::uint8_t* p;
  std::size_t n;
  std::size_t off = 0;

  void need(std::size_t k, const char* what) const {
    if (off + k > n)
      throw FormatError(std::string("truncated data while reading ") + what +
                        " at byte offset " + std::to_string(off) + " (need " +
                        std::to_string(k) + " bytes, have " +
                        std::to_string(n - off) + ")");
  }
  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, p + off, sizeof(T));
    off += sizeof(T);
    return v;
  }
  void bytes(void* dst, std::size_t k, const char* what) {
    need(k, what);
    std::memcpy(dst, p + off, k);
    off += k;
  }
};

}  // namespace detail

inline constexpr char kDatasetMagic[6] = {'M', 'O', 'C', 'D', 'S', '\0'};
inline constexpr std::uint32_t kDatasetVersion = 1;

inline std::string serialize_dataset(const Dataset& ds) {
  std::string b;
  b.append(kDatasetMagic, 6);
  detail::put_u32(b, kDatasetVersion);
  detail::put_u64(b, ds.samples.size());
  for (const SliceSample& s : ds.samples) {
    const std::uint32_t h = static_cast<std::uint32_t>(s.seg.h);
    const std::uint32_t w = static_cast<std::uint32_t>(s.seg.w);
    detail::put_u32(b, s.case_id);
    detail::put_u32(b, s.z);
    detail::put_u32(b, h);
    detail::put_u32(b, w);
    b.append(reinterpret_cast<const char*>(s.image.data.data()),
             s.image.data.size() * sizeof(float));
    b.push_back(s.tumour_present ? 1 : 0);
    b.push_back(s.has_anat ? 1 : 0);
    b.append(reinterpret_cast<const char*>(s.seg.v.data()), s.seg.v.size());
    b.append(reinterpret_cast<const char*>(s.anat.v.data()), s.anat.v.size());
  }
  return b;
}

inline Dataset deserialize_dataset(const std::uint8_t* p, std::size_t n) {
  detail::ByteReader r{p, n};
  char magic[6];
  r.bytes(magic, 6, "magic");
  if (std::memcmp(magic, kDatasetMagic, 6) != 0)
    throw FormatError("dataset archive: bad magic bytes");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kDatasetVersion)
    throw FormatError("dataset archive: version " + std::to_string(version) +
                      " but this reader supports version " +
                      std::to_string(kDatasetVersion));
  const auto count = r.get<std::uint64_t>("sample count");
  Dataset ds;
  ds.samples.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    SliceSample s;
    s.case_id = r.get<std::uint32_t>("case id");
    s.z = r.get<std::uint32_t>("z index");
    const auto h = r.get<std::uint32_t>("height");
    const auto w = r.get<std::uint32_t>("width");
    if (h == 0 || w == 0 || static_cast<std::uint64_t>(h) * w > (1ull << 32))
      throw FormatError("dataset archive: implausible slice size " +
                        std::to_string(h) + "x" + std::to_string(w));
    s.image = Tensor<float>({4, h, w});
    r.bytes(s.image.data.data(), s.image.data.size() * sizeof(float), "image");
    s.tumour_present = r.get<std::uint8_t>("tumour flag") != 0;
    s.has_anat = r.get<std::uint8_t>("anat flag") != 0;
    s.seg = Mask(h, w);
    r.bytes(s.seg.v.data(), s.seg.v.size(), "segmentation");
    s.anat = Mask(h, w);
    r.bytes(s.anat.v.data(), s.anat.v.size(), "anatomical labels");
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  const std::string b = serialize_dataset(ds);
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!f) throw FormatError("write failed: " + path);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw FormatError("cannot open " + path);
  const std::streamsize n = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> b(static_cast<std::size_t>(n));
  f.read(reinterpret_cast<char*>(b.data()), n);
  if (!f) throw FormatError("read failed: " + path);
  return b;
}

inline Dataset read_dataset(const std::string& path) {
  const auto b = read_file_bytes(path);
  return deserialize_dataset(b.data(), b.size());
}

}  // namespace mocae
