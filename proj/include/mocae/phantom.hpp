#pragma once
// Synthetic labelled brain phantoms: an ellipsoidal head with six anatomical
// regions, four modality renderings of the same tissue map, and optional
// lobed tumours recorded in SEG with the {1,2,4} label convention
// (necrotic core, edema, enhancing rim).

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mocae/dataset.hpp"
#include "mocae/rng.hpp"

namespace mocae {

struct PhantomConfig {
  int size = 64;           // X = Y extent
  int slices = 32;         // Z extent
  int n_cases = 50;
  double tumour_probability = 0.5;

  void validate() const {
    if (size < 32) throw ConfigError("phantom: size must be >= 32");
    if (slices < 1) throw ConfigError("phantom: slices must be >= 1");
    if (n_cases < 1) throw ConfigError("phantom: n_cases must be >= 1");
    if (tumour_probability < 0.0 || tumour_probability > 1.0)
      throw ConfigError("phantom: tumour_probability must lie in [0,1]");
  }
};

// Anatomical labels: 1/2 cerebrum L/R, 3/4 cerebellum L/R, 5/6 ventricle L/R.
namespace phantom_detail {

struct TumourLobe {
  double cx, cy, cz, r;
};

// Base tissue intensity per (modality, anatomical label 0..6).
inline constexpr double kBase[4][7] = {
    // bg  cerL  cerR  cblL  cblR  venL  venR
    {0.00, 0.80, 0.80, 0.70, 0.70, 0.25, 0.25},  // T1: CSF dark
    {0.00, 0.75, 0.75, 0.68, 0.68, 0.22, 0.22},  // T1Gd
    {0.00, 0.50, 0.50, 0.58, 0.58, 0.92, 0.92},  // T2: CSF bright
    {0.00, 0.62, 0.62, 0.66, 0.66, 0.18, 0.18},  // FLAIR: CSF suppressed
};

}  // namespace phantom_detail

inline CaseVolumes generate_phantom_case(Rng rng, const PhantomConfig& cfg,
                                         std::uint32_t case_id) {
  using namespace phantom_detail;
  const int S = cfg.size, Z = cfg.slices;
  CaseVolumes cv;
  cv.case_id = case_id;
  cv.t1 = Volume(S, S, Z, Modality::T1);
  cv.t1gd = Volume(S, S, Z, Modality::T1Gd);
  cv.t2 = Volume(S, S, Z, Modality::T2);
  cv.flair = Volume(S, S, Z, Modality::FLAIR);
  cv.seg = Volume(S, S, Z, Modality::SEG);
  cv.anat = Volume(S, S, Z, Modality::ANAT);

  // randomized pose/scale of the head ellipsoid
  const double cx = 0.5 * S + rng.uniform(-1.5, 1.5);
  const double cy = 0.5 * S + rng.uniform(-1.5, 1.5);
  const double cz = 0.5 * Z + rng.uniform(-1.0, 1.0);
  const double ax = 0.38 * S * rng.uniform(0.92, 1.08);
  const double ay = 0.42 * S * rng.uniform(0.92, 1.08);
  const double az = 0.55 * Z * rng.uniform(0.92, 1.08);

  // ventricles: two small ellipsoids beside the midline
  const double vax = 0.055 * S, vay = 0.14 * S, vaz = 0.28 * Z;
  const double voff = 0.09 * S * rng.uniform(0.85, 1.15);
  const double vcy = cy - 0.05 * S;

  // cerebellum: posterior-inferior wedge
  const double cb_y = cy + 0.16 * S * rng.uniform(0.9, 1.1);
  const double cb_z = cz - 0.05 * Z;

  // smooth per-case intensity gradient
  const double gx = rng.uniform(-0.1, 0.1) / S;
  const double gy = rng.uniform(-0.1, 0.1) / S;
  const double gz = rng.uniform(-0.1, 0.1) / std::max(Z, 1);

  // optional tumour: a few overlapping lobes centred in the cerebrum
  std::vector<TumourLobe> lobes;
  if (rng.bernoulli(cfg.tumour_probability)) {
    const double tx = cx + rng.uniform(-0.06, 0.06) * S;
    const double ty = cy + rng.uniform(-0.12, 0.00) * S;
    const double tz = cz + rng.uniform(-0.10, 0.10) * Z;
    const double r0 = S * rng.uniform(0.10, 0.13);
    const int n_lobes = static_cast<int>(rng.uniform_int(2, 4));
    for (int l = 0; l < n_lobes; ++l)
      lobes.push_back({tx + rng.uniform(-0.6, 0.6) * r0,
                       ty + rng.uniform(-0.6, 0.6) * r0,
                       tz + rng.uniform(-0.4, 0.4) * r0 * Z / S,
                       r0 * rng.uniform(0.8, 1.1)});
  }

  for (int z = 0; z < Z; ++z)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const double dx = (x - cx) / ax, dy = (y - cy) / ay, dz = (z - cz) / az;
        const double e = dx * dx + dy * dy + dz * dz;
        if (e > 1.0) continue;

        int label;
        const double dvx = (x - (cx - voff)) / vax, dvx2 = (x - (cx + voff)) / vax;
        const double dvy = (y - vcy) / vay, dvz = (z - cz) / vaz;
        if (dvx * dvx + dvy * dvy + dvz * dvz <= 1.0)
          label = 5;
        else if (dvx2 * dvx2 + dvy * dvy + dvz * dvz <= 1.0)
          label = 6;
        else if (y > cb_y && z < cb_z)
          label = (x < cx) ? 3 : 4;
        else
          label = (x < cx) ? 1 : 2;
        cv.anat.at(x, y, z) = static_cast<float>(label);

        // tumour membership: distance relative to the nearest lobe
        double best = 1e30;
        for (const TumourLobe& l : lobes) {
          const double tdx = x - l.cx, tdy = y - l.cy, tdz = (z - l.cz) * S / Z;
          const double d = std::sqrt(tdx * tdx + tdy * tdy + tdz * tdz) / l.r;
          best = std::min(best, d);
        }
        int seg = 0;
        if (best <= 0.55)
          seg = 1;  // necrotic core
        else if (best <= 0.80)
          seg = 4;  // enhancing rim
        else if (best <= 1.0)
          seg = 2;  // edema
        cv.seg.at(x, y, z) = static_cast<float>(seg);

        const double grad = gx * x + gy * y + gz * z;
        for (int m = 0; m < 4; ++m) {
          double v = kBase[m][label] + grad + 0.04 * rng.normal();
          if (seg != 0) {
            // subtle tumour contrast: a couple of noise sigmas per voxel, so
            // detection needs spatial pooling rather than a single bright blob
            if (m == 0) v -= 0.05;
            if (m == 1) v += (seg == 4) ? 0.20 : (seg == 1 ? 0.075 : 0.025);
            if (m == 2) v += (seg == 2) ? 0.125 : 0.05;
            if (m == 3) v += (seg == 2) ? 0.175 : 0.085;
          }
          (m == 0   ? cv.t1
           : m == 1 ? cv.t1gd
           : m == 2 ? cv.t2
                    : cv.flair)
              .at(x, y, z) = static_cast<float>(v);
        }
      }
  return cv;
}

inline std::vector<CaseVolumes> generate_phantom(std::uint64_t seed,
                                                 const PhantomConfig& cfg) {
  cfg.validate();
  Rng master(seed);
  std::vector<CaseVolumes> out;
  out.reserve(static_cast<std::size_t>(cfg.n_cases));
  for (int i = 0; i < cfg.n_cases; ++i)
    out.push_back(
        generate_phantom_case(master.fork(static_cast<std::uint64_t>(i)), cfg,
                              static_cast<std::uint32_t>(i)));
  return out;
}

// Slice every case into one dataset.
inline Dataset phantom_dataset(std::uint64_t seed, const PhantomConfig& cfg) {
  Dataset ds;
  for (const CaseVolumes& cv : generate_phantom(seed, cfg)) {
    auto slices = slice_volume(cv);
    for (auto& s : slices) ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace mocae
