#pragma once
// Descriptor index and confidence-gated Euclidean nearest-neighbour search.
// Exact full scan; ties broken by (case id, z) so rankings are total.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mocae/dataset.hpp"
#include "mocae/model.hpp"

namespace mocae {

struct IndexEntry {
  std::vector<float> descriptor;
  float tumour_probability = 0.0f;  // classifier output
  bool tumour_flag = false;         // ground truth
  std::uint32_t case_id = 0;
  std::uint32_t z = 0;
};

struct Index {
  std::uint32_t dim = 0;
  std::vector<IndexEntry> entries;
};

struct RankedHit {
  std::size_t entry = 0;  // position in Index::entries
  double distance = 0.0;
};

struct RetrievalResult {
  std::vector<RankedHit> hits;
  bool gate_applied = false;
  double query_probability = 0.0;
};

template <class T>
double euclidean_distance(const std::vector<T>& a, const std::vector<T>& b) {
  if (a.size() != b.size())
    throw ShapeError("euclidean_distance: lengths " + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Encode and classify every slice of the dataset with the trained encoder.
template <class S>
Index build_index(const Checkpoint<S>& ckpt, const Dataset& ds,
                  std::size_t batch = 64) {
  Index ix;
  ix.dim = static_cast<std::uint32_t>(ckpt.config.latent_dim);
  for (std::size_t start = 0; start < ds.samples.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + batch, ds.samples.size()); ++i)
      idx.push_back(i);
    const Tensor<S> b = make_batch<S>(ds, idx);
    const Tensor<S> z = encode(ckpt, b);
    const Tensor<S> p = classify(ckpt, z);
    const std::size_t D = static_cast<std::size_t>(ix.dim);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      IndexEntry e;
      e.descriptor.resize(D);
      for (std::size_t d = 0; d < D; ++d)
        e.descriptor[d] = static_cast<float>(z.data[i * D + d]);
      e.tumour_probability = static_cast<float>(p.data[i]);
      e.tumour_flag = ds.samples[idx[i]].tumour_present;
      e.case_id = ds.samples[idx[i]].case_id;
      e.z = ds.samples[idx[i]].z;
      ix.entries.push_back(std::move(e));
    }
  }
  return ix;
}

// Nearest neighbours of a precomputed descriptor. When the predicted
// tumour probability reaches the gate threshold, candidates are restricted
// to tumour-flagged entries.
inline RetrievalResult query_descriptor(const Index& ix,
                                        const std::vector<float>& descriptor,
                                        double probability, std::size_t k,
                                        double gate_threshold = 0.9,
                                        bool exclude_self = false,
                                        std::uint32_t self_case = 0,
                                        std::uint32_t self_z = 0) {
  if (k < 1) throw ConfigError("query: k must be >= 1");
  RetrievalResult res;
  res.query_probability = probability;
  res.gate_applied = probability >= gate_threshold;
  std::vector<RankedHit> all;
  all.reserve(ix.entries.size());
  for (std::size_t i = 0; i < ix.entries.size(); ++i) {
    const IndexEntry& e = ix.entries[i];
    if (res.gate_applied && !e.tumour_flag) continue;
    if (exclude_self && e.case_id == self_case && e.z == self_z) continue;
    all.push_back({i, euclidean_distance(e.descriptor, descriptor)});
  }
  auto better = [&](const RankedHit& a, const RankedHit& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    const IndexEntry& ea = ix.entries[a.entry];
    const IndexEntry& eb = ix.entries[b.entry];
    if (ea.case_id != eb.case_id) return ea.case_id < eb.case_id;
    return ea.z < eb.z;
  };
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep),
                    all.end(), better);
  all.resize(keep);
  res.hits = std::move(all);
  return res;
}

template <class S>
RetrievalResult query(const Index& ix, const SliceSample& slice, std::size_t k,
                      const Checkpoint<S>& ckpt, double gate_threshold = 0.9,
                      bool exclude_self = true) {
  Dataset one;
  one.samples.push_back(slice);
  const Tensor<S> b = make_batch<S>(one, {0});
  const Tensor<S> z = encode(ckpt, b);
  const Tensor<S> p = classify(ckpt, z);
  std::vector<float> desc(z.data.size());
  for (std::size_t i = 0; i < desc.size(); ++i) desc[i] = static_cast<float>(z.data[i]);
  return query_descriptor(ix, desc, static_cast<double>(p.data[0]), k,
                          gate_threshold, exclude_self, slice.case_id, slice.z);
}

inline constexpr char kIndexMagic[6] = {'M', 'O', 'C', 'I', 'X', '\0'};
inline constexpr std::uint32_t kIndexVersion = 1;

inline std::string serialize_index(const Index& ix) {
  std::string b;
  b.append(kIndexMagic, 6);
  detail::put_u32(b, kIndexVersion);
  detail::put_u32(b, ix.dim);
  detail::put_u64(b, ix.entries.size());
  for (const IndexEntry& e : ix.entries) {
    detail::put_u32(b, e.case_id);
    detail::put_u32(b, e.z);
    b.push_back(e.tumour_flag ? 1 : 0);
    b.append(reinterpret_cast<const char*>(&e.tumour_probability), 4);
    if (e.descriptor.size() != ix.dim)
      throw ShapeError("index: entry descriptor length " +
                       std::to_string(e.descriptor.size()) +
                       " does not match index dimension " + std::to_string(ix.dim));
    b.append(reinterpret_cast<const char*>(e.descriptor.data()),
             e.descriptor.size() * 4);
  }
  return b;
}

inline Index deserialize_index(const std::uint8_t* p, std::size_t n) {
  detail::ByteReader r{p, n};
  char magic[6];
  r.bytes(magic, 6, "magic");
  if (std::memcmp(magic, kIndexMagic, 6) != 0)
    throw FormatError("index file: bad magic bytes");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kIndexVersion)
    throw FormatError("index file: version " + std::to_string(version) +
                      " but this reader supports version " +
                      std::to_string(kIndexVersion));
  Index ix;
  ix.dim = r.get<std::uint32_t>("dimension");
  const auto count = r.get<std::uint64_t>("entry count");
  ix.entries.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    IndexEntry e;
    e.case_id = r.get<std::uint32_t>("case id");
    e.z = r.get<std::uint32_t>("z index");
    e.tumour_flag = r.get<std::uint8_t>("tumour flag") != 0;
    e.tumour_probability = r.get<float>("tumour probability");
    e.descriptor.resize(ix.dim);
    r.bytes(e.descriptor.data(), static_cast<std::size_t>(ix.dim) * 4, "descriptor");
    ix.entries.push_back(std::move(e));
  }
  return ix;
}

inline void save_index(const std::string& path, const Index& ix) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  const std::string b = serialize_index(ix);
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!f) throw FormatError("write failed: " + path);
}

inline Index load_index(const std::string& path) {
  const auto b = read_file_bytes(path);
  return deserialize_index(b.data(), b.size());
}

}  // namespace mocae
