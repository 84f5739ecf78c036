#pragma once
// Retrieval scoring: normal (multi-label anatomical), tumoural and entire
// Sorensen-Dice over largest-tumour-slice queries, reported as mean +/-
// population standard deviation.

#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mocae/retrieval.hpp"

namespace mocae {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct DiceReport {
  MeanStd normal, tumoural, entire;
  std::size_t n_queries = 0;
};

// 2|A∩B| / (|A|+|B|); two empty masks agree perfectly (1.0).
inline double dice(const Mask& a, const Mask& b) {
  if (a.h != b.h || a.w != b.w)
    throw ShapeError("dice: mask shapes " + std::to_string(a.h) + "x" +
                     std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" +
                     std::to_string(b.w));
  std::size_t na = 0, nb = 0, ni = 0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const bool ba = a.v[i] != 0, bb = b.v[i] != 0;
    na += ba;
    nb += bb;
    ni += (ba && bb);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
}

// Mean of per-label dice over labels 1..6, skipping labels empty in both
// maps; 1.0 when all six are empty on both sides.
inline double multilabel_dice(const Mask& a, const Mask& b) {
  if (a.h != b.h || a.w != b.w)
    throw ShapeError("multilabel_dice: mask shape mismatch");
  for (const Mask* m : {&a, &b})
    for (auto v : m->v)
      if (v > 6)
        throw ConfigError("multilabel_dice: label " + std::to_string(int(v)) +
                          " outside {0..6}");
  double sum = 0.0;
  int used = 0;
  for (std::uint8_t label = 1; label <= 6; ++label) {
    std::size_t na = 0, nb = 0, ni = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
      const bool ba = a.v[i] == label, bb = b.v[i] == label;
      na += ba;
      nb += bb;
      ni += (ba && bb);
    }
    if (na + nb == 0) continue;
    sum += 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
    ++used;
  }
  return used == 0 ? 1.0 : sum / used;
}

// Per tumoural case, the slice with the largest tumour area (lowest z on
// ties). Cases without any tumour are excluded.
inline std::vector<std::size_t> select_query_slices(const Dataset& ds) {
  std::map<std::uint32_t, std::size_t> best;  // case -> sample index
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const SliceSample& s = ds.samples[i];
    const std::size_t area = s.seg.count_nonzero();
    if (area == 0) continue;
    auto it = best.find(s.case_id);
    if (it == best.end()) {
      best[s.case_id] = i;
      continue;
    }
    const SliceSample& cur = ds.samples[it->second];
    const std::size_t cur_area = cur.seg.count_nonzero();
    if (area > cur_area || (area == cur_area && s.z < cur.z)) it->second = i;
  }
  std::vector<std::size_t> out;
  for (const auto& [c, i] : best) out.push_back(i);
  return out;
}

namespace eval_detail {

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  double s = 0;
  for (double x : xs) s += x;
  r.mean = s / static_cast<double>(xs.size());
  double v = 0;
  for (double x : xs) v += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(v / static_cast<double>(xs.size()));  // population std
  return r;
}

struct SampleLookup {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> by_key;
  const Dataset* ds = nullptr;

  explicit SampleLookup(const Dataset& d) : ds(&d) {
    for (std::size_t i = 0; i < d.samples.size(); ++i)
      by_key[{d.samples[i].case_id, d.samples[i].z}] = i;
  }
  const SliceSample& at(std::uint32_t c, std::uint32_t z) const {
    auto it = by_key.find({c, z});
    if (it == by_key.end())
      throw ConfigError("evaluation: index entry (case " + std::to_string(c) +
                        ", z " + std::to_string(z) +
                        ") has no sample in the database dataset");
    return ds->samples[it->second];
  }
};

inline DiceReport aggregate(const std::vector<double>& normal,
                            const std::vector<double>& tumoural) {
  DiceReport rep;
  rep.n_queries = normal.size();
  std::vector<double> entire(normal.size());
  for (std::size_t i = 0; i < normal.size(); ++i)
    entire[i] = 0.5 * (normal[i] + tumoural[i]);
  rep.normal = mean_std(normal);
  rep.tumoural = mean_std(tumoural);
  rep.entire = mean_std(entire);
  return rep;
}

}  // namespace eval_detail

// Headline protocol: one largest-tumour query per case, top-k retrieval
// (k=1 by default), dice scores against the retrieved slices' ground truth.
template <class S>
DiceReport evaluate_protocol(const Index& ix, const Checkpoint<S>& ckpt,
                             const Dataset& database, const Dataset& queries,
                             std::size_t k = 1, double gate_threshold = 0.9,
                             bool exclude_self = true) {
  const auto qidx = select_query_slices(queries);
  if (qidx.empty()) throw ConfigError("evaluate_protocol: empty query set");
  eval_detail::SampleLookup lookup(database);
  std::vector<double> normal, tumoural;
  for (std::size_t qi : qidx) {
    const SliceSample& q = queries.samples[qi];
    const RetrievalResult res = query(ix, q, k, ckpt, gate_threshold, exclude_self);
    if (res.hits.empty()) continue;  // gated empty result
    double nd = 0, td = 0;
    for (const RankedHit& h : res.hits) {
      const IndexEntry& e = ix.entries[h.entry];
      const SliceSample& r = lookup.at(e.case_id, e.z);
      nd += multilabel_dice(q.anat, r.anat);
      td += dice(q.tumour_mask(), r.tumour_mask());
    }
    normal.push_back(nd / static_cast<double>(res.hits.size()));
    tumoural.push_back(td / static_cast<double>(res.hits.size()));
  }
  return eval_detail::aggregate(normal, tumoural);
}

// Control: identical scoring with uniform random picks instead of
// nearest-neighbour retrieval, averaged over `trials`.
inline DiceReport random_baseline(const Index& ix, const Dataset& database,
                                  const Dataset& queries, std::uint64_t seed,
                                  std::size_t trials) {
  if (trials < 1) throw ConfigError("random_baseline: trials must be >= 1");
  if (ix.entries.empty()) throw ConfigError("random_baseline: empty index");
  const auto qidx = select_query_slices(queries);
  if (qidx.empty()) throw ConfigError("random_baseline: empty query set");
  eval_detail::SampleLookup lookup(database);
  Rng rng(seed);
  std::vector<double> normal, tumoural;
  for (std::size_t qi : qidx) {
    const SliceSample& q = queries.samples[qi];
    const Mask qmask = q.tumour_mask();
    double nd = 0, td = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto pick = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(ix.entries.size()) - 1));
      const IndexEntry& e = ix.entries[pick];
      const SliceSample& r = lookup.at(e.case_id, e.z);
      nd += multilabel_dice(q.anat, r.anat);
      td += dice(qmask, r.tumour_mask());
    }
    normal.push_back(nd / static_cast<double>(trials));
    tumoural.push_back(td / static_cast<double>(trials));
  }
  return eval_detail::aggregate(normal, tumoural);
}

inline nlohmann::json report_to_json(const DiceReport& r,
                                     const std::string& config_digest) {
  return nlohmann::json{
      {"normal", {{"mean", r.normal.mean}, {"std", r.normal.std}}},
      {"tumoural", {{"mean", r.tumoural.mean}, {"std", r.tumoural.std}}},
      {"entire", {{"mean", r.entire.mean}, {"std", r.entire.std}}},
      {"n_queries", r.n_queries},
      {"config_digest", config_digest}};
}

inline void report_to_csv(const DiceReport& r, std::ostream& os) {
  os << "normal_mean,normal_std,tumoural_mean,tumoural_std,entire_mean,"
        "entire_std,n_queries\n";
  os << r.normal.mean << ',' << r.normal.std << ',' << r.tumoural.mean << ','
     << r.tumoural.std << ',' << r.entire.mean << ',' << r.entire.std << ','
     << r.n_queries << '\n';
}

}  // namespace mocae
