#pragma once
// Composite-loss training: squared-error reconstruction plus binary
// cross-entropy classification, combined as gamma1*L_r + gamma2*L_c and
// minimised with Adam. Also the case-level dataset split.

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "mocae/dataset.hpp"
#include "mocae/model.hpp"

namespace mocae {

// Mean over batch and elements of the squared difference.
template <class S>
S reconstruction_loss(const Tensor<S>& x, const Tensor<S>& xhat) {
  check_same_shape(x, xhat, "reconstruction_loss");
  if (!x.all_finite() || !xhat.all_finite())
    throw ConfigError("reconstruction_loss: non-finite input");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = static_cast<double>(x.data[i]) - static_cast<double>(xhat.data[i]);
    acc += d * d;
  }
  return static_cast<S>(acc / static_cast<double>(x.numel()));
}

inline constexpr double kProbClamp = 1e-7;

// -(1/N) sum[y log p + (1-y) log(1-p)], probabilities clamped away from 0/1.
template <class S>
S classification_loss(const std::vector<int>& y, const std::vector<S>& p) {
  if (y.size() != p.size() || y.empty())
    throw ShapeError("classification_loss: need equal nonzero label/probability counts");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1)
      throw ConfigError("classification_loss: labels must be 0 or 1");
    const double pi =
        std::clamp(static_cast<double>(p[i]), kProbClamp, 1.0 - kProbClamp);
    acc += y[i] == 1 ? std::log(pi) : std::log(1.0 - pi);
  }
  return static_cast<S>(-acc / static_cast<double>(y.size()));
}

template <class S>
S total_loss(S l_r, S l_c, const LossWeights& w) {
  w.validate();
  return static_cast<S>(w.gamma1) * l_r + static_cast<S>(w.gamma2) * l_c;
}

// Case-granular split: every slice of a case lands on one side. Cases are
// shuffled deterministically and moved to the test side until its slice
// share best approximates `fraction`.
inline std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>
split_cases(const std::vector<std::pair<std::uint32_t, std::size_t>>& case_slices,
            double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw ConfigError("split: fraction must lie in (0,1)");
  if (case_slices.size() < 2)
    throw ConfigError("split: need at least 2 cases, got " +
                      std::to_string(case_slices.size()));
  std::vector<std::size_t> order(case_slices.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1],
              order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

  std::size_t total = 0;
  for (const auto& [id, n] : case_slices) total += n;
  const double target = fraction * static_cast<double>(total);

  std::vector<std::uint32_t> test_ids, train_ids;
  std::size_t test_slices = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& [id, n] = case_slices[order[k]];
    const bool take =
        test_ids.empty() ||
        std::abs(static_cast<double>(test_slices + n) - target) <
            std::abs(static_cast<double>(test_slices) - target);
    if (take && train_ids.size() + (order.size() - k) > 1) {
      test_ids.push_back(id);
      test_slices += n;
    } else {
      train_ids.push_back(id);
    }
  }
  if (train_ids.empty()) {
    train_ids.push_back(test_ids.back());
    test_ids.pop_back();
  }
  std::sort(train_ids.begin(), train_ids.end());
  std::sort(test_ids.begin(), test_ids.end());
  return {train_ids, test_ids};
}

inline std::vector<std::pair<std::uint32_t, std::size_t>> case_slice_counts(
    const Dataset& ds) {
  std::map<std::uint32_t, std::size_t> counts;
  for (const auto& s : ds.samples) counts[s.case_id]++;
  return {counts.begin(), counts.end()};
}

inline std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>
split_dataset(const Dataset& ds, double fraction, std::uint64_t seed) {
  return split_cases(case_slice_counts(ds), fraction, seed);
}

inline Dataset subset_by_cases(const Dataset& ds,
                               const std::vector<std::uint32_t>& ids) {
  std::set<std::uint32_t> want(ids.begin(), ids.end());
  Dataset out;
  for (const auto& s : ds.samples)
    if (want.count(s.case_id)) out.samples.push_back(s);
  return out;
}

template <class S>
struct BatchLosses {
  S l_r, l_c, l_t;
};

// One forward pass with all three losses; records gradients in train mode.
template <class S>
BatchLosses<S> forward_losses(const Model<S>& model, nn::ParamMap<S>& params,
                              const Tensor<S>& batch, const std::vector<S>& labels,
                              const LossWeights& w, Mode mode, Rng* rng = nullptr,
                              Graph<S>* g_out = nullptr,
                              std::map<std::string, int>* ids_out = nullptr,
                              int* lt_node = nullptr) {
  Graph<S> local;
  Graph<S>& g = g_out ? *g_out : local;
  nn::FwdCtx<S> c{g, params, mode, rng};
  const int x = g.leaf(batch);
  const int z = model.encode_g(c, x);
  const int xhat = model.decode_g(c, z);
  const int logit = model.classify_logit_g(c, z);
  const int lr = op::mse_loss(g, xhat, x);
  const int lc = op::bce_with_logits(g, logit, labels);
  const int lt = op::axpby(g, static_cast<S>(w.gamma1), lr,
                           static_cast<S>(w.gamma2), lc);
  if (ids_out) *ids_out = c.ids;
  if (lt_node) *lt_node = lt;
  return {g.val(lr).data[0], g.val(lc).data[0], g.val(lt).data[0]};
}

// Fraction of correctly classified slices at the given threshold.
template <class S>
double classification_accuracy(const Checkpoint<S>& ckpt, const Dataset& ds,
                               double threshold = 0.5, std::size_t batch = 64) {
  if (ds.samples.empty()) throw ConfigError("accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.samples.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + batch, ds.samples.size()); ++i)
      idx.push_back(i);
    const Tensor<S> b = make_batch<S>(ds, idx);
    const Tensor<S> z = encode(ckpt, b);
    const Tensor<S> p = classify(ckpt, z);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const bool pred = static_cast<double>(p.data[i]) >= threshold;
      correct += (pred == ds.samples[idx[i]].tumour_present);
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.samples.size());
}

// Full training loop. Deterministic in (dataset, configs): one RNG seeded
// from the train config drives the shuffle and every dropout mask.
template <class S>
Checkpoint<S> train(const Dataset& ds, const ModelConfig& mcfg,
                    const TrainConfig& tcfg) {
  mcfg.validate();
  tcfg.validate();
  bool any_tumour = false, any_healthy = false;
  for (const auto& s : ds.samples) (s.tumour_present ? any_tumour : any_healthy) = true;
  if (!any_tumour || !any_healthy)
    throw ConfigError("train: dataset must contain both tumoural and healthy slices");

  auto [train_ids, val_ids] = split_dataset(ds, tcfg.split_fraction, tcfg.seed);
  const Dataset train_set = subset_by_cases(ds, train_ids);
  const Dataset val_set = subset_by_cases(ds, val_ids);

  Checkpoint<S> ckpt = build_model<S>(mcfg);
  ckpt.train_config = tcfg;
  Model<S> model(mcfg);
  Rng rng(tcfg.seed);

  auto eval_split = [&](const Dataset& set) -> BatchLosses<S> {
    double lr = 0, lc = 0, lt = 0;
    std::size_t n = 0;
    for (std::size_t start = 0; start < set.samples.size();
         start += static_cast<std::size_t>(tcfg.batch_size)) {
      std::vector<std::size_t> idx;
      for (std::size_t i = start;
           i < std::min(start + static_cast<std::size_t>(tcfg.batch_size),
                        set.samples.size());
           ++i)
        idx.push_back(i);
      const Tensor<S> b = make_batch<S>(set, idx);
      std::vector<S> labels;
      for (std::size_t i : idx)
        labels.push_back(set.samples[i].tumour_present ? S(1) : S(0));
      const auto l = forward_losses(model, ckpt.params, b, labels, tcfg.weights,
                                    Mode::Infer);
      lr += static_cast<double>(l.l_r) * idx.size();
      lc += static_cast<double>(l.l_c) * idx.size();
      lt += static_cast<double>(l.l_t) * idx.size();
      n += idx.size();
    }
    return {static_cast<S>(lr / n), static_cast<S>(lc / n), static_cast<S>(lt / n)};
  };

  std::vector<std::size_t> order(train_set.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    double lr_sum = 0, lc_sum = 0, lt_sum = 0;
    std::size_t seen = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tcfg.batch_size), ++batch_index) {
      std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(
                              std::min(start + static_cast<std::size_t>(tcfg.batch_size),
                                       order.size())));
      const Tensor<S> batch = make_batch<S>(train_set, idx);
      std::vector<S> labels;
      for (std::size_t i : idx)
        labels.push_back(train_set.samples[i].tumour_present ? S(1) : S(0));

      Graph<S> g;
      std::map<std::string, int> ids;
      int lt_node = -1;
      const auto losses = forward_losses(model, ckpt.params, batch, labels,
                                         tcfg.weights, Mode::Train, &rng, &g, &ids,
                                         &lt_node);
      if (!std::isfinite(static_cast<double>(losses.l_t)))
        throw DivergenceError(epoch, batch_index);
      g.backward(lt_node);

      std::map<std::string, Tensor<S>> grads;
      for (const auto& [name, id] : ids)
        if (ckpt.params.at(name).trainable) grads[name] = g.grad(id);
      adam_step(ckpt.params, grads, ckpt.opt, tcfg.adam);

      lr_sum += static_cast<double>(losses.l_r) * idx.size();
      lc_sum += static_cast<double>(losses.l_c) * idx.size();
      lt_sum += static_cast<double>(losses.l_t) * idx.size();
      seen += idx.size();
    }

    HistoryRow row;
    row.epoch = epoch;
    row.train_lr = lr_sum / static_cast<double>(seen);
    row.train_lc = lc_sum / static_cast<double>(seen);
    row.train_lt = lt_sum / static_cast<double>(seen);
    const auto v = eval_split(val_set);
    row.val_lr = static_cast<double>(v.l_r);
    row.val_lc = static_cast<double>(v.l_c);
    row.val_lt = static_cast<double>(v.l_t);
    ckpt.history.push_back(row);
  }
  return ckpt;
}

inline void export_history_csv(const std::vector<HistoryRow>& history,
                               std::ostream& os) {
  os << "epoch,split,L_r,L_c,L_t\n";
  for (const HistoryRow& r : history) {
    os << r.epoch << ",train," << r.train_lr << ',' << r.train_lc << ','
       << r.train_lt << '\n';
    os << r.epoch << ",val," << r.val_lr << ',' << r.val_lc << ',' << r.val_lt
       << '\n';
  }
}

}  // namespace mocae
