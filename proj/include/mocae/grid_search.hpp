#pragma once
// Grid search over the loss-weight pair: one full training run per
// candidate, scored by entire Dice on a validation retrieval task.

#include <string>
#include <vector>

#include "mocae/evaluation.hpp"
#include "mocae/train.hpp"

namespace mocae {

struct GridPoint {
  LossWeights weights;
  double entire_dice_mean = 0.0;
  double tumoural_dice_mean = 0.0;
  double normal_dice_mean = 0.0;
};

struct GridSearchResult {
  LossWeights best;
  std::vector<GridPoint> table;
};

template <class S>
GridSearchResult gamma_grid_search(const Dataset& ds, const ModelConfig& mcfg,
                                   const TrainConfig& tcfg, double grid_step,
                                   std::size_t k = 1) {
  if (grid_step <= 0.0 || grid_step > 1.0)
    throw ConfigError("grid search: grid_step must lie in (0,1]");
  const double steps_f = 1.0 / grid_step;
  const int steps = static_cast<int>(std::lround(steps_f));
  if (std::abs(steps_f - steps) > 1e-9)
    throw ConfigError("grid search: grid_step must divide 1 evenly");

  const auto [train_ids, val_ids] = split_dataset(ds, tcfg.split_fraction, tcfg.seed);
  const Dataset train_set = subset_by_cases(ds, train_ids);
  const Dataset val_set = subset_by_cases(ds, val_ids);
  if (val_set.samples.empty())
    throw ConfigError("grid search: empty validation set");
  if (select_query_slices(val_set).empty())
    throw ConfigError("grid search: validation set has no tumoural cases to query");

  GridSearchResult result;
  double best_score = -1.0;
  for (int i = 0; i <= steps; ++i) {
    TrainConfig cand = tcfg;
    cand.weights.gamma1 = static_cast<double>(i) * grid_step;
    cand.weights.gamma2 = 1.0 - cand.weights.gamma1;
    const Checkpoint<S> ckpt = train<S>(ds, mcfg, cand);
    const Index ix = build_index(ckpt, train_set);
    const DiceReport rep =
        evaluate_protocol(ix, ckpt, train_set, val_set, k);
    GridPoint pt;
    pt.weights = cand.weights;
    pt.entire_dice_mean = rep.entire.mean;
    pt.tumoural_dice_mean = rep.tumoural.mean;
    pt.normal_dice_mean = rep.normal.mean;
    result.table.push_back(pt);
    if (rep.entire.mean > best_score) {
      best_score = rep.entire.mean;
      result.best = cand.weights;
    }
  }
  return result;
}

}  // namespace mocae
