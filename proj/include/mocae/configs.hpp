#pragma once
// Plain configuration structs shared by the model, trainer and CLI.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mocae/common.hpp"

namespace mocae {

// Relative weights of the reconstruction and classification losses.
struct LossWeights {
  double gamma1 = 0.2;
  double gamma2 = 0.8;

  void validate() const {
    if (gamma1 < 0.0 || gamma1 > 1.0 || gamma2 < 0.0 || gamma2 > 1.0)
      throw ConfigError("loss weights must lie in [0,1]");
    if (std::abs(gamma1 + gamma2 - 1.0) > 1e-9)
      throw ConfigError("loss weights must sum to 1, got " +
                        std::to_string(gamma1 + gamma2));
  }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (lr <= 0.0) throw ConfigError("adam: learning rate must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw ConfigError("adam: betas must lie in [0,1)");
    if (eps <= 0.0) throw ConfigError("adam: eps must be > 0");
  }
};

struct TrainConfig {
  LossWeights weights;
  AdamConfig adam;
  int batch_size = 32;
  int epochs = 20;
  std::uint64_t seed = 1;
  double split_fraction = 0.1;  // validation share, split at case granularity

  void validate() const {
    weights.validate();
    adam.validate();
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (split_fraction <= 0.0 || split_fraction >= 1.0)
      throw ConfigError("train: split_fraction must lie in (0,1)");
  }
};

struct ModelConfig {
  int input_h = 64;
  int input_w = 64;
  int input_channels = 4;  // the four scanner modalities
  int latent_dim = 64;
  std::vector<int> widths = {16, 32, 64};
  int blocks_per_stage = 2;
  int classifier_hidden = 64;
  double dropout = 0.1;
  std::uint64_t seed = 1;

  int stages() const { return static_cast<int>(widths.size()); }

  // Spatial extent at the bottleneck after the stride-2 stages.
  std::pair<int, int> bottleneck_hw() const {
    int h = input_h, w = input_w;
    for (int s = 0; s < stages(); ++s) {
      if (h % 2 != 0 || w % 2 != 0)
        throw ConfigError("model: stage " + std::to_string(s) +
                          " would downsample an odd spatial size " +
                          std::to_string(h) + "x" + std::to_string(w));
      h /= 2;
      w /= 2;
    }
    if (h < 1 || w < 1)
      throw ConfigError("model: too many stages for input size");
    return {h, w};
  }

  void validate() const {
    if (input_channels != 4)
      throw ConfigError("model: input_channels must be 4 (T1, T1Gd, T2, FLAIR)");
    if (latent_dim < 1) throw ConfigError("model: latent_dim must be >= 1");
    if (classifier_hidden < 1)
      throw ConfigError("model: classifier_hidden must be >= 1");
    if (widths.empty()) throw ConfigError("model: need at least one stage width");
    for (int w : widths)
      if (w < 1) throw ConfigError("model: stage widths must be >= 1");
    if (blocks_per_stage < 1)
      throw ConfigError("model: blocks_per_stage must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0)
      throw ConfigError("model: dropout must lie in [0,1)");
    (void)bottleneck_hw();
  }
};

struct HistoryRow {
  int epoch = 0;
  double train_lr = 0, train_lc = 0, train_lt = 0;
  double val_lr = 0, val_lc = 0, val_lt = 0;
};

}  // namespace mocae
