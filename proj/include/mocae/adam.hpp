#pragma once
// Adam optimizer with bias correction.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "mocae/configs.hpp"
#include "mocae/nn.hpp"

namespace mocae {

template <class S>
struct AdamState {
  std::map<std::string, Tensor<S>> m;
  std::map<std::string, Tensor<S>> v;
  std::int64_t t = 0;
};

// One update over every gradient entry. Parameters without a gradient slot
// (non-trainable or absent from the graph) are left untouched.
template <class S>
void adam_step(nn::ParamMap<S>& params, const std::map<std::string, Tensor<S>>& grads,
               AdamState<S>& state, const AdamConfig& cfg) {
  cfg.validate();
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (const auto& [name, grad] : grads) {
    auto pit = params.find(name);
    if (pit == params.end())
      throw ConfigError("adam_step: gradient for unknown parameter " + name);
    Tensor<S>& p = pit->second.value;
    if (!p.same_shape(grad))
      throw ShapeError("adam_step: parameter " + name + " has shape " +
                       p.shape_str() + " but gradient has " + grad.shape_str());
    auto& m = state.m.try_emplace(name, Tensor<S>(p.shape)).first->second;
    auto& v = state.v.try_emplace(name, Tensor<S>(p.shape)).first->second;
    const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const S gi = grad.data[i];
      m.data[i] = b1 * m.data[i] + (S(1) - b1) * gi;
      v.data[i] = b2 * v.data[i] + (S(1) - b2) * gi * gi;
      const double mhat = static_cast<double>(m.data[i]) / bc1;
      const double vhat = static_cast<double>(v.data[i]) / bc2;
      p.data[i] -= static_cast<S>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace mocae
