#pragma once
// Central finite-difference verification of analytic gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "mocae/tensor.hpp"

namespace mocae {

struct FdResult {
  double max_rel_err = 0.0;
  // false when the function produced a non-finite value at some probe;
  // max_rel_err is meaningless in that case.
  bool finite = true;
};

// f(x, grad_out): returns the scalar value of the function at x and, when
// grad_out is non-null, fills it with the analytic gradient. The analytic
// path and the probe path share the same callable but only the probe values
// enter the numeric difference.
template <class F>
FdResult finite_difference_check(F&& f, const Tensor<double>& point, double eps) {
  if (eps <= 0.0) throw ConfigError("finite_difference_check: eps must be > 0");
  Tensor<double> analytic(point.shape);
  const double f0 = f(point, &analytic);
  if (!std::isfinite(f0) || !analytic.all_finite()) return {0.0, false};

  FdResult r;
  Tensor<double> probe = point;
  for (std::size_t i = 0; i < point.numel(); ++i) {
    probe.data[i] = point.data[i] + eps;
    const double fp = f(probe, nullptr);
    probe.data[i] = point.data[i] - eps;
    const double fm = f(probe, nullptr);
    probe.data[i] = point.data[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) return {0.0, false};
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom =
        std::max({std::abs(analytic.data[i]), std::abs(numeric), 1e-12});
    const double rel = std::abs(analytic.data[i] - numeric) / denom;
    if (rel > r.max_rel_err) r.max_rel_err = rel;
  }
  return r;
}

// Kink-tolerant variant: scores each element at several probe widths and
// keeps its best error. A probe interval that happens to straddle a ReLU
// kink yields a spurious O(1) difference at one width but not at a narrower
// one, whereas a genuine gradient bug fails at every width.
template <class F>
FdResult finite_difference_check_multi(F&& f, const Tensor<double>& point,
                                       std::initializer_list<double> widths) {
  Tensor<double> analytic(point.shape);
  const double f0 = f(point, &analytic);
  if (!std::isfinite(f0) || !analytic.all_finite()) return {0.0, false};

  FdResult r;
  Tensor<double> probe = point;
  for (std::size_t i = 0; i < point.numel(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (double eps : widths) {
      if (eps <= 0.0)
        throw ConfigError("finite_difference_check: eps must be > 0");
      probe.data[i] = point.data[i] + eps;
      const double fp = f(probe, nullptr);
      probe.data[i] = point.data[i] - eps;
      const double fm = f(probe, nullptr);
      probe.data[i] = point.data[i];
      if (!std::isfinite(fp) || !std::isfinite(fm)) return {0.0, false};
      const double numeric = (fp - fm) / (2.0 * eps);
      const double denom =
          std::max({std::abs(analytic.data[i]), std::abs(numeric), 1e-12});
      best = std::min(best, std::abs(analytic.data[i] - numeric) / denom);
    }
    if (best > r.max_rel_err) r.max_rel_err = best;
  }
  return r;
}

}  // namespace mocae
