#pragma once

#include <functional>
#include <vector>

#include "gtnet/tensor.hpp"

namespace gtnet {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences over every entry of `params`:
///   err = |analytic - cd| / max(|analytic|, |cd|, R)
/// where R = 1e5 * eps_mach * |f| / (2 * epsilon) is the scale below which
/// the central difference is dominated by rounding.
/// The forward must be deterministic (eval mode, no dropout); two identical
/// evaluations that disagree raise std::runtime_error. Parameter values are
/// restored before returning.
GradCheckResult finite_difference_check(const std::function<Tensor()>& forward, std::vector<Tensor> params,
                                        double epsilon = 1e-5);

}  // namespace gtnet
