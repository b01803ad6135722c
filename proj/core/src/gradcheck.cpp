#include "gtnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gtnet {

GradCheckResult finite_difference_check(const std::function<Tensor()>& forward, std::vector<Tensor> params,
                                        double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("finite_difference_check: epsilon must be > 0");
  for (auto& p : params) {
    if (!p.requires_grad()) throw std::invalid_argument("finite_difference_check: parameter does not require grad");
    p.zero_grad();
  }

  const Tensor loss = forward();
  const double first = loss.item();
  const double second = forward().item();
  if (first != second) {
    throw std::runtime_error("finite_difference_check: forward is not deterministic (" + std::to_string(first) +
                             " vs " + std::to_string(second) + ")");
  }
  backward(loss);

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    const auto analytic = p.grad();
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double plus = forward().item();
      values[i] = saved - epsilon;
      const double minus = forward().item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      // Rounding in plus - minus is a few ulps of |f|. Below this scale the
      // difference quotient is noise, so tiny derivatives (including ones that
      // are exactly zero by structure) are compared on an absolute scale.
      const double resolution =
          1e5 * std::numeric_limits<double>::epsilon() * std::max(std::abs(plus), std::abs(minus)) / (2.0 * epsilon);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), resolution, 1e-12});
      const double err = std::abs(analytic[i] - numeric) / denom;
      ++result.entries_checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_param = pi;
        result.worst_index = i;
        result.analytic = analytic[i];
        result.numeric = numeric;
      }
    }
  }
  for (auto& p : params) p.zero_grad();
  return result;
}

}  // namespace gtnet
