#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gtnet/tensor.hpp"

namespace gtnet {

// Differentiable primitives. Every op checks its forward output for NaN/Inf
// and reports the op name on failure.

/// Row-wise linear map: a[..., k] x w[k, m] -> [..., m]. Products accumulate
/// over k in ascending order starting from zero.
Tensor matmul(const Tensor& a, const Tensor& w);
/// a[m, k] x b[n, k]^T -> [m, n].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a[..., c] + bias[c].
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor scale(const Tensor& a, double factor);
Tensor div_scalar(const Tensor& a, double divisor);
Tensor relu(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
/// Inserts a new axis of extent `count` at `axis`, repeating the values.
Tensor broadcast_axis(const Tensor& a, std::size_t axis, std::size_t count);
/// Concatenates along the last axis; leading extents must agree.
Tensor concat_last(const std::vector<Tensor>& parts);
/// Stacks [n_i, c] inputs into [sum n_i, c].
Tensor concat_rows(const std::vector<Tensor>& parts);
/// Columns [begin, end) of the last axis.
Tensor slice_last(const Tensor& a, std::size_t begin, std::size_t end);
/// src[n, c] gathered by flat `indices` into shape `leading` + [c].
/// Backward scatter-adds into src.
Tensor gather_rows(const Tensor& src, std::span<const std::size_t> indices, Shape leading);

/// Reductions remove `axis`.
Tensor reduce_max(const Tensor& a, std::size_t axis);
Tensor reduce_mean(const Tensor& a, std::size_t axis);
Tensor reduce_sum(const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);

Tensor softmax(const Tensor& a, std::size_t axis);

/// Per-channel normalization over all leading rows of a[..., c].
/// In training mode uses batch statistics and updates the running buffers;
/// in eval mode it is the affine map defined by the running buffers.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};
Tensor batch_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training);

Tensor dropout(const Tensor& a, double p, std::mt19937_64* rng, bool training);

/// Mean softmax cross-entropy of logits[b, k] against class indices.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets,
                     double label_smoothing = 0.0);

}  // namespace gtnet
