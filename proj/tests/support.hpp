#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gtnet/attention.hpp"
#include "gtnet/graph.hpp"
#include "gtnet/ops.hpp"

namespace testing {

inline gtnet::Tensor random_tensor(gtnet::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                                   bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(gtnet::shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return gtnet::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<double> to_vector(const gtnet::Tensor& t) { return {t.data().begin(), t.data().end()}; }

/// Scalar probe sum(out * r) with a fixed random r: keeps gradients of
/// moderate size everywhere so relative finite-difference errors are
/// meaningful.
inline gtnet::Tensor probe(const gtnet::Tensor& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return gtnet::sum_all(gtnet::mul(out, random_tensor(out.shape(), rng, 0.5, 1.5)));
}

// Closed-form fills shared with tests/oracles/attention_oracle.py.
inline void weight_fill(gtnet::Tensor& w, int salt) {
  auto d = w.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.5 * std::sin(0.7 * static_cast<double>(i) + 1.3 * salt);
}
inline void bias_fill(gtnet::Tensor& b, int salt) {
  auto d = b.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.1 * std::cos(0.5 * static_cast<double>(i) + salt);
}
inline gtnet::Tensor input_fill(std::size_t n, std::size_t c) {
  std::vector<double> v(n * c);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = static_cast<double>(i);
    v[i] = std::sin(1.7 * x + 0.3) * (1.0 + 0.05 * x);
  }
  return gtnet::Tensor::from({n, c}, std::move(v));
}

// ---------------------------------------------------------------------------
// Straight-line reference implementations. They follow the block equations
// with plain loops and the same accumulation order as the library (products
// summed over the inner index in ascending order, starting from zero), so the
// comparison can be bitwise.

using Matrix = std::vector<double>;  // row-major

inline Matrix linear(const Matrix& x, std::size_t rows, std::size_t in, const gtnet::Tensor& w,
                     const gtnet::Tensor* b) {
  const std::size_t out = w.dim(1);
  const auto W = w.data();
  Matrix y(rows * out);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < out; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < in; ++k) s += x[r * in + k] * W[k * out + j];
      if (b) s = s + b->data()[j];
      y[r * out + j] = s;
    }
  return y;
}

/// Local block with relative encoding, F' enabled, max aggregation.
inline Matrix local_reference(gtnet::attention::LocalBlock& block, const gtnet::Tensor& features,
                              const gtnet::graph::NeighborGraph& g) {
  const std::size_t n = features.dim(0), c = features.dim(1), d = block.options().out_channels, k = g.k;
  const Matrix x(features.data().begin(), features.data().end());
  const Matrix q = linear(x, n, c, block.query().weight(), nullptr);
  const Matrix key = linear(x, n, c, block.key().weight(), nullptr);
  const Matrix val = linear(x, n, c, block.value().weight(), nullptr);
  const double root = std::sqrt(static_cast<double>(d));
  Matrix out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    // Edge features e_ij = W_e [f_j - f_i, f_i] + b_e, then F' = tau(relu(mu(e))).
    Matrix joint(k * 2 * c);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t nb = g.indices[i * k + j];
      for (std::size_t ch = 0; ch < c; ++ch) {
        joint[j * 2 * c + ch] = x[nb * c + ch] - x[i * c + ch];
        joint[j * 2 * c + c + ch] = x[i * c + ch];
      }
    }
    const Matrix e = linear(joint, k, 2 * c, block.edge().weight(), &block.edge().bias());
    Matrix hidden = linear(e, k, d, block.mu().weight(), &block.mu().bias());
    for (auto& h : hidden) h = h > 0.0 ? h : 0.0;
    const Matrix enc = linear(hidden, k, d, block.tau().weight(), &block.tau().bias());
    for (std::size_t ch = 0; ch < d; ++ch) {
      std::vector<double> logit(k), value(k);
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t nb = g.indices[i * k + j];
        logit[j] = ((q[i * d + ch] - key[nb * d + ch]) + enc[j * d + ch]) / root;
        value[j] = val[nb * d + ch] + enc[j * d + ch];
      }
      double mx = logit[0];
      for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, logit[j]);
      std::vector<double> w(k);
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        w[j] = std::exp(logit[j] - mx);
        sum += w[j];
      }
      double best = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double v = (w[j] / sum) * value[j];
        if (j == 0 || v > best) best = v;
      }
      out[i * d + ch] = best;
    }
  }
  return out;
}

/// Global block in training mode (batch statistics), scaled logits, residual.
inline Matrix global_reference(gtnet::attention::GlobalBlock& block, const gtnet::Tensor& features,
                               Matrix* attention = nullptr) {
  const std::size_t n = features.dim(0), d = features.dim(1), dr = d / 4;
  const Matrix x(features.data().begin(), features.data().end());
  const Matrix q = linear(x, n, d, block.query().weight(), nullptr);
  const Matrix k = linear(x, n, d, block.key().weight(), nullptr);
  const Matrix v = linear(x, n, d, block.value().weight(), nullptr);
  const double root = std::sqrt(static_cast<double>(dr));
  Matrix a(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < dr; ++c) s += q[i * dr + c] * k[j * dr + c];
      a[i * n + j] = s / root;
    }
    double mx = a[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, a[i * n + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      a[i * n + j] = std::exp(a[i * n + j] - mx);
      sum += a[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= sum;
  }
  if (attention) *attention = a;
  Matrix offset(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * v[j * d + c];
      offset[i * d + c] = x[i * d + c] - s;
    }
  auto& lbr = block.alignment();
  const Matrix y = linear(offset, n, d, lbr.linear().weight(), &lbr.linear().bias());
  const auto gamma = lbr.norm().gamma().data();
  const auto beta = lbr.norm().beta().data();
  Matrix out(n * d);
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += y[i * d + c];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) var += (y[i * d + c] - mean) * (y[i * d + c] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = (y[i * d + c] - mean) * inv * gamma[c] + beta[c];
      out[i * d + c] = x[i * d + c] + (z > 0.0 ? z : 0.0);
    }
  }
  return out;
}

/// O(N^2 log N) neighbour oracle: full sort of (distance, index) pairs.
inline std::vector<std::size_t> knn_reference(const std::vector<double>& x, std::size_t n, std::size_t m,
                                              std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < m; ++c) {
        const double diff = x[i * m + c] - x[j * m + c];
        s += diff * diff;
      }
      all.emplace_back(s, j);
    }
    std::sort(all.begin(), all.end());
    for (std::size_t j = 0; j < k; ++j) out.push_back(all[j].second);
  }
  return out;
}

}  // namespace testing
