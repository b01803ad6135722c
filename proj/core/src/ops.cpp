#include "gtnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace gtnet {
namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(const char* op, Shape shape, std::vector<NodePtr> inputs) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->value.assign(shape_numel(shape), 0.0);
  node->shape = std::move(shape);
  if (!NoGradGuard::active()) {
    for (const auto& in : inputs) node->requires_grad = node->requires_grad || in->requires_grad;
  }
  node->inputs = std::move(inputs);
  return node;
}

Tensor finish(NodePtr node) {
  check_finite(node->value, node->op, "forward");
  if (!node->requires_grad) {
    node->inputs.clear();
    node->backward_fn = nullptr;
  }
  return Tensor(std::move(node));
}

void require(bool cond, const char* op, const std::string& what) {
  if (!cond) throw ShapeError(std::string(op) + ": " + what);
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

// (outer, axis extent, inner) decomposition of a shape around `axis`.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  require(axis < s.size(), op, "axis " + std::to_string(axis) + " out of range for " + shape_to_string(s));
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

Shape without_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out.push_back(s[i]);
  return out;
}

template <typename F>
Tensor elementwise_binary(const char* op, const Tensor& a, const Tensor& b, F f, double ga, double gb,
                          bool product) {
  require(a.shape() == b.shape(), op,
          "shape mismatch " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  auto node = make_node(op, a.shape(), {a.node(), b.node()});
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t i = 0; i < av.size(); ++i) node->value[i] = f(av[i], bv[i]);
  node->backward_fn = [ga, gb, product](Node& self) {
    auto& A = *self.inputs[0];
    auto& B = *self.inputs[1];
    const auto& g = self.grad;
    if (A.requires_grad) {
      auto& da = A.ensure_grad();
      if (product)
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * B.value[i];
      else
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += ga * g[i];
    }
    if (B.requires_grad) {
      auto& db = B.ensure_grad();
      if (product)
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * A.value[i];
      else
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += gb * g[i];
    }
  };
  return finish(std::move(node));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& w) {
  constexpr const char* op = "matmul";
  require(a.rank() >= 1 && w.rank() == 2, op, "expects a[..., k] and w[k, m]");
  const std::size_t k = last_dim(a.shape());
  require(w.dim(0) == k, op,
          "inner extent mismatch " + shape_to_string(a.shape()) + " x " + shape_to_string(w.shape()));
  const std::size_t m = w.dim(1);
  const std::size_t rows = a.numel() / std::max<std::size_t>(k, 1);
  Shape out_shape = a.shape();
  out_shape.back() = m;
  auto node = make_node(op, out_shape, {a.node(), w.node()});
  const double* A = a.node()->value.data();
  const double* W = w.node()->value.data();
  double* O = node->value.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* out_row = O + r * m;
    const double* a_row = A + r * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a_row[kk];
      const double* w_row = W + kk * m;
      for (std::size_t j = 0; j < m; ++j) out_row[j] += av * w_row[j];
    }
  }
  node->backward_fn = [rows, k, m](Node& self) {
    auto& An = *self.inputs[0];
    auto& Wn = *self.inputs[1];
    const double* G = self.grad.data();
    if (An.requires_grad) {
      double* dA = An.ensure_grad().data();
      // dA = G W^T, accumulated row by row against W^T so the inner loop is a
      // contiguous axpy.
      std::vector<double> wt(k * m);
      for (std::size_t kk = 0; kk < k; ++kk)
        for (std::size_t j = 0; j < m; ++j) wt[j * k + kk] = Wn.value[kk * m + j];
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g_row = G + r * m;
        double* da_row = dA + r * k;
        for (std::size_t j = 0; j < m; ++j) {
          const double g = g_row[j];
          if (g == 0.0) continue;
          const double* wt_row = wt.data() + j * k;
          for (std::size_t kk = 0; kk < k; ++kk) da_row[kk] += g * wt_row[kk];
        }
      }
    }
    if (Wn.requires_grad) {
      double* dW = Wn.ensure_grad().data();
      const double* A = An.value.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g_row = G + r * m;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double av = A[r * k + kk];
          if (av == 0.0) continue;
          double* dw_row = dW + kk * m;
          for (std::size_t j = 0; j < m; ++j) dw_row[j] += av * g_row[j];
        }
      }
    }
  };
  return finish(std::move(node));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  constexpr const char* op = "matmul_nt";
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1), op,
          "expects a[m, k] and b[n, k], got " + shape_to_string(a.shape()) + " and " +
              shape_to_string(b.shape()));
  const std::size_t m = a.dim(0), n = b.dim(0), k = a.dim(1);
  auto node = make_node(op, {m, n}, {a.node(), b.node()});
  const double* A = a.node()->value.data();
  const double* B = b.node()->value.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += A[i * k + kk] * B[j * k + kk];
      node->value[i * n + j] = s;
    }
  }
  node->backward_fn = [m, n, k](Node& self) {
    auto& An = *self.inputs[0];
    auto& Bn = *self.inputs[1];
    const double* G = self.grad.data();
    if (An.requires_grad) {
      double* dA = An.ensure_grad().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          for (std::size_t kk = 0; kk < k; ++kk) dA[i * k + kk] += g * Bn.value[j * k + kk];
        }
    }
    if (Bn.requires_grad) {
      double* dB = Bn.ensure_grad().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = G[i * n + j];
          for (std::size_t kk = 0; kk < k; ++kk) dB[j * k + kk] += g * An.value[i * k + kk];
        }
    }
  };
  return finish(std::move(node));
}

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary("add", a, b, [](double x, double y) { return x + y; }, 1.0, 1.0, false);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary("sub", a, b, [](double x, double y) { return x - y; }, 1.0, -1.0, false);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary("mul", a, b, [](double x, double y) { return x * y; }, 0.0, 0.0, true);
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  constexpr const char* op = "add_bias";
  const std::size_t c = last_dim(a.shape());
  require(bias.rank() == 1 && bias.dim(0) == c, op,
          "bias " + shape_to_string(bias.shape()) + " does not match " + shape_to_string(a.shape()));
  auto node = make_node(op, a.shape(), {a.node(), bias.node()});
  const auto& av = a.node()->value;
  const auto& bv = bias.node()->value;
  for (std::size_t i = 0; i < av.size(); ++i) node->value[i] = av[i] + bv[i % c];
  node->backward_fn = [c](Node& self) {
    auto& An = *self.inputs[0];
    auto& Bn = *self.inputs[1];
    const auto& g = self.grad;
    if (An.requires_grad) {
      auto& da = An.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (Bn.requires_grad) {
      auto& db = Bn.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) db[i % c] += g[i];
    }
  };
  return finish(std::move(node));
}

Tensor scale(const Tensor& a, double factor) {
  auto node = make_node("scale", a.shape(), {a.node()});
  const auto& av = a.node()->value;
  for (std::size_t i = 0; i < av.size(); ++i) node->value[i] = av[i] * factor;
  node->backward_fn = [factor](Node& self) {
    auto& da = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += factor * self.grad[i];
  };
  return finish(std::move(node));
}

Tensor div_scalar(const Tensor& a, double divisor) {
  auto node = make_node("div_scalar", a.shape(), {a.node()});
  const auto& av = a.node()->value;
  for (std::size_t i = 0; i < av.size(); ++i) node->value[i] = av[i] / divisor;
  node->backward_fn = [divisor](Node& self) {
    auto& da = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i] / divisor;
  };
  return finish(std::move(node));
}

Tensor relu(const Tensor& a) {
  auto node = make_node("relu", a.shape(), {a.node()});
  const auto& av = a.node()->value;
  for (std::size_t i = 0; i < av.size(); ++i) node->value[i] = av[i] > 0.0 ? av[i] : 0.0;
  node->backward_fn = [](Node& self) {
    auto& In = *self.inputs[0];
    auto& da = In.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (In.value[i] > 0.0) da[i] += self.grad[i];
  };
  return finish(std::move(node));
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.numel(), "reshape",
          "cannot reshape " + shape_to_string(a.shape()) + " to " + shape_to_string(shape));
  auto node = make_node("reshape", std::move(shape), {a.node()});
  node->value = a.node()->value;
  node->backward_fn = [](Node& self) {
    auto& da = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i];
  };
  return finish(std::move(node));
}

Tensor broadcast_axis(const Tensor& a, std::size_t axis, std::size_t count) {
  constexpr const char* op = "broadcast_axis";
  require(axis <= a.rank(), op, "axis out of range");
  require(count >= 1, op, "count must be positive");
  Shape out_shape = a.shape();
  out_shape.insert(out_shape.begin() + static_cast<std::ptrdiff_t>(axis), count);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (std::size_t i = axis; i < a.rank(); ++i) inner *= a.shape()[i];
  auto node = make_node(op, out_shape, {a.node()});
  const auto& av = a.node()->value;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < count; ++c)
      std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(o * inner), inner,
                  node->value.begin() + static_cast<std::ptrdiff_t>((o * count + c) * inner));
  node->backward_fn = [outer, count, inner](Node& self) {
    auto& da = self.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t c = 0; c < count; ++c)
        for (std::size_t i = 0; i < inner; ++i) da[o * inner + i] += self.grad[(o * count + c) * inner + i];
  };
  return finish(std::move(node));
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  constexpr const char* op = "concat_last";
  require(!parts.empty(), op, "no inputs");
  Shape lead = parts.front().shape();
  require(!lead.empty(), op, "inputs must have rank >= 1");
  lead.pop_back();
  const std::size_t rows = shape_numel(lead);
  std::vector<std::size_t> widths;
  std::vector<std::shared_ptr<Node>> inputs;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape pl = p.shape();
    require(!pl.empty(), op, "inputs must have rank >= 1");
    pl.pop_back();
    require(pl == lead, op, "leading extents differ: " + shape_to_string(parts.front().shape()) + " vs " +
                                shape_to_string(p.shape()));
    widths.push_back(p.shape().back());
    total += p.shape().back();
    inputs.push_back(p.node());
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  auto node = make_node(op, out_shape, inputs);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& pv = parts[p].node()->value;
    const std::size_t w = widths[p];
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * w), w,
                  node->value.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    offset += w;
  }
  node->backward_fn = [rows, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < self.inputs.size(); ++p) {
      auto& In = *self.inputs[p];
      const std::size_t w = widths[p];
      if (In.requires_grad) {
        auto& dp = In.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < w; ++c) dp[r * w + c] += self.grad[r * total + off + c];
      }
      off += w;
    }
  };
  return finish(std::move(node));
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  constexpr const char* op = "concat_rows";
  require(!parts.empty(), op, "no inputs");
  const Tensor& first = parts.front();
  require(first.rank() == 2, op, "inputs must be [n, c], got " + shape_to_string(first.shape()));
  const std::size_t c = first.dim(1);
  std::size_t rows = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  for (const auto& p : parts) {
    require(p.rank() == 2 && p.dim(1) == c, op,
            "column extents differ: " + shape_to_string(first.shape()) + " vs " + shape_to_string(p.shape()));
    rows += p.dim(0);
    inputs.push_back(p.node());
  }
  auto node = make_node(op, {rows, c}, inputs);
  auto out = node->value.begin();
  for (const auto& p : parts) out = std::copy(p.node()->value.begin(), p.node()->value.end(), out);
  node->backward_fn = [](Node& self) {
    std::size_t off = 0;
    for (auto& in : self.inputs) {
      const std::size_t n = in->value.size();
      if (in->requires_grad) {
        auto& d = in->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) d[i] += self.grad[off + i];
      }
      off += n;
    }
  };
  return finish(std::move(node));
}

Tensor slice_last(const Tensor& a, std::size_t begin, std::size_t end) {
  constexpr const char* op = "slice_last";
  require(a.rank() >= 1 && begin < end && end <= a.shape().back(), op,
          "invalid range [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
              shape_to_string(a.shape()));
  const std::size_t width = a.shape().back();
  const std::size_t out_w = end - begin;
  const std::size_t rows = a.numel() / width;
  Shape out_shape = a.shape();
  out_shape.back() = out_w;
  auto node = make_node(op, out_shape, {a.node()});
  const auto& av = a.node()->value;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < out_w; ++c) node->value[r * out_w + c] = av[r * width + begin + c];
  node->backward_fn = [rows, width, out_w, begin](Node& self) {
    auto& da = self.inputs[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < out_w; ++c) da[r * width + begin + c] += self.grad[r * out_w + c];
  };
  return finish(std::move(node));
}

Tensor gather_rows(const Tensor& src, std::span<const std::size_t> indices, Shape leading) {
  constexpr const char* op = "gather_rows";
  require(src.rank() == 2, op, "source must be [n, c], got " + shape_to_string(src.shape()));
  require(shape_numel(leading) == indices.size(), op,
          "index count " + std::to_string(indices.size()) + " does not match " + shape_to_string(leading));
  const std::size_t n = src.dim(0), c = src.dim(1);
  for (auto idx : indices)
    require(idx < n, op, "index " + std::to_string(idx) + " out of range for " + std::to_string(n) + " rows");
  Shape out_shape = std::move(leading);
  out_shape.push_back(c);
  auto node = make_node(op, out_shape, {src.node()});
  const auto& sv = src.node()->value;
  for (std::size_t r = 0; r < indices.size(); ++r)
    std::copy_n(sv.begin() + static_cast<std::ptrdiff_t>(indices[r] * c), c,
                node->value.begin() + static_cast<std::ptrdiff_t>(r * c));
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  node->backward_fn = [idx = std::move(idx), c](Node& self) {
    auto& ds = self.inputs[0]->ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < c; ++j) ds[idx[r] * c + j] += self.grad[r * c + j];
  };
  return finish(std::move(node));
}

Tensor reduce_max(const Tensor& a, std::size_t axis) {
  constexpr const char* op = "reduce_max";
  const auto s = split_axis(a.shape(), axis, op);
  require(s.len > 0, op, "empty reduction axis");
  auto node = make_node(op, without_axis(a.shape(), axis), {a.node()});
  const auto& av = a.node()->value;
  std::vector<std::size_t> argmax(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = 0;
      double best_v = av[o * s.len * s.inner + i];
      for (std::size_t l = 1; l < s.len; ++l) {
        const double v = av[(o * s.len + l) * s.inner + i];
        if (v > best_v) {
          best_v = v;
          best = l;
        }
      }
      node->value[o * s.inner + i] = best_v;
      argmax[o * s.inner + i] = (o * s.len + best) * s.inner + i;
    }
  node->backward_fn = [argmax = std::move(argmax)](Node& self) {
    auto& da = self.inputs[0]->ensure_grad();
    for (std::size_t r = 0; r < argmax.size(); ++r) da[argmax[r]] += self.grad[r];
  };
  return finish(std::move(node));
}

Tensor reduce_sum(const Tensor& a, std::size_t axis) {
  constexpr const char* op = "reduce_sum";
  const auto s = split_axis(a.shape(), axis, op);
  auto node = make_node(op, without_axis(a.shape(), axis), {a.node()});
  const auto& av = a.node()->value;
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i) node->value[o * s.inner + i] += av[(o * s.len + l) * s.inner + i];
  node->backward_fn = [s](Node& self) {
    auto& da = self.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.len; ++l)
        for (std::size_t i = 0; i < s.inner; ++i) da[(o * s.len + l) * s.inner + i] += self.grad[o * s.inner + i];
  };
  return finish(std::move(node));
}

Tensor reduce_mean(const Tensor& a, std::size_t axis) {
  constexpr const char* op = "reduce_mean";
  const auto s = split_axis(a.shape(), axis, op);
  require(s.len > 0, op, "empty reduction axis");
  auto node = make_node(op, without_axis(a.shape(), axis), {a.node()});
  const auto& av = a.node()->value;
  const double len = static_cast<double>(s.len);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i) node->value[o * s.inner + i] += av[(o * s.len + l) * s.inner + i];
  for (auto& v : node->value) v /= len;
  node->backward_fn = [s, len](Node& self) {
    auto& da = self.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.len; ++l)
        for (std::size_t i = 0; i < s.inner; ++i)
          da[(o * s.len + l) * s.inner + i] += self.grad[o * s.inner + i] / len;
  };
  return finish(std::move(node));
}

Tensor sum_all(const Tensor& a) {
  auto node = make_node("sum_all", {}, {a.node()});
  double s = 0.0;
  for (double v : a.node()->value) s += v;
  node->value[0] = s;
  node->backward_fn = [](Node& self) {
    auto& da = self.inputs[0]->ensure_grad();
    const double g = self.grad[0];
    for (auto& d : da) d += g;
  };
  return finish(std::move(node));
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  constexpr const char* op = "softmax";
  const auto s = split_axis(a.shape(), axis, op);
  require(s.len > 0, op, "empty softmax axis");
  auto node = make_node(op, a.shape(), {a.node()});
  const auto& av = a.node()->value;
  auto& out = node->value;
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = av[base];
      for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, av[base + l * s.inner]);
      double sum = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double e = std::exp(av[base + l * s.inner] - mx);
        out[base + l * s.inner] = e;
        sum += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= sum;
    }
  node->backward_fn = [s](Node& self) {
    auto& da = self.inputs[0]->ensure_grad();
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.len * s.inner + i;
        double dot = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) dot += g[base + l * s.inner] * y[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t p = base + l * s.inner;
          da[p] += y[p] * (g[p] - dot);
        }
      }
  };
  return finish(std::move(node));
}

Tensor batch_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training) {
  constexpr const char* op = "batch_norm";
  const std::size_t c = last_dim(a.shape());
  require(gamma.numel() == c && beta.numel() == c && state.running_mean.numel() == c &&
              state.running_var.numel() == c,
          op, "channel mismatch for input " + shape_to_string(a.shape()));
  const std::size_t rows = a.numel() / c;
  require(rows > 0, op, "empty input");
  auto node = make_node(op, a.shape(), {a.node(), gamma.node(), beta.node()});
  const auto& x = a.node()->value;
  const auto& gv = gamma.node()->value;
  const auto& bv = beta.node()->value;
  std::vector<double> mean(c, 0.0), inv_std(c, 0.0);
  if (training) {
    std::vector<double> var(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) mean[j] += x[r * c + j];
    for (auto& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = x[r * c + j] - mean[j];
        var[j] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(rows);
    for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
    auto rm = state.running_mean.mutable_data();
    auto rv = state.running_var.mutable_data();
    const double unbias = rows > 1 ? static_cast<double>(rows) / static_cast<double>(rows - 1) : 1.0;
    for (std::size_t j = 0; j < c; ++j) {
      // Running buffers are persisted as float32, so they live on that grid.
      rm[j] = static_cast<float>((1.0 - state.momentum) * rm[j] + state.momentum * mean[j]);
      rv[j] = static_cast<float>((1.0 - state.momentum) * rv[j] + state.momentum * var[j] * unbias);
    }
  } else {
    const auto rm = state.running_mean.data();
    const auto rv = state.running_var.data();
    for (std::size_t j = 0; j < c; ++j) {
      mean[j] = rm[j];
      inv_std[j] = 1.0 / std::sqrt(rv[j] + state.eps);
    }
  }
  std::vector<double> xhat(x.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t p = r * c + j;
      xhat[p] = (x[p] - mean[j]) * inv_std[j];
      node->value[p] = xhat[p] * gv[j] + bv[j];
    }
  node->backward_fn = [rows, c, training, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node& self) {
    auto& X = *self.inputs[0];
    auto& G = *self.inputs[1];
    auto& B = *self.inputs[2];
    const auto& g = self.grad;
    std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        sum_g[j] += g[r * c + j];
        sum_gx[j] += g[r * c + j] * xhat[r * c + j];
      }
    if (G.requires_grad) {
      auto& dg = G.ensure_grad();
      for (std::size_t j = 0; j < c; ++j) dg[j] += sum_gx[j];
    }
    if (B.requires_grad) {
      auto& db = B.ensure_grad();
      for (std::size_t j = 0; j < c; ++j) db[j] += sum_g[j];
    }
    if (X.requires_grad) {
      auto& dx = X.ensure_grad();
      const double n = static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) {
          const std::size_t p = r * c + j;
          const double gamma_j = G.value[j];
          if (training)
            dx[p] += gamma_j * inv_std[j] * (g[p] - sum_g[j] / n - xhat[p] * sum_gx[j] / n);
          else
            dx[p] += gamma_j * inv_std[j] * g[p];
        }
    }
  };
  return finish(std::move(node));
}

Tensor dropout(const Tensor& a, double p, std::mt19937_64* rng, bool training) {
  if (!training || p <= 0.0) return a;
  if (p >= 1.0) throw ShapeError("dropout: p must be < 1");
  if (rng == nullptr) throw ShapeError("dropout: training mode requires an rng");
  auto node = make_node("dropout", a.shape(), {a.node()});
  std::bernoulli_distribution keep(1.0 - p);
  const double factor = 1.0 / (1.0 - p);
  std::vector<double> mask(a.numel());
  for (auto& m : mask) m = keep(*rng) ? factor : 0.0;
  const auto& av = a.node()->value;
  for (std::size_t i = 0; i < av.size(); ++i) node->value[i] = av[i] * mask[i];
  node->backward_fn = [mask = std::move(mask)](Node& self) {
    auto& da = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < mask.size(); ++i) da[i] += self.grad[i] * mask[i];
  };
  return finish(std::move(node));
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> targets, double label_smoothing) {
  constexpr const char* op = "cross_entropy";
  require(logits.rank() == 2, op, "logits must be [b, k], got " + shape_to_string(logits.shape()));
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  require(b == targets.size(), op, "batch size " + std::to_string(b) + " vs " + std::to_string(targets.size()) +
                                       " targets");
  require(b > 0 && k > 0, op, "empty logits");
  require(label_smoothing >= 0.0 && label_smoothing < 1.0, op, "label_smoothing must be in [0, 1)");
  for (auto t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= k) {
      throw std::out_of_range("cross_entropy: target index " + std::to_string(t) + " outside [0, " +
                              std::to_string(k) + ")");
    }
  }
  auto node = make_node(op, {}, {logits.node()});
  const auto& z = logits.node()->value;
  std::vector<double> probs(z.size());
  double total = 0.0;
  const double off = label_smoothing / static_cast<double>(k);
  for (std::size_t r = 0; r < b; ++r) {
    const double* row = z.data() + r * k;
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    const double log_sum = std::log(sum) + mx;
    double loss = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double logp = row[j] - log_sum;
      probs[r * k + j] = std::exp(logp);
      const double target = (static_cast<std::int64_t>(j) == targets[r] ? 1.0 - label_smoothing : 0.0) + off;
      if (target != 0.0) loss -= target * logp;
    }
    total += loss;
  }
  node->value[0] = total / static_cast<double>(b);
  std::vector<std::int64_t> tgt(targets.begin(), targets.end());
  node->backward_fn = [b, k, off, label_smoothing, probs = std::move(probs), tgt = std::move(tgt)](Node& self) {
    auto& dz = self.inputs[0]->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(b);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t j = 0; j < k; ++j) {
        const double target =
            (static_cast<std::int64_t>(j) == tgt[r] ? 1.0 - label_smoothing : 0.0) + off;
        dz[r * k + j] += g * (probs[r * k + j] - target);
      }
  };
  return finish(std::move(node));
}

}  // namespace gtnet
