#include "gtnet/attention.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gtnet::attention {

std::string_view aggregation_name(Aggregation a) {
  switch (a) {
    case Aggregation::max:
      return "max";
    case Aggregation::avg:
      return "avg";
    case Aggregation::add:
      return "add";
    case Aggregation::concat:
      return "concat";
  }
  return "max";
}

Aggregation parse_aggregation(std::string_view name) {
  if (name == "max") return Aggregation::max;
  if (name == "avg") return Aggregation::avg;
  if (name == "add") return Aggregation::add;
  if (name == "concat") return Aggregation::concat;
  throw std::invalid_argument("unknown aggregation '" + std::string(name) + "' (max|avg|add|concat)");
}

LocalBlock::LocalBlock(ParameterStore& store, const std::string& name, const LocalBlockOptions& options,
                       std::mt19937_64& rng)
    : options_(options) {
  const std::size_t c = options.in_channels;
  const std::size_t d = options.out_channels;
  if (c == 0 || d == 0) throw std::invalid_argument("LocalBlock: channel counts must be positive");
  query_ = Linear(store, name + ".query", c, d, rng, false);
  key_ = Linear(store, name + ".key", c, d, rng, false);
  value_ = Linear(store, name + ".value", c, d, rng, false);
  if (options.use_encoding) {
    const std::size_t edge_in = options.encoding == graph::EdgeEncoding::relative ? 2 * c : c;
    edge_ = Linear(store, name + ".edge", edge_in, d, rng);
    mu_ = Linear(store, name + ".mu", d, d, rng);
    tau_ = Linear(store, name + ".tau", d, d, rng);
  }
  if (options.aggregation == Aggregation::concat) fuse_ = Linear(store, name + ".fuse", 2 * d, d, rng);
}

Tensor LocalBlock::forward(const Tensor& features, const graph::NeighborGraph& graph, LocalTrace* trace) const {
  if (features.rank() != 2 || features.dim(1) != options_.in_channels) {
    throw ShapeError("LocalBlock: expected [N, " + std::to_string(options_.in_channels) + "] features, got " +
                     shape_to_string(features.shape()));
  }
  if (graph.k == 0) throw ShapeError("LocalBlock: K must be >= 1");
  if (graph.num_points != features.dim(0)) {
    throw ShapeError("LocalBlock: graph over " + std::to_string(graph.num_points) + " points, features have " +
                     std::to_string(features.dim(0)));
  }
  const std::size_t k = graph.k;
  const double d = static_cast<double>(options_.out_channels);

  // Gathering commutes with the per-row linear maps, so keys and values are
  // projected once per point and then gathered.
  const Tensor query = broadcast_axis(query_.forward(features), 1, k);
  const Tensor key = graph::gather_neighbors(key_.forward(features), graph);
  const Tensor value = graph::gather_neighbors(value_.forward(features), graph);

  Tensor logits = sub(query, key);
  Tensor values = value;
  Tensor encoding;
  if (options_.use_encoding) {
    const Tensor neighbors = graph::gather_neighbors(features, graph);
    const graph::EdgeFeatures edges = options_.encoding == graph::EdgeEncoding::relative
                                          ? graph::edge_encode_relative(features, neighbors, edge_)
                                          : graph::edge_encode_absolute(neighbors, edge_);
    encoding = tau_.forward(relu(mu_.forward(edges.values)));
    logits = add(logits, encoding);
    values = add(values, encoding);
  }
  const Tensor weights = softmax(div_scalar(logits, std::sqrt(d)), 1);
  const Tensor weighted = mul(weights, values);

  if (trace != nullptr) {
    trace->encoding = encoding;
    trace->weights = weights;
    trace->values = values;
  }

  switch (options_.aggregation) {
    case Aggregation::max:
      return reduce_max(weighted, 1);
    case Aggregation::avg:
      return reduce_mean(weighted, 1);
    case Aggregation::add:
      return add(reduce_max(weighted, 1), reduce_mean(weighted, 1));
    case Aggregation::concat:
      return fuse_.forward(concat_last({reduce_max(weighted, 1), reduce_mean(weighted, 1)}));
  }
  throw std::logic_error("unreachable aggregation");
}

GlobalBlock::GlobalBlock(ParameterStore& store, const std::string& name, const GlobalBlockOptions& options,
                         std::mt19937_64& rng)
    : options_(options) {
  const std::size_t d = options.channels;
  if (d == 0 || d % 4 != 0) {
    throw std::invalid_argument("GlobalBlock: channel count " + std::to_string(d) + " must be a positive multiple of 4");
  }
  query_ = Linear(store, name + ".query", d, d / 4, rng, false);
  key_ = Linear(store, name + ".key", d, d / 4, rng, false);
  value_ = Linear(store, name + ".value", d, d, rng, false);
  align_ = Lbr(store, name + ".align", d, d, rng);
}

Tensor GlobalBlock::forward(const Tensor& features, const Mode& mode, GlobalTrace* trace,
                            std::span<const std::size_t> segments) {
  if (features.rank() != 2 || features.dim(1) != options_.channels || features.dim(0) == 0) {
    throw ShapeError("GlobalBlock: expected [N, " + std::to_string(options_.channels) + "] features, got " +
                     shape_to_string(features.shape()));
  }
  const Tensor q = query_.forward(features);
  const Tensor k = key_.forward(features);
  const Tensor v = value_.forward(features);
  const auto attend = [&](const Tensor& qs, const Tensor& ks, const Tensor& vs) {
    Tensor logits = matmul_nt(qs, ks);
    if (options_.scale_logits) logits = div_scalar(logits, std::sqrt(static_cast<double>(reduced_channels())));
    const Tensor attention = softmax(logits, 1);
    const Tensor global = matmul(attention, vs);
    if (trace != nullptr) {
      trace->attention = attention;
      trace->global = global;
    }
    return global;
  };
  Tensor global;
  if (segments.size() <= 1) {
    if (!segments.empty() && segments[0] != features.dim(0)) throw ShapeError("GlobalBlock: segment rows mismatch");
    global = attend(q, k, v);
  } else {
    trace = nullptr;
    std::vector<Tensor> parts;
    std::vector<std::size_t> rows;
    std::size_t start = 0;
    for (auto n : segments) {
      if (n == 0 || start + n > features.dim(0)) throw ShapeError("GlobalBlock: invalid segment sizes");
      rows.resize(n);
      std::iota(rows.begin(), rows.end(), start);
      parts.push_back(attend(gather_rows(q, rows, {n}), gather_rows(k, rows, {n}), gather_rows(v, rows, {n})));
      start += n;
    }
    if (start != features.dim(0)) throw ShapeError("GlobalBlock: segment rows mismatch");
    global = concat_rows(parts);
  }
  const Tensor offset = align_.forward(sub(features, global), mode);
  return options_.residual ? add(features, offset) : offset;
}

GraphTransformerBlock::GraphTransformerBlock(ParameterStore& store, const std::string& name,
                                             const BlockOptions& options, std::mt19937_64& rng)
    : options_(options) {
  if (!options.use_local && !options.use_global) {
    throw std::invalid_argument("GraphTransformerBlock: at least one of the local/global paths must be enabled");
  }
  if (options.use_local) {
    local_.emplace(store, name + ".local",
                   LocalBlockOptions{options.in_channels, options.out_channels, options.aggregation,
                                     options.use_encoding, options.encoding},
                   rng);
  }
  if (!options.use_local || options.in_channels != options.out_channels) {
    projection_.emplace(store, name + ".project", options.in_channels, options.out_channels, rng);
  }
  if (options.use_global) {
    global_.emplace(store, name + ".global",
                    GlobalBlockOptions{options.out_channels, options.scale_global, options.residual}, rng);
  }
}

Tensor GraphTransformerBlock::forward(const Tensor& features, const graph::NeighborGraph& graph, const Mode& mode,
                                     std::span<const std::size_t> segments) {
  Tensor local_residual = projection_ ? projection_->forward(features) : features;
  if (local_) local_residual = add(local_residual, local_->forward(features, graph));
  return global_ ? global_->forward(local_residual, mode, nullptr, segments) : local_residual;
}

}  // namespace gtnet::attention
