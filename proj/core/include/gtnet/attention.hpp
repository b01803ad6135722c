#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "gtnet/graph.hpp"
#include "gtnet/layers.hpp"

namespace gtnet::attention {

/// Neighbour-axis aggregation applied to the attention-weighted values.
enum class Aggregation { max, avg, add, concat };

std::string_view aggregation_name(Aggregation a);
Aggregation parse_aggregation(std::string_view name);

struct LocalBlockOptions {
  std::size_t in_channels = 3;
  std::size_t out_channels = 64;
  Aggregation aggregation = Aggregation::max;
  bool use_encoding = true;
  graph::EdgeEncoding encoding = graph::EdgeEncoding::relative;
};

/// Intermediate tensors of one local forward, exposed for inspection.
struct LocalTrace {
  Tensor encoding;  // F' = tau(relu(mu(E))), N x K x D (undefined without encoding)
  Tensor weights;   // W' = softmax(W / sqrt(D)) over the neighbour axis
  Tensor values;    // Value_l + F'
};

/// Intra-neighbourhood cross-attention: the query comes from the centroid,
/// keys and values from its K neighbours, compatibility is the subtraction
/// query - key + F', normalised per channel over the neighbour axis.
class LocalBlock {
 public:
  LocalBlock(ParameterStore& store, const std::string& name, const LocalBlockOptions& options, std::mt19937_64& rng);

  Tensor forward(const Tensor& features, const graph::NeighborGraph& graph, LocalTrace* trace = nullptr) const;

  const LocalBlockOptions& options() const { return options_; }
  Linear& query() { return query_; }
  Linear& key() { return key_; }
  Linear& value() { return value_; }
  Linear& edge() { return edge_; }
  Linear& mu() { return mu_; }
  Linear& tau() { return tau_; }
  Linear& fuse() { return fuse_; }

 private:
  LocalBlockOptions options_;
  Linear query_, key_, value_;
  Linear edge_, mu_, tau_;
  Linear fuse_;  // only for Aggregation::concat
};

struct GlobalBlockOptions {
  std::size_t channels = 64;
  bool scale_logits = true;
  bool residual = true;
};

struct GlobalTrace {
  Tensor attention;  // N x N, rows sum to one
  Tensor global;     // F_g = A x V_g
};

/// Self-attention over all points with the offset residual
///   out = F + xi(F - A V),  xi = linear + batch-norm + ReLU.
/// With `residual` disabled the output is xi(F - A V) alone.
///
/// `segments` lists the row counts of clouds stacked in `features`. Attention
/// stays inside each cloud; the batch-norm in xi sees every row. Empty means
/// one cloud. The trace is only filled for a single cloud.
class GlobalBlock {
 public:
  GlobalBlock(ParameterStore& store, const std::string& name, const GlobalBlockOptions& options, std::mt19937_64& rng);

  Tensor forward(const Tensor& features, const Mode& mode, GlobalTrace* trace = nullptr,
                 std::span<const std::size_t> segments = {});

  const GlobalBlockOptions& options() const { return options_; }
  std::size_t reduced_channels() const { return options_.channels / 4; }
  Linear& query() { return query_; }
  Linear& key() { return key_; }
  Linear& value() { return value_; }
  Lbr& alignment() { return align_; }

 private:
  GlobalBlockOptions options_;
  Linear query_, key_, value_;
  Lbr align_;
};

struct BlockOptions {
  std::size_t in_channels = 3;
  std::size_t out_channels = 64;
  bool use_local = true;
  bool use_global = true;
  Aggregation aggregation = Aggregation::max;
  bool use_encoding = true;
  graph::EdgeEncoding encoding = graph::EdgeEncoding::relative;
  bool residual = true;
  bool scale_global = true;
};

/// Local transformer, local residual F'_l = project(F_in) + F_l, then the
/// global transformer. `project` is the identity when C == D and the local
/// path is active, otherwise a learned C -> D linear map.
class GraphTransformerBlock {
 public:
  GraphTransformerBlock(ParameterStore& store, const std::string& name, const BlockOptions& options,
                        std::mt19937_64& rng);

  /// `graph` may be block-diagonal over stacked clouds; see GlobalBlock for `segments`.
  Tensor forward(const Tensor& features, const graph::NeighborGraph& graph, const Mode& mode,
                 std::span<const std::size_t> segments = {});

  const BlockOptions& options() const { return options_; }
  LocalBlock* local() { return local_ ? &*local_ : nullptr; }
  GlobalBlock* global() { return global_ ? &*global_ : nullptr; }
  Linear* projection() { return projection_ ? &*projection_ : nullptr; }

 private:
  BlockOptions options_;
  std::optional<LocalBlock> local_;
  std::optional<GlobalBlock> global_;
  std::optional<Linear> projection_;
};

}  // namespace gtnet::attention
