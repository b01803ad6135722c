#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "gtnet/attention.hpp"
#include "gtnet/graph.hpp"
#include "gtnet/layers.hpp"
#include "gtnet/model_config.hpp"
#include "gtnet/point_cloud.hpp"

namespace gtnet::model {

/// Predicts a 3x3 transform T = I + offset from the coordinates: shared
/// per-point MLP, max-pool over points, dense layers. The final layer starts
/// at zero so a fresh network is the identity.
class AlignmentNet {
 public:
  AlignmentNet(ParameterStore& store, const std::string& name, const std::vector<std::size_t>& widths,
               std::mt19937_64& rng);

  struct Result {
    Tensor aligned;    // N x 3
    Tensor transform;  // 3 x 3
  };
  Result forward(const Tensor& coords) const;

  Linear& offset() { return offset_; }

 private:
  Linear point1_, point2_, dense_, offset_;
};

/// max-pool over points of concat(block outputs): [N, sum D] -> [1, sum D].
Tensor aggregate_block_outputs(const std::vector<Tensor>& outputs);

struct ForwardResult {
  Tensor logits;  // [1, k] for classification, [N, d_out] for segmentation
  std::vector<Tensor> block_outputs;
  std::vector<graph::NeighborGraph> graphs;
  Tensor transform;  // undefined without the alignment network
  Tensor shape_feature;
};

/// Several clouds stacked row-wise: logits are [B, k] for classification and
/// [sum N_b, d_out] for segmentation, `rows[b]` = N_b.
struct BatchForwardResult {
  Tensor logits;
  std::vector<std::size_t> rows;
};

/// Stacked graph-transformer network with per-block graph rebuild and the
/// classification / segmentation heads. Parameters live in `parameters()`.
class GTNet {
 public:
  explicit GTNet(ModelConfig config);
  GTNet(const GTNet&) = delete;
  GTNet& operator=(const GTNet&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  /// points: [N, C0] with xyz in the first three columns. `category` is the
  /// object category for part segmentation (used only when use_label).
  ForwardResult forward(const Tensor& points, std::optional<std::int64_t> category, const Mode& mode);
  ForwardResult forward(const PointCloud& cloud, const Mode& mode);
  /// Clouds stay independent graphs (K-NN and global attention per cloud) but
  /// batch-norm statistics in training mode span the whole batch. One cloud
  /// gives exactly `forward`.
  BatchForwardResult forward_batch(std::span<const Tensor> points, std::span<const std::optional<std::int64_t>> categories,
                                   const Mode& mode);
  BatchForwardResult forward_batch(std::span<const PointCloud* const> clouds, const Mode& mode);

  /// Block outputs; block 1's graph is built on coordinates, later ones on the
  /// previous block's output (or always on coordinates, per config).
  /// `segments` holds row counts of stacked clouds (empty: one cloud); graphs
  /// are then block-diagonal.
  std::vector<Tensor> backbone_forward(const Tensor& input, std::span<const double> coords, const Mode& mode,
                                       std::vector<graph::NeighborGraph>* graphs = nullptr,
                                       std::span<const std::size_t> segments = {});
  Tensor gather_shape_features(const std::vector<Tensor>& block_outputs, std::optional<std::int64_t> category,
                               const Mode& mode);
  /// shape_feature has one row per cloud in `segments` (one row when empty).
  Tensor head_forward(const std::vector<Tensor>& block_outputs, const Tensor& shape_feature, const Mode& mode,
                      std::span<const std::size_t> segments = {});

  /// Mean cross-entropy against per-row targets.
  Tensor loss(const Tensor& logits, std::span<const std::int64_t> targets) const;
  /// Targets for a cloud under this task: shape label or per-point labels.
  std::vector<std::int64_t> targets_for(const PointCloud& cloud) const;

  AlignmentNet* alignment() { return alignment_ ? &*alignment_ : nullptr; }
  std::vector<attention::GraphTransformerBlock>& blocks() { return blocks_; }

 private:
  Tensor shape_mlp_forward(Tensor pooled, std::span<const std::optional<std::int64_t>> categories);
  std::optional<std::int64_t> checked_category(std::optional<std::int64_t> category) const;

  ModelConfig config_;
  ParameterStore store_;
  std::optional<AlignmentNet> alignment_;
  std::vector<attention::GraphTransformerBlock> blocks_;
  Linear label_embed_;
  Linear shape_mlp_;
  std::vector<Linear> cls_layers_;
  std::vector<Lbr> seg_layers_;
  Linear seg_out_;
};

Tensor cloud_to_tensor(const PointCloud& cloud);

}  // namespace gtnet::model
