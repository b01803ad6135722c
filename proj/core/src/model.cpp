#include "gtnet/model.hpp"

#include <numeric>
#include <stdexcept>

namespace gtnet::model {

AlignmentNet::AlignmentNet(ParameterStore& store, const std::string& name, const std::vector<std::size_t>& widths,
                           std::mt19937_64& rng)
    : point1_(store, name + ".point1", 3, widths.at(0), rng),
      point2_(store, name + ".point2", widths.at(0), widths.at(1), rng),
      dense_(store, name + ".dense", widths.at(1), widths.at(2), rng),
      offset_(store, name + ".offset", widths.at(2), 9, rng, true, Init::zeros) {}

AlignmentNet::Result AlignmentNet::forward(const Tensor& coords) const {
  if (coords.rank() != 2 || coords.dim(1) != 3) {
    throw ShapeError("AlignmentNet: expected [N, 3] coordinates, got " + shape_to_string(coords.shape()));
  }
  const Tensor per_point = relu(point2_.forward(relu(point1_.forward(coords))));
  const Tensor pooled = reshape(reduce_max(per_point, 0), {1, per_point.dim(1)});
  const Tensor offset = offset_.forward(relu(dense_.forward(pooled)));
  const Tensor identity = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor transform = add(reshape(offset, {3, 3}), identity);
  return {matmul(coords, transform), transform};
}

Tensor aggregate_block_outputs(const std::vector<Tensor>& outputs) {
  if (outputs.empty()) throw ShapeError("aggregate_block_outputs: no block outputs");
  const Tensor joined = outputs.size() == 1 ? outputs.front() : concat_last(outputs);
  if (joined.rank() != 2) throw ShapeError("aggregate_block_outputs: block outputs must be [N, D]");
  return reshape(reduce_max(joined, 0), {1, joined.dim(1)});
}

GTNet::GTNet(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);

  if (config_.use_alignment) alignment_.emplace(store_, "align", config_.align_widths, rng);

  blocks_.reserve(config_.blocks.size());
  std::size_t concat_width = 0;
  for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
    attention::BlockOptions opts;
    opts.in_channels = config_.blocks[i].in;
    opts.out_channels = config_.blocks[i].out;
    opts.use_local = config_.use_local;
    opts.use_global = config_.use_global;
    opts.aggregation = config_.aggregation;
    opts.use_encoding = config_.use_feature_encoding;
    opts.encoding = config_.encoding;
    opts.residual = config_.use_residual;
    opts.scale_global = config_.scale_global;
    blocks_.emplace_back(store_, "blocks." + std::to_string(i), opts, rng);
    if (config_.zero_init_offset) {
      if (auto* g = blocks_.back().global()) {
        for (auto& w : g->alignment().linear().weight().mutable_data()) w = 0.0;
      }
    }
    concat_width += config_.blocks[i].out;
  }

  std::size_t shape_in = concat_width;
  if (config_.task == Task::part_segmentation && config_.use_label) {
    label_embed_ = Linear(store_, "label_embed", config_.num_classes, config_.label_width, rng);
    shape_in += config_.label_width;
  }
  shape_mlp_ = Linear(store_, "shape_mlp", shape_in, config_.shape_width, rng);

  if (config_.task == Task::classification) {
    std::size_t width = config_.shape_width;
    for (std::size_t i = 0; i < config_.cls_hidden.size(); ++i) {
      cls_layers_.emplace_back(store_, "cls." + std::to_string(i), width, config_.cls_hidden[i], rng);
      width = config_.cls_hidden[i];
    }
    cls_layers_.emplace_back(store_, "cls.out", width, config_.num_classes, rng);
  } else {
    std::size_t width = config_.shape_width + concat_width;
    for (std::size_t i = 0; i < config_.seg_hidden.size(); ++i) {
      seg_layers_.emplace_back(store_, "seg." + std::to_string(i), width, config_.seg_hidden[i], rng);
      width = config_.seg_hidden[i];
    }
    seg_out_ = Linear(store_, "seg.out", width, config_.num_parts, rng);
  }
}

namespace {

graph::NeighborGraph segmented_knn(std::span<const double> basis, std::size_t dims, std::size_t k, graph::Space space,
                                   std::span<const std::size_t> segments) {
  graph::NeighborGraph out;
  out.k = k;
  out.space = space;
  std::size_t start = 0;
  for (auto n : segments) {
    auto g = graph::knn_build(basis.subspan(start * dims, n * dims), n, dims, k, space);
    for (auto idx : g.indices) out.indices.push_back(idx + start);
    start += n;
  }
  out.num_points = start;
  return out;
}

std::vector<std::size_t> row_range(std::size_t start, std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), start);
  return rows;
}

}  // namespace

std::vector<Tensor> GTNet::backbone_forward(const Tensor& input, std::span<const double> coords, const Mode& mode,
                                            std::vector<graph::NeighborGraph>* graphs,
                                            std::span<const std::size_t> segments) {
  const std::size_t n = input.dim(0);
  if (coords.size() != n * 3) throw ShapeError("backbone_forward: coordinate count does not match input rows");
  const bool batched = segments.size() > 1;
  if (batched && std::accumulate(segments.begin(), segments.end(), std::size_t{0}) != n) {
    throw ShapeError("backbone_forward: segment rows do not sum to the input rows");
  }
  std::vector<Tensor> outputs;
  outputs.reserve(blocks_.size());
  Tensor features = input;
  for (std::size_t m = 0; m < blocks_.size(); ++m) {
    const bool on_coords = m == 0 || config_.graph_basis == GraphBasis::always_coordinates;
    // Indices are data: the graph is rebuilt from values, never differentiated.
    graph::NeighborGraph g;
    if (batched) {
      g = on_coords ? segmented_knn(coords, 3, config_.k, graph::Space::coordinate, segments)
                    : segmented_knn(features.data(), features.dim(1), config_.k, graph::Space::feature, segments);
    } else {
      g = on_coords ? graph::knn_build(coords, n, 3, config_.k, graph::Space::coordinate)
                    : graph::knn_build(features.data(), n, features.dim(1), config_.k, graph::Space::feature);
    }
    features = blocks_[m].forward(features, g, mode, segments);
    outputs.push_back(features);
    if (graphs != nullptr) graphs->push_back(std::move(g));
  }
  return outputs;
}

std::optional<std::int64_t> GTNet::checked_category(std::optional<std::int64_t> category) const {
  if (category) {
    if (config_.task != Task::part_segmentation) {
      throw std::invalid_argument("category label is only used by the part segmentation task");
    }
    if (!config_.use_label) return std::nullopt;
    if (*category < 0 || static_cast<std::size_t>(*category) >= config_.num_classes) {
      throw std::out_of_range("category " + std::to_string(*category) + " outside [0, " +
                              std::to_string(config_.num_classes) + ")");
    }
  } else if (config_.task == Task::part_segmentation && config_.use_label) {
    throw std::invalid_argument("part segmentation with use_label requires a category");
  }
  return category;
}

Tensor GTNet::shape_mlp_forward(Tensor pooled, std::span<const std::optional<std::int64_t>> categories) {
  std::vector<double> onehot;
  for (const auto& c : categories) {
    const auto category = checked_category(c);
    if (!category) continue;
    const std::size_t row = onehot.size();
    onehot.resize(row + config_.num_classes, 0.0);
    onehot[row + static_cast<std::size_t>(*category)] = 1.0;
  }
  if (!onehot.empty()) {
    const Tensor label = Tensor::from({categories.size(), config_.num_classes}, std::move(onehot));
    pooled = concat_last({pooled, relu(label_embed_.forward(label))});
  }
  return relu(shape_mlp_.forward(pooled));
}

Tensor GTNet::gather_shape_features(const std::vector<Tensor>& block_outputs, std::optional<std::int64_t> category,
                                    const Mode&) {
  const std::optional<std::int64_t> categories[] = {category};
  return shape_mlp_forward(aggregate_block_outputs(block_outputs), categories);
}

Tensor GTNet::head_forward(const std::vector<Tensor>& block_outputs, const Tensor& shape_feature, const Mode& mode,
                           std::span<const std::size_t> segments) {
  if (config_.task == Task::classification) {
    Tensor x = shape_feature;
    for (std::size_t i = 0; i + 1 < cls_layers_.size(); ++i) {
      x = dropout(relu(cls_layers_[i].forward(x)), config_.dropout, mode.rng, mode.training);
    }
    return cls_layers_.back().forward(x);
  }
  const std::size_t n = block_outputs.front().dim(0);
  Tensor broadcast;
  if (segments.size() > 1) {
    std::vector<std::size_t> owner;
    owner.reserve(n);
    for (std::size_t b = 0; b < segments.size(); ++b) owner.insert(owner.end(), segments[b], b);
    broadcast = gather_rows(shape_feature, owner, {n});
  } else {
    broadcast = reshape(broadcast_axis(shape_feature, 0, n), {n, shape_feature.dim(1)});
  }
  std::vector<Tensor> parts{broadcast};
  parts.insert(parts.end(), block_outputs.begin(), block_outputs.end());
  Tensor x = concat_last(parts);
  for (auto& layer : seg_layers_) x = layer.forward(x, mode);
  return seg_out_.forward(x);
}

namespace {

void check_input(const Tensor& points, const ModelConfig& config) {
  if (points.rank() != 2 || points.dim(1) != config.input_channels()) {
    throw ShapeError("GTNet: expected [N, " + std::to_string(config.input_channels()) + "] input, got " +
                     shape_to_string(points.shape()));
  }
  if (config.k > points.dim(0)) {
    throw ShapeError("GTNet: K = " + std::to_string(config.k) + " exceeds N = " + std::to_string(points.dim(0)));
  }
}

void append_coords(const Tensor& points, std::vector<double>& coords) {
  const auto pv = points.data();
  const std::size_t c0 = points.dim(1);
  for (std::size_t i = 0; i < points.dim(0); ++i)
    for (std::size_t j = 0; j < 3; ++j) coords.push_back(pv[i * c0 + j]);
}

}  // namespace

ForwardResult GTNet::forward(const Tensor& points, std::optional<std::int64_t> category, const Mode& mode) {
  check_input(points, config_);
  std::vector<double> coords;
  append_coords(points, coords);
  const std::size_t c0 = points.dim(1);

  ForwardResult out;
  Tensor input = points;
  if (alignment_) {
    const Tensor xyz = c0 == 3 ? points : slice_last(points, 0, 3);
    auto aligned = alignment_->forward(xyz);
    out.transform = aligned.transform;
    input = c0 == 3 ? aligned.aligned : concat_last({aligned.aligned, slice_last(points, 3, c0)});
  }
  out.block_outputs = backbone_forward(input, coords, mode, &out.graphs);
  out.shape_feature = gather_shape_features(
      out.block_outputs, config_.task == Task::part_segmentation && config_.use_label ? category : std::nullopt, mode);
  out.logits = head_forward(out.block_outputs, out.shape_feature, mode);
  return out;
}

BatchForwardResult GTNet::forward_batch(std::span<const Tensor> points,
                                        std::span<const std::optional<std::int64_t>> categories, const Mode& mode) {
  if (points.empty() || points.size() != categories.size()) {
    throw ShapeError("GTNet::forward_batch: need one category slot per cloud and at least one cloud");
  }
  BatchForwardResult out;
  if (points.size() == 1) {
    out.logits = forward(points[0], categories[0], mode).logits;
    out.rows = {points[0].dim(0)};
    return out;
  }
  const bool labelled = config_.task == Task::part_segmentation && config_.use_label;
  std::vector<double> coords;
  std::vector<Tensor> inputs;
  std::vector<std::optional<std::int64_t>> used(categories.size());
  for (std::size_t b = 0; b < points.size(); ++b) {
    const Tensor& p = points[b];
    check_input(p, config_);
    append_coords(p, coords);
    out.rows.push_back(p.dim(0));
    if (labelled) used[b] = categories[b];
    const std::size_t c0 = p.dim(1);
    if (!alignment_) {
      inputs.push_back(p);
      continue;
    }
    // The alignment net pools over one cloud, so it runs per cloud.
    const Tensor xyz = c0 == 3 ? p : slice_last(p, 0, 3);
    const Tensor aligned = alignment_->forward(xyz).aligned;
    inputs.push_back(c0 == 3 ? aligned : concat_last({aligned, slice_last(p, 3, c0)}));
  }
  const auto outputs = backbone_forward(concat_rows(inputs), coords, mode, nullptr, out.rows);

  const Tensor joined = outputs.size() == 1 ? outputs.front() : concat_last(outputs);
  std::vector<Tensor> pooled;
  std::size_t start = 0;
  for (auto n : out.rows) {
    const auto rows = row_range(start, n);
    pooled.push_back(reshape(reduce_max(gather_rows(joined, rows, {n}), 0), {1, joined.dim(1)}));
    start += n;
  }
  const Tensor shape_feature = shape_mlp_forward(concat_rows(pooled), used);
  out.logits = head_forward(outputs, shape_feature, mode, out.rows);
  return out;
}

BatchForwardResult GTNet::forward_batch(std::span<const PointCloud* const> clouds, const Mode& mode) {
  std::vector<Tensor> points;
  std::vector<std::optional<std::int64_t>> categories;
  for (const auto* cloud : clouds) {
    if (config_.task == Task::classification && cloud->category) {
      throw std::invalid_argument("category label is only used by the part segmentation task");
    }
    points.push_back(cloud_to_tensor(*cloud));
    categories.push_back(cloud->category ? std::optional<std::int64_t>(*cloud->category) : std::nullopt);
  }
  return forward_batch(points, categories, mode);
}

ForwardResult GTNet::forward(const PointCloud& cloud, const Mode& mode) {
  if (config_.task == Task::classification && cloud.category) {
    throw std::invalid_argument("category label is only used by the part segmentation task");
  }
  std::optional<std::int64_t> category;
  if (cloud.category) category = *cloud.category;
  return forward(cloud_to_tensor(cloud), category, mode);
}

Tensor GTNet::loss(const Tensor& logits, std::span<const std::int64_t> targets) const {
  return cross_entropy(logits, targets, config_.label_smoothing);
}

std::vector<std::int64_t> GTNet::targets_for(const PointCloud& cloud) const {
  if (config_.task == Task::classification) {
    if (!cloud.shape_label) throw std::invalid_argument("classification requires a shape label");
    return {*cloud.shape_label};
  }
  if (!cloud.has_point_labels()) throw std::invalid_argument("segmentation requires per-point labels");
  return {cloud.point_labels.begin(), cloud.point_labels.end()};
}

Tensor cloud_to_tensor(const PointCloud& cloud) {
  return Tensor::from({cloud.size(), cloud.channels()}, cloud.features());
}

}  // namespace gtnet::model
