#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gtnet/attention.hpp"
#include "gtnet/optim.hpp"

namespace gtnet::model {

enum class Task { classification, part_segmentation, semantic_segmentation };
enum class GraphBasis { coordinates_first_then_features, always_coordinates };

std::string_view task_name(Task t);
Task parse_task(std::string_view s);
bool is_segmentation(Task t);

struct BlockSpec {
  std::size_t in = 3;
  std::size_t out = 64;
  bool operator==(const BlockSpec&) const = default;
};

std::string blocks_to_string(const std::vector<BlockSpec>& blocks);
/// Parses "(3,64),(64,64)" or "3:64,64:64".
std::vector<BlockSpec> parse_blocks(std::string_view s);

struct ModelConfig {
  Task task = Task::classification;
  std::vector<BlockSpec> blocks{{3, 64}, {64, 64}, {64, 128}, {128, 256}};
  std::size_t k = 20;
  std::size_t num_classes = 40;  // shape classes, or object categories for part segmentation
  std::size_t num_parts = 50;    // per-point outputs for segmentation
  bool use_alignment = false;
  bool use_feature_encoding = true;
  bool use_global = true;
  bool use_local = true;
  bool use_residual = true;
  bool use_label = true;  // part segmentation only
  bool scale_global = true;
  attention::Aggregation aggregation = attention::Aggregation::max;
  graph::EdgeEncoding encoding = graph::EdgeEncoding::relative;
  GraphBasis graph_basis = GraphBasis::coordinates_first_then_features;
  std::uint64_t seed = 0;

  std::vector<std::size_t> align_widths{64, 128, 64};
  std::size_t shape_width = 512;
  std::size_t label_width = 64;
  std::vector<std::size_t> cls_hidden{512, 256};
  std::vector<std::size_t> seg_hidden{256, 128};
  double dropout = 0.5;
  bool zero_init_offset = false;
  double label_smoothing = 0.0;

  OptimizerConfig optimizer;
  int epochs = 250;
  std::size_t batch_size = 8;

  std::size_t input_channels() const { return blocks.empty() ? 0 : blocks.front().in; }
  std::size_t output_count() const { return task == Task::classification ? num_classes : num_parts; }
  /// Throws std::invalid_argument on the first violated invariant.
  void validate() const;
};

/// Ordered key/value serialization shared by checkpoints and config files.
std::vector<std::pair<std::string, std::string>> to_key_values(const ModelConfig& config);
/// Applies one key; returns false if the key is not a model key.
bool apply_key_value(ModelConfig& config, std::string_view key, std::string_view value);

/// First architecture difference between two configs, if any. Training-only
/// settings (optimizer, epochs, batch size, seed) are ignored.
std::optional<std::string> architecture_mismatch(const ModelConfig& stored, const ModelConfig& requested);

}  // namespace gtnet::model
