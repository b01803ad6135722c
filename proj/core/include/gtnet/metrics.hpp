#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gtnet::metrics {

/// counts[true][predicted]. All integer until a score is requested.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0);

  void accumulate(std::span<const std::int64_t> truth, std::span<const std::int64_t> predicted);
  /// Elementwise sum; merging shards is commutative and associative.
  void merge(const ConfusionMatrix& other);

  std::size_t num_classes() const { return k_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
  std::uint64_t total() const;
  std::uint64_t correct(std::size_t c) const { return at(c, c); }  // R_i
  std::uint64_t support(std::size_t c) const;                      // N_i

  static ConfusionMatrix from_counts(std::size_t k, std::vector<std::uint64_t> counts);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_ = 0;
  std::vector<std::uint64_t> counts_;
};

/// sum R_i / sum N_i.
double overall_accuracy(const ConfusionMatrix& cm);
/// Mean of R_i / N_i over classes with N_i > 0.
double mean_class_accuracy(const ConfusionMatrix& cm);
/// Per-class TP / (TP + FP + FN); classes absent from both truth and
/// prediction score 1.
std::vector<double> class_iou(const ConfusionMatrix& cm);

struct IouReport {
  std::vector<double> per_category;  // mean shape IoU per category (part) or per-class IoU (semantic)
  std::vector<std::size_t> shapes_per_category;
  double instance_miou = 0.0;  // mean over shapes (part) or classes (semantic)
  double class_miou = 0.0;     // mean over represented categories
};

/// Mean over the category's parts of |pred == p and true == p| / |pred == p or
/// true == p|, with a part absent from both counting as 1.
double shape_iou(std::span<const std::int64_t> truth, std::span<const std::int64_t> predicted,
                 std::span<const std::int32_t> category_parts);

/// Streams part-segmentation shapes and reports per-category and instance mIoU.
class PartIouAccumulator {
 public:
  explicit PartIouAccumulator(std::vector<std::vector<std::int32_t>> category_parts);

  void add_shape(std::size_t category, std::span<const std::int64_t> truth, std::span<const std::int64_t> predicted);
  void merge(const PartIouAccumulator& other);
  std::size_t shape_count() const;
  IouReport report() const;

 private:
  std::vector<std::vector<std::int32_t>> category_parts_;
  std::vector<std::vector<double>> shape_ious_;
};

/// Semantic segmentation: per-class IoU from the dataset-level confusion matrix.
IouReport semantic_iou(const ConfusionMatrix& cm);

}  // namespace gtnet::metrics
