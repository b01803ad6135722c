#include "gtnet/metrics.hpp"

#include <stdexcept>
#include <string>

namespace gtnet::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : k_(num_classes), counts_(num_classes * num_classes, 0) {}

ConfusionMatrix ConfusionMatrix::from_counts(std::size_t k, std::vector<std::uint64_t> counts) {
  if (counts.size() != k * k) throw std::invalid_argument("confusion counts must be k x k");
  ConfusionMatrix cm(k);
  cm.counts_ = std::move(counts);
  return cm;
}

void ConfusionMatrix::accumulate(std::span<const std::int64_t> truth, std::span<const std::int64_t> predicted) {
  if (truth.size() != predicted.size()) {
    throw std::invalid_argument("accumulate: " + std::to_string(truth.size()) + " labels vs " +
                                std::to_string(predicted.size()) + " predictions");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= k_ || predicted[i] < 0 ||
        static_cast<std::size_t>(predicted[i]) >= k_) {
      throw std::out_of_range("accumulate: label pair (" + std::to_string(truth[i]) + ", " +
                              std::to_string(predicted[i]) + ") outside [0, " + std::to_string(k_) + ")");
    }
  }
  for (std::size_t i = 0; i < truth.size(); ++i)
    ++counts_[static_cast<std::size_t>(truth[i]) * k_ + static_cast<std::size_t>(predicted[i])];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw std::invalid_argument("merge: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ConfusionMatrix::support(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < k_; ++p) s += at(c, p);
  return s;
}

double overall_accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw std::invalid_argument("overall_accuracy: empty confusion matrix");
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) trace += cm.correct(c);
  return static_cast<double>(trace) / static_cast<double>(total);
}

double mean_class_accuracy(const ConfusionMatrix& cm) {
  double sum = 0.0;
  std::size_t represented = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const auto n = cm.support(c);
    if (n == 0) continue;
    sum += static_cast<double>(cm.correct(c)) / static_cast<double>(n);
    ++represented;
  }
  if (represented == 0) throw std::invalid_argument("mean_class_accuracy: no represented class");
  return sum / static_cast<double>(represented);
}

std::vector<double> class_iou(const ConfusionMatrix& cm) {
  const std::size_t k = cm.num_classes();
  std::vector<double> iou(k, 1.0);
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t predicted = 0;
    for (std::size_t t = 0; t < k; ++t) predicted += cm.at(t, c);
    const std::uint64_t uni = cm.support(c) + predicted - cm.correct(c);
    if (uni > 0) iou[c] = static_cast<double>(cm.correct(c)) / static_cast<double>(uni);
  }
  return iou;
}

double shape_iou(std::span<const std::int64_t> truth, std::span<const std::int64_t> predicted,
                 std::span<const std::int32_t> category_parts) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("shape_iou: length mismatch");
  if (truth.empty()) throw std::invalid_argument("shape_iou: empty shape");
  if (category_parts.empty()) throw std::invalid_argument("shape_iou: category has no parts");
  double sum = 0.0;
  for (auto part : category_parts) {
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == part;
      const bool p = predicted[i] == part;
      inter += (t && p) ? 1 : 0;
      uni += (t || p) ? 1 : 0;
    }
    sum += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return sum / static_cast<double>(category_parts.size());
}

PartIouAccumulator::PartIouAccumulator(std::vector<std::vector<std::int32_t>> category_parts)
    : category_parts_(std::move(category_parts)), shape_ious_(category_parts_.size()) {}

void PartIouAccumulator::add_shape(std::size_t category, std::span<const std::int64_t> truth,
                                   std::span<const std::int64_t> predicted) {
  if (category >= category_parts_.size()) {
    throw std::out_of_range("unknown category " + std::to_string(category));
  }
  shape_ious_[category].push_back(shape_iou(truth, predicted, category_parts_[category]));
}

void PartIouAccumulator::merge(const PartIouAccumulator& other) {
  if (other.category_parts_ != category_parts_) throw std::invalid_argument("merge: category tables differ");
  for (std::size_t c = 0; c < shape_ious_.size(); ++c)
    shape_ious_[c].insert(shape_ious_[c].end(), other.shape_ious_[c].begin(), other.shape_ious_[c].end());
}

std::size_t PartIouAccumulator::shape_count() const {
  std::size_t n = 0;
  for (const auto& s : shape_ious_) n += s.size();
  return n;
}

IouReport PartIouAccumulator::report() const {
  if (shape_count() == 0) throw std::invalid_argument("mean_iou: no shapes scored");
  IouReport r;
  double all = 0.0, cat_sum = 0.0;
  std::size_t represented = 0;
  for (const auto& shapes : shape_ious_) {
    double s = 0.0;
    for (double v : shapes) s += v;
    all += s;
    r.shapes_per_category.push_back(shapes.size());
    r.per_category.push_back(shapes.empty() ? 0.0 : s / static_cast<double>(shapes.size()));
    if (!shapes.empty()) {
      cat_sum += r.per_category.back();
      ++represented;
    }
  }
  r.instance_miou = all / static_cast<double>(shape_count());
  r.class_miou = cat_sum / static_cast<double>(represented);
  return r;
}

IouReport semantic_iou(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("mean_iou: empty confusion matrix");
  IouReport r;
  r.per_category = class_iou(cm);
  double sum = 0.0;
  std::size_t scored = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    r.shapes_per_category.push_back(cm.support(c));
    std::uint64_t predicted = 0;
    for (std::size_t t = 0; t < cm.num_classes(); ++t) predicted += cm.at(t, c);
    // Classes absent from both truth and prediction do not enter the mean.
    if (cm.support(c) + predicted == 0) continue;
    sum += r.per_category[c];
    ++scored;
  }
  r.instance_miou = sum / static_cast<double>(scored);
  r.class_miou = r.instance_miou;
  return r;
}

}  // namespace gtnet::metrics
