#include <algorithm>
#include <exception>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "gtnet/cli/commands.hpp"

namespace gtnet::cli {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void prepare_split(data::Dataset& ds, const RunConfig& config) {
  const auto& m = config.model;
  const bool seg = model::is_segmentation(m.task);
  const auto salt = splitmix(config.model.seed ^ (ds.split == data::Split::train ? 0x7472ULL : 0x7465ULL));
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    auto& cloud = ds.items[i];
    const std::string& name = ds.item_names[i];
    if (config.num_points > 0 && cloud.size() != config.num_points)
      cloud = data::sample_points(cloud, config.num_points, splitmix(salt + i));
    if (config.normalize) cloud = data::normalize_unit_sphere(cloud);
    try {
      cloud.validate();
    } catch (const std::invalid_argument& e) {
      throw data::DataError(name + ": " + e.what());
    }
    if (cloud.channels() != m.input_channels()) {
      throw data::DataError(name + ": cloud has " + std::to_string(cloud.channels()) +
                            " channels, first block expects " + std::to_string(m.input_channels()));
    }
    if (cloud.size() < m.k) {
      throw data::DataError(name + ": " + std::to_string(cloud.size()) + " points is fewer than k = " +
                            std::to_string(m.k));
    }
    if (m.task == model::Task::classification) {
      cloud.category.reset();
      if (!cloud.shape_label) throw data::DataError(name + ": shape label missing");
      if (static_cast<std::size_t>(*cloud.shape_label) >= m.num_classes)
        throw data::DataError(name + ": class " + std::to_string(*cloud.shape_label) + " >= num_classes " +
                              std::to_string(m.num_classes));
    }
    if (seg) {
      if (!cloud.has_point_labels()) throw data::DataError(name + ": segmentation needs per-point labels");
      for (auto l : cloud.point_labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= m.num_parts)
          throw data::DataError(name + ": point label " + std::to_string(l) + " outside [0, " +
                                std::to_string(m.num_parts) + ")");
      }
    }
    if (m.task == model::Task::part_segmentation) {
      if (!cloud.category) throw data::DataError(name + ": part segmentation needs an object category");
      if (static_cast<std::size_t>(*cloud.category) >= m.num_classes)
        throw data::DataError(name + ": category " + std::to_string(*cloud.category) + " >= num_classes " +
                              std::to_string(m.num_classes));
    }
    if (m.task == model::Task::semantic_segmentation) cloud.category.reset();
  }
}

std::string pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v;
  return s.str();
}

std::string exact(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::vector<std::int64_t> argmax_rows(const Tensor& logits, const std::vector<std::int32_t>* allowed) {
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  const auto v = logits.data();
  std::vector<std::int64_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::int64_t best = -1;
    for (std::size_t c = 0; c < cols; ++c) {
      if (allowed && !allowed->empty() &&
          !std::binary_search(allowed->begin(), allowed->end(), static_cast<std::int32_t>(c)))
        continue;
      if (best < 0 || v[r * cols + c] > v[r * cols + static_cast<std::size_t>(best)])
        best = static_cast<std::int64_t>(c);
    }
    out[r] = best;
  }
  return out;
}

}  // namespace

Datasets prepare_datasets(const RunConfig& config) {
  Datasets d;
  const auto& m = config.model;
  if (config.dataset == "synth") {
    data::SynthSpec spec = config.synth;
    spec.split = data::Split::train;
    d.train = data::synth_generate(spec);
    spec.split = data::Split::test;
    spec.clouds_per_class = config.synth_test_clouds_per_class;
    d.test = spec.clouds_per_class ? data::synth_generate(spec) : data::Dataset{};
    d.test.split = data::Split::test;
    if (d.test.class_names.empty()) d.test.class_names = d.train.class_names;
  } else {
    const auto role =
        m.task == model::Task::part_segmentation ? data::LabelRole::category : data::LabelRole::shape_label;
    d.train = data::load_directory(config.dataset, data::Split::train, role);
    d.test = data::load_directory(config.dataset, data::Split::test, role);
  }
  if (d.train.items.empty()) throw data::DataError("training split is empty");
  prepare_split(d.train, config);
  prepare_split(d.test, config);

  if (m.task == model::Task::part_segmentation) {
    std::vector<std::set<std::int32_t>> parts(m.num_classes);
    for (const auto* ds : {&d.train, &d.test})
      for (const auto& cloud : ds->items) parts[*cloud.category].insert(cloud.point_labels.begin(), cloud.point_labels.end());
    for (const auto& p : parts) d.category_parts.emplace_back(p.begin(), p.end());
  }
  return d;
}

EvalReport evaluate(model::GTNet& net, const data::Dataset& dataset,
                    const std::vector<std::vector<std::int32_t>>& category_parts, std::size_t threads) {
  const auto& cfg = net.config();
  EvalReport report;
  report.task = cfg.task;
  report.samples = dataset.items.size();
  if (dataset.items.empty()) throw data::DataError("evaluation split is empty");

  const std::size_t n = dataset.items.size();
  report.predictions.resize(n);
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      NoGradGuard no_grad;
      for (std::size_t i = w; i < n; i += workers) {
        const auto& cloud = dataset.items[i];
        auto result = net.forward(cloud, Mode::eval());
        const std::vector<std::int32_t>* allowed = nullptr;
        if (cfg.task == model::Task::part_segmentation && cloud.category &&
            static_cast<std::size_t>(*cloud.category) < category_parts.size())
          allowed = &category_parts[static_cast<std::size_t>(*cloud.category)];
        report.predictions[i] = argmax_rows(result.logits, allowed);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  report.confusion = metrics::ConfusionMatrix(cfg.output_count());
  std::optional<metrics::PartIouAccumulator> parts;
  if (cfg.task == model::Task::part_segmentation) parts.emplace(category_parts);
  for (std::size_t i = 0; i < n; ++i) {
    const auto truth = net.targets_for(dataset.items[i]);
    report.confusion.accumulate(truth, report.predictions[i]);
    if (parts) parts->add_shape(static_cast<std::size_t>(*dataset.items[i].category), truth, report.predictions[i]);
  }
  report.overall_accuracy = metrics::overall_accuracy(report.confusion);
  report.mean_class_accuracy = metrics::mean_class_accuracy(report.confusion);
  if (parts) report.iou = parts->report();
  if (cfg.task == model::Task::semantic_segmentation) report.iou = metrics::semantic_iou(report.confusion);

  const std::size_t rows = cfg.task == model::Task::part_segmentation ? category_parts.size() : cfg.output_count();
  const auto& names = cfg.task == model::Task::semantic_segmentation ? dataset.part_names : dataset.class_names;
  for (std::size_t r = 0; r < rows; ++r)
    report.class_names.push_back(r < names.size() ? names[r] : "class_" + std::to_string(r));
  return report;
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << "task            " << model::task_name(task) << '\n';
  out << "samples         " << samples << '\n';
  out << "points          " << confusion.total() << '\n';
  out << "OA              " << pct(overall_accuracy) << " %\n";
  out << "mAcc            " << pct(mean_class_accuracy) << " %\n";
  if (iou) {
    if (task == model::Task::part_segmentation) {
      out << "instance mIoU   " << pct(iou->instance_miou) << " %\n";
      out << "category mIoU   " << pct(iou->class_miou) << " %\n";
    } else {
      out << "mIoU            " << pct(iou->instance_miou) << " %\n";
    }
  }
  out << '\n';
  const char* score = task == model::Task::classification ? "acc" : "IoU";
  out << std::left << std::setw(24) << "category" << std::setw(10) << "count" << score << '\n';
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    out << std::left << std::setw(24) << class_names[c];
    if (task == model::Task::classification) {
      const auto n = confusion.support(c);
      out << std::setw(10) << n
          << (n ? pct(static_cast<double>(confusion.correct(c)) / static_cast<double>(n)) : std::string("-"));
    } else {
      const auto n = iou->shapes_per_category[c];
      out << std::setw(10) << n << (n ? pct(iou->per_category[c]) : std::string("-"));
    }
    out << '\n';
  }
  return out.str();
}

std::string EvalReport::to_tsv() const {
  std::ostringstream out;
  out << "key\tvalue\n";
  out << "task\t" << model::task_name(task) << '\n';
  out << "samples\t" << samples << '\n';
  out << "points\t" << confusion.total() << '\n';
  out << "oa\t" << exact(overall_accuracy) << '\n';
  out << "macc\t" << exact(mean_class_accuracy) << '\n';
  if (iou) {
    out << "instance_miou\t" << exact(iou->instance_miou) << '\n';
    out << "class_miou\t" << exact(iou->class_miou) << '\n';
  }
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    const std::string key = "category." + std::to_string(c);
    std::uint64_t n = 0;
    double v = 0.0;
    if (task == model::Task::classification) {
      n = confusion.support(c);
      if (n) v = static_cast<double>(confusion.correct(c)) / static_cast<double>(n);
    } else {
      n = iou->shapes_per_category[c];
      v = iou->per_category[c];
    }
    out << key << ".name\t" << class_names[c] << '\n';
    out << key << ".count\t" << n << '\n';
    out << key << ".score\t" << (n ? exact(v) : std::string("nan")) << '\n';
  }
  return out.str();
}

}  // namespace gtnet::cli
