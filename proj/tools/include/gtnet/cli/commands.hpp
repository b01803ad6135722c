#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gtnet/cli/config.hpp"
#include "gtnet/data.hpp"
#include "gtnet/metrics.hpp"
#include "gtnet/model.hpp"

namespace gtnet::cli {

struct Datasets {
  data::Dataset train;
  data::Dataset test;
  std::vector<std::vector<std::int32_t>> category_parts;
};

/// Loads or generates both splits, resamples and normalizes, and checks that
/// the labels the task needs are present. Throws data::DataError.
Datasets prepare_datasets(const RunConfig& config);

struct EvalReport {
  model::Task task = model::Task::classification;
  metrics::ConfusionMatrix confusion;
  double overall_accuracy = 0.0;
  double mean_class_accuracy = 0.0;
  std::optional<metrics::IouReport> iou;  // segmentation only
  std::vector<std::string> class_names;   // rows of the per-category table
  std::size_t samples = 0;                // clouds evaluated
  std::vector<std::vector<std::int64_t>> predictions;  // per cloud: 1 label or N labels

  std::string to_text() const;
  std::string to_tsv() const;
};

/// Eval-mode predictions and metrics. Clouds fan out over `threads` workers;
/// results are merged in dataset order so the report does not depend on the
/// worker count.
EvalReport evaluate(model::GTNet& net, const data::Dataset& dataset,
                    const std::vector<std::vector<std::int32_t>>& category_parts, std::size_t threads);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double train_oa = 0.0;
  std::optional<double> val_oa;
  std::optional<double> train_miou;
  std::optional<double> val_miou;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double final_loss = 0.0;
  double final_train_oa = 0.0;
  std::optional<double> best_val_metric;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
};

/// Trains from scratch. With `write_outputs` the run writes checkpoint_last,
/// checkpoint_best (by validation metric), train_log.tsv and config.txt into
/// out_dir. Progress lines go to `log`.
TrainResult train_model(model::GTNet& net, const RunConfig& config, const Datasets& data, std::ostream& log,
                        bool write_outputs);

TrainResult cmd_train(const RunConfig& config, std::ostream& log);
/// Loads config.checkpoint (or out_dir/checkpoint_best.gtn) and scores the
/// test split; writes metrics.txt and metrics.tsv into out_dir.
EvalReport cmd_eval(const RunConfig& config, std::ostream& log);

struct AblationRow {
  std::string axis;
  std::string variant;
  double overall_accuracy = 0.0;
  double mean_class_accuracy = 0.0;
  std::optional<double> miou;
  double final_loss = 0.0;
};

std::vector<std::string> ablation_axes();
/// Variant configs for one axis, in table order. Throws UsageError for an
/// unknown axis.
std::vector<std::pair<std::string, RunConfig>> ablation_variants(const RunConfig& base, const std::string& axis);
/// Trains and evaluates every variant of every requested axis with the same
/// seed and data; writes ablation.txt and ablation.tsv into out_dir.
std::vector<AblationRow> cmd_ablate(const RunConfig& config, std::ostream& log);
std::string ablation_table(const std::vector<AblationRow>& rows);

/// Writes <out>/export/<item>_pred.ply and <item>_gt.ply for each test cloud.
std::vector<std::filesystem::path> cmd_export(const RunConfig& config, std::ostream& log);

}  // namespace gtnet::cli
