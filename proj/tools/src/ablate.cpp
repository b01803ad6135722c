#include <fstream>
#include <iomanip>
#include <sstream>

#include "gtnet/cli/commands.hpp"

namespace gtnet::cli {
namespace {

std::string pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v;
  return s.str();
}

}  // namespace

std::vector<std::string> ablation_axes() { return {"transformer", "aggregation", "k", "encoding", "residual"}; }

std::vector<std::pair<std::string, RunConfig>> ablation_variants(const RunConfig& base, const std::string& axis) {
  std::vector<std::pair<std::string, RunConfig>> out;
  auto variant = [&](std::string name, auto edit) {
    RunConfig c = base;
    edit(c.model);
    out.emplace_back(std::move(name), std::move(c));
  };
  using attention::Aggregation;
  if (axis == "transformer") {
    variant("A (LT+GT)", [](model::ModelConfig& m) { m.use_local = m.use_global = true; });
    variant("B (LT)", [](model::ModelConfig& m) { m.use_local = true, m.use_global = false; });
    variant("C (GT)", [](model::ModelConfig& m) { m.use_local = false, m.use_global = true; });
  } else if (axis == "aggregation") {
    variant("max+avg", [](model::ModelConfig& m) { m.aggregation = Aggregation::add; });
    variant("concat (max, avg)", [](model::ModelConfig& m) { m.aggregation = Aggregation::concat; });
    variant("avg", [](model::ModelConfig& m) { m.aggregation = Aggregation::avg; });
    variant("max", [](model::ModelConfig& m) { m.aggregation = Aggregation::max; });
  } else if (axis == "k") {
    for (std::size_t k : {5, 10, 15, 20, 25})
      variant(std::to_string(k), [k](model::ModelConfig& m) { m.k = k; });
  } else if (axis == "encoding") {
    variant("A (without F')", [](model::ModelConfig& m) { m.use_feature_encoding = false; });
    variant("B (with F')", [](model::ModelConfig& m) { m.use_feature_encoding = true; });
  } else if (axis == "residual") {
    variant("A (without residual)", [](model::ModelConfig& m) { m.use_residual = false; });
    variant("B (with residual)", [](model::ModelConfig& m) { m.use_residual = true; });
  } else {
    throw UsageError("unknown ablation axis '" + axis + "' (transformer|aggregation|k|encoding|residual)");
  }
  for (auto& [name, c] : out) {
    try {
      c.model.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError("ablation variant " + axis + "/" + name + ": " + e.what());
    }
  }
  return out;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  std::string axis;
  for (const auto& r : rows) {
    if (r.axis != axis) {
      if (!axis.empty()) out << '\n';
      axis = r.axis;
      out << "[" << axis << "]\n";
      out << std::left << std::setw(24) << "variant" << std::setw(10) << "OA(%)" << std::setw(10) << "mAcc(%)"
          << "mIoU(%)\n";
    }
    out << std::left << std::setw(24) << r.variant << std::setw(10) << pct(r.overall_accuracy) << std::setw(10)
        << pct(r.mean_class_accuracy) << (r.miou ? pct(*r.miou) : std::string("-")) << '\n';
  }
  return out.str();
}

std::vector<AblationRow> cmd_ablate(const RunConfig& config, std::ostream& log) {
  if (config.ablate_axes.empty()) throw UsageError("no ablation axes given");
  std::vector<std::vector<std::pair<std::string, RunConfig>>> plan;
  for (const auto& axis : config.ablate_axes) plan.push_back(ablation_variants(config, axis));

  const auto data = prepare_datasets(config);
  if (data.test.items.empty()) throw data::DataError("ablation needs a non-empty test split");
  for (const auto& variants : plan)
    for (const auto& [name, c] : variants)
      for (const auto& cloud : data.train.items)
        if (cloud.size() < c.model.k)
          throw data::DataError("variant " + name + " needs k = " + std::to_string(c.model.k) + " but clouds have " +
                                std::to_string(cloud.size()) + " points");

  std::vector<AblationRow> rows;
  std::ostringstream quiet;
  for (std::size_t a = 0; a < plan.size(); ++a) {
    for (const auto& [name, c] : plan[a]) {
      model::GTNet net(c.model);
      const auto trained = train_model(net, c, data, quiet, false);
      const auto report = evaluate(net, data.test, data.category_parts, effective_threads(c));
      AblationRow row;
      row.axis = config.ablate_axes[a];
      row.variant = name;
      row.overall_accuracy = report.overall_accuracy;
      row.mean_class_accuracy = report.mean_class_accuracy;
      if (report.iou) row.miou = report.iou->instance_miou;
      row.final_loss = trained.final_loss;
      log << "ablate axis=" << row.axis << " variant=\"" << name << "\" oa=" << row.overall_accuracy
          << " epochs=" << trained.log.size() << '\n';
      rows.push_back(std::move(row));
    }
  }

  std::filesystem::create_directories(config.out_dir);
  std::ofstream txt(config.out_dir / "ablation.txt");
  txt << ablation_table(rows);
  std::ofstream tsv(config.out_dir / "ablation.tsv");
  tsv << "axis\tvariant\toa\tmacc\tmiou\tfinal_loss\n";
  tsv.precision(17);
  for (const auto& r : rows) {
    tsv << r.axis << '\t' << r.variant << '\t' << r.overall_accuracy << '\t' << r.mean_class_accuracy << '\t';
    if (r.miou) tsv << *r.miou;
    else tsv << "nan";
    tsv << '\t' << r.final_loss << '\n';
  }
  if (!txt || !tsv) throw std::runtime_error("cannot write ablation tables into " + config.out_dir.string());
  log << ablation_table(rows);
  return rows;
}

}  // namespace gtnet::cli
