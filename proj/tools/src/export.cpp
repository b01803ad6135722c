#include <fstream>

#include "gtnet/checkpoint.hpp"
#include "gtnet/cli/commands.hpp"
#include "gtnet/cli/ply.hpp"

namespace gtnet::cli {
namespace {

std::string file_stem(std::string name) {
  for (char& c : name)
    if (c == '/' || c == '\\' || c == ' ') c = '_';
  return name;
}

}  // namespace

std::vector<std::filesystem::path> cmd_export(const RunConfig& config, std::ostream& log) {
  auto path = config.checkpoint.value_or(config.out_dir / "checkpoint_best.gtn");
  if (!config.checkpoint && !std::filesystem::exists(path)) path = config.out_dir / "checkpoint_last.gtn";
  auto net = model::load_checkpoint(path, config.model);
  const auto data = prepare_datasets(config);
  const auto report = evaluate(*net, data.test, data.category_parts, effective_threads(config));

  const auto dir = config.out_dir / "export";
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  std::vector<std::filesystem::path> written;
  std::size_t count = data.test.items.size();
  if (config.export_limit) count = std::min(count, config.export_limit);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& cloud = data.test.items[i];
    const std::size_t n = cloud.size();
    const auto truth = net->targets_for(cloud);
    // Classification colours every point with the cloud's class.
    std::vector<std::int64_t> pred = report.predictions[i], gt = truth;
    if (pred.size() == 1) pred.assign(n, pred[0]);
    if (gt.size() == 1) gt.assign(n, gt[0]);
    const auto stem = file_stem(data.test.item_names[i]);
    const auto p = dir / (stem + "_pred.ply");
    const auto g = dir / (stem + "_gt.ply");
    write_ply(p, cloud.coords, pred);
    write_ply(g, cloud.coords, gt);
    written.push_back(p);
    written.push_back(g);
  }
  log << "exported " << written.size() << " files to " << dir.string() << '\n';
  return written;
}

}  // namespace gtnet::cli
