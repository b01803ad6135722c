#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "gtnet/checkpoint.hpp"
#include "gtnet/cli/commands.hpp"

namespace gtnet::cli {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string exact(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

std::string opt(const std::optional<double>& v) { return v ? exact(*v) : std::string("-"); }

std::optional<double> miou_of(const EvalReport& r) {
  if (!r.iou) return std::nullopt;
  return r.iou->instance_miou;
}

void write_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  for (const auto& [k, v] : to_key_values(config)) out << k << " = " << v << '\n';
}

std::filesystem::path default_checkpoint(const RunConfig& config) {
  const auto best = config.out_dir / "checkpoint_best.gtn";
  if (std::filesystem::exists(best)) return best;
  return config.out_dir / "checkpoint_last.gtn";
}

}  // namespace

TrainResult train_model(model::GTNet& net, const RunConfig& config, const Datasets& data, std::ostream& log,
                        bool write_outputs) {
  const auto& m = net.config();
  m.validate();
  if (m.epochs <= 0) throw UsageError("epochs must be >= 1");
  const std::size_t threads = effective_threads(config);
  const auto& items = data.train.items;
  const std::size_t n = items.size();
  const std::size_t batch = std::max<std::size_t>(1, m.batch_size);

  std::mt19937_64 dropout_rng(splitmix(m.seed ^ 0x64726f70ULL));
  std::mt19937_64 order_rng(splitmix(m.seed ^ 0x6f726472ULL));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  std::ofstream tsv;
  if (write_outputs) {
    std::filesystem::create_directories(config.out_dir);
    tsv.open(config.out_dir / "train_log.tsv");
    tsv << "epoch\tlr\tloss\ttrain_oa\tval_oa\ttrain_miou\tval_miou\n";
    result.last_checkpoint = config.checkpoint.value_or(config.out_dir / "checkpoint_last.gtn");
  }

  round_to_storage(net.parameters());
  for (int epoch = 0; epoch < m.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      net.parameters().zero_grad();
      // One forward per batch so batch-norm statistics span every cloud in it.
      std::vector<PointCloud> augmented(config.augment ? end - start : 0);
      std::vector<const PointCloud*> clouds;
      std::vector<std::int64_t> targets;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const PointCloud* cloud = &items[idx];
        if (config.augment) {
          augmented[b - start] = data::augment(items[idx], config.augmentation,
                                               splitmix(m.seed + static_cast<std::uint64_t>(epoch) * n + idx));
          cloud = &augmented[b - start];
        }
        clouds.push_back(cloud);
        const auto t = net.targets_for(*cloud);
        targets.insert(targets.end(), t.begin(), t.end());
      }
      const auto out = net.forward_batch(clouds, Mode::train(dropout_rng));
      const Tensor loss = net.loss(out.logits, targets);
      loss_sum += loss.item() * static_cast<double>(end - start);
      backward(loss);
      sgd_step(net.parameters().all(), m.optimizer, epoch);
      round_to_storage(net.parameters());
    }

    EpochLog e;
    e.epoch = epoch;
    e.lr = m.optimizer.lr_at(epoch);
    e.loss = loss_sum / static_cast<double>(n);
    const auto train_report = evaluate(net, data.train, data.category_parts, threads);
    e.train_oa = train_report.overall_accuracy;
    e.train_miou = miou_of(train_report);
    std::optional<double> metric = e.train_miou.value_or(e.train_oa);
    if (!data.test.items.empty()) {
      const auto val = evaluate(net, data.test, data.category_parts, threads);
      e.val_oa = val.overall_accuracy;
      e.val_miou = miou_of(val);
      metric = e.val_miou.value_or(*e.val_oa);
    }
    result.log.push_back(e);

    if (write_outputs) {
      tsv << e.epoch << '\t' << exact(e.lr) << '\t' << exact(e.loss) << '\t' << exact(e.train_oa) << '\t'
          << opt(e.val_oa) << '\t' << opt(e.train_miou) << '\t' << opt(e.val_miou) << '\n';
      if (!result.best_val_metric || *metric > *result.best_val_metric) {
        result.best_checkpoint = config.out_dir / "checkpoint_best.gtn";
        model::save_checkpoint(net, result.best_checkpoint);
      }
    }
    if (!result.best_val_metric || *metric > *result.best_val_metric) result.best_val_metric = metric;

    const bool stop = config.stop_at_train_accuracy > 0.0 && e.train_oa >= config.stop_at_train_accuracy;
    const bool last = stop || epoch + 1 == m.epochs;
    if (config.log_every > 0 && ((epoch + 1) % config.log_every == 0 || last)) {
      log << "epoch=" << epoch << " lr=" << e.lr << " loss=" << e.loss << " train_oa=" << e.train_oa;
      if (e.val_oa) log << " val_oa=" << *e.val_oa;
      if (e.train_miou) log << " train_miou=" << *e.train_miou;
      if (e.val_miou) log << " val_miou=" << *e.val_miou;
      log << '\n';
    }
    if (stop) break;
  }

  result.final_loss = result.log.back().loss;
  result.final_train_oa = result.log.back().train_oa;
  if (write_outputs) model::save_checkpoint(net, result.last_checkpoint);
  return result;
}

TrainResult cmd_train(const RunConfig& config, std::ostream& log) {
  config.model.validate();
  const auto data = prepare_datasets(config);
  model::GTNet net(config.model);
  std::filesystem::create_directories(config.out_dir);
  write_config(config, config.out_dir / "config.txt");
  log << "train: " << data.train.items.size() << " clouds, test: " << data.test.items.size()
      << " clouds, parameters: " << net.parameters().trainable_count() << '\n';
  auto result = train_model(net, config, data, log, true);
  log << "checkpoint=" << result.last_checkpoint.string() << " final_loss=" << exact(result.final_loss) << '\n';
  return result;
}

EvalReport cmd_eval(const RunConfig& config, std::ostream& log) {
  const auto path = config.checkpoint.value_or(default_checkpoint(config));
  auto net = model::load_checkpoint(path, config.model);
  const auto data = prepare_datasets(config);
  auto report = evaluate(*net, data.test, data.category_parts, effective_threads(config));
  std::filesystem::create_directories(config.out_dir);
  {
    std::ofstream txt(config.out_dir / "metrics.txt");
    txt << "checkpoint      " << path.string() << '\n' << report.to_text();
    std::ofstream tsv(config.out_dir / "metrics.tsv");
    tsv << report.to_tsv();
    if (!txt || !tsv) throw std::runtime_error("cannot write metrics into " + config.out_dir.string());
  }
  log << report.to_text();
  return report;
}

}  // namespace gtnet::cli
