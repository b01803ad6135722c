// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are fixed here and printed with each line.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "gtnet/checkpoint.hpp"
#include "gtnet/cli/commands.hpp"
#include "gtnet/cli/config.hpp"
#include "gtnet/gradcheck.hpp"
#include "gtnet/metrics.hpp"
#include "support.hpp"

using namespace gtnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

fs::path g_work;

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void zero(Linear& l) {
  for (auto& v : l.weight().mutable_data()) v = 0.0;
  if (l.has_bias())
    for (auto& v : l.bias().mutable_data()) v = 0.0;
}

// --- 1 -----------------------------------------------------------------------

model::ModelConfig tiny_model(model::Task task) {
  model::ModelConfig c;
  c.task = task;
  c.blocks = {{3, 8}, {8, 8}};
  c.k = 3;
  c.num_classes = 3;
  c.num_parts = 4;
  c.shape_width = 16;
  c.label_width = 4;
  c.cls_hidden = {16, 8};
  c.seg_hidden = {16, 8};
  c.align_widths = {8, 16, 8};
  c.use_alignment = true;
  return c;
}

Outcome gradients() {
  constexpr double kTol = 1e-4;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, double>> errors;
  auto check = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> params) {
    errors.emplace_back(name, finite_difference_check(f, std::move(params)).max_relative_error);
  };

  std::mt19937_64 rng(0);
  const Tensor x = testing::random_tensor({8, 3}, rng, -1, 1, true);
  const auto g = graph::knn_build(x, 3);
  {
    ParameterStore s;
    attention::LocalBlock local(s, "l", {3, 8}, rng);
    auto p = s.trainable_tensors();
    p.push_back(x);
    check("local", [&] { return testing::probe(local.forward(x, g)); }, p);
  }
  {
    ParameterStore s;
    attention::GlobalBlock global(s, "g", {8}, rng);
    Tensor f = testing::random_tensor({8, 8}, rng, -1, 1, true);
    auto p = s.trainable_tensors();
    p.push_back(f);
    check("global", [&] { return testing::probe(global.forward(f, Mode::eval())); }, p);
  }
  {
    ParameterStore s;
    attention::GraphTransformerBlock block(s, "b", {3, 8}, rng);
    auto p = s.trainable_tensors();
    p.push_back(x);
    check("block", [&] { return testing::probe(block.forward(x, g, Mode::eval())); }, p);
  }
  {
    ParameterStore s;
    model::AlignmentNet align(s, "a", {8, 16, 8}, rng);
    std::uniform_real_distribution<double> d(-0.1, 0.1);
    for (auto& v : align.offset().weight().mutable_data()) v = d(rng);
    auto p = s.trainable_tensors();
    p.push_back(x);
    check("alignment", [&] { return testing::probe(align.forward(x).aligned); }, p);
  }
  for (auto task : {model::Task::classification, model::Task::part_segmentation}) {
    model::GTNet net(tiny_model(task));
    std::uniform_real_distribution<double> d(-0.1, 0.1);
    for (auto& v : net.alignment()->offset().weight().mutable_data()) v = d(rng);
    const Tensor input = x.detach();
    std::vector<std::int64_t> targets(task == model::Task::classification ? 1 : 8);
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<std::int64_t>(i % 3);
    std::optional<std::int64_t> category;
    if (task == model::Task::part_segmentation) category = 1;
    check("model/" + std::string(model::task_name(task)),
          [&] { return net.loss(net.forward(input, category, Mode::eval()).logits, targets); },
          net.parameters().trainable_tensors());
  }

  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::string detail;
  for (const auto& [name, e] : errors) {
    worst = std::max(worst, e);
    detail += name + "=" + fmt(e) + " ";
  }
  detail += "(tol " + fmt(kTol) + ", " + fmt(elapsed) + " s of 60 s)";
  return {worst < kTol && elapsed < 60.0, detail};
}

// --- 2 -----------------------------------------------------------------------

Outcome knn_oracle() {
  std::mt19937_64 rng(2024);
  const std::size_t dims[] = {3, 16, 96};
  std::size_t mismatches = 0, tie_instances = 0;
  for (std::size_t t = 0; t < 1000; ++t) {
    const std::size_t m = dims[t % 3];
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n)(rng);
    std::vector<double> x(n * m);
    // Every fourth instance lives on a coarse integer lattice: many equal
    // distances and coincident points.
    const bool ties = t % 4 == 0;
    std::uniform_real_distribution<double> real(-1, 1);
    std::uniform_int_distribution<int> lattice(0, 2);
    for (auto& v : x) v = ties ? lattice(rng) : real(rng);
    tie_instances += ties ? 1 : 0;
    const auto graph = graph::knn_build(x, n, m, k);
    if (graph.indices != testing::knn_reference(x, n, m, k)) ++mismatches;
  }
  return {mismatches == 0, "1000 instances, " + std::to_string(tie_instances) + " with ties, " +
                               std::to_string(mismatches) + " mismatches (exact)"};
}

// --- 3 -----------------------------------------------------------------------

Outcome normalisation() {
  constexpr double kTol = 1e-6;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 10 + seed * 3, k = 1 + seed % 10;
    ParameterStore s;
    attention::LocalBlock local(s, "l", {5, 16}, rng);
    attention::GlobalBlock global(s, "g", {16}, rng);
    const Tensor x = testing::random_tensor({n, 5}, rng, -4, 4);
    attention::LocalTrace lt;
    const auto f = local.forward(x, graph::knn_build(x, k), &lt);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 16; ++c) {
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += lt.weights.at({i, j, c});
        worst = std::max(worst, std::abs(sum - 1.0));
      }
    attention::GlobalTrace gt;
    global.forward(f, Mode::eval(), &gt);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += gt.attention.at({i, j});
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  return {worst <= kTol, "max |sum - 1| = " + fmt(worst) + " (tol " + fmt(kTol) + ")"};
}

// --- 4 -----------------------------------------------------------------------

Outcome identities() {
  std::mt19937_64 rng(4);
  bool global_ok = true, local_ok = true, align_ok = true;
  {
    ParameterStore s;
    attention::GlobalBlock global(s, "g", {16}, rng);
    zero(global.alignment().linear());
    const Tensor x = testing::random_tensor({12, 16}, rng, -3, 3);
    global_ok = testing::to_vector(global.forward(x, Mode::eval())) == testing::to_vector(x);
  }
  {
    ParameterStore s;
    attention::LocalBlock local(s, "l", {3, 8}, rng);
    const std::size_t n = 9;
    const Tensor x = testing::random_tensor({n, 3}, rng);
    const auto out = local.forward(x, graph::knn_build(x, 1));
    // Self edge: f_j - f_i = 0.
    const Tensor edge = local.edge().forward(concat_last({Tensor::zeros({n, 3}), x}));
    const Tensor encoding = local.tau().forward(relu(local.mu().forward(edge)));
    const Tensor expected = add(local.value().forward(x), encoding);
    local_ok = testing::to_vector(out) == testing::to_vector(expected);
  }
  {
    ParameterStore s;
    model::AlignmentNet align(s, "a", {64, 128, 64}, rng);
    const auto r = align.forward(testing::random_tensor({50, 3}, rng));
    align_ok = testing::to_vector(r.transform) == std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1};
  }
  return {global_ok && local_ok && align_ok, std::string("global identity ") + (global_ok ? "exact" : "differs") +
                                                 ", K=1 local " + (local_ok ? "exact" : "differs") +
                                                 ", fresh T " + (align_ok ? "= I exactly" : "differs")};
}

// --- 5 -----------------------------------------------------------------------

Outcome symmetry() {
  constexpr double kTol = 1e-9;
  double cls_err = 0.0, seg_err = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed + 50);
    const std::size_t n = 32;
    const Tensor x = testing::random_tensor({n, 3}, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const Tensor px = gather_rows(x, perm, {n});

    auto cfg = tiny_model(model::Task::classification);
    cfg.k = 5;
    cfg.seed = seed;
    model::GTNet cls(cfg);
    const auto a = cls.forward(x, std::nullopt, Mode::eval()).logits;
    const auto b = cls.forward(px, std::nullopt, Mode::eval()).logits;
    for (std::size_t i = 0; i < a.numel(); ++i) cls_err = std::max(cls_err, std::abs(a.data()[i] - b.data()[i]));

    cfg.task = model::Task::part_segmentation;
    model::GTNet seg(cfg);
    const auto s = seg.forward(x, 2, Mode::eval()).logits;
    const auto t = seg.forward(px, 2, Mode::eval()).logits;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < cfg.num_parts; ++c)
        seg_err = std::max(seg_err, std::abs(t.at({i, c}) - s.at({perm[i], c})));
  }
  return {cls_err <= kTol && seg_err <= kTol, "classification invariance " + fmt(cls_err) +
                                                  ", segmentation equivariance " + fmt(seg_err) + " (tol " +
                                                  fmt(kTol) + ")"};
}

// --- 6 -----------------------------------------------------------------------

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  auto config = cli::parse_config("profile = synth-cls\nseed = 0\n");
  const auto data = cli::prepare_datasets(config);
  model::GTNet net(config.model);
  std::ostringstream sink;
  const auto result = cli::train_model(net, config, data, sink, false);
  const double elapsed = seconds_since(t0);
  const int epochs = result.log.empty() ? 0 : result.log.back().epoch + 1;
  const bool pass = result.final_train_oa == 1.0 && epochs <= 200 && elapsed < 600.0;
  return {pass, "train OA " + fmt(result.final_train_oa) + " after " + std::to_string(epochs) + " of 200 epochs, " +
                    std::to_string(data.train.items.size()) + " clouds, " + fmt(elapsed) + " s of 600 s"};
}

// --- 7 -----------------------------------------------------------------------

Outcome metric_values() {
  using namespace metrics;
  const auto cm = ConfusionMatrix::from_counts(2, {3, 1, 1, 1});
  const double oa = overall_accuracy(cm), macc = mean_class_accuracy(cm);
  const double miou = semantic_iou(ConfusionMatrix::from_counts(2, {3, 1, 1, 3})).instance_miou;
  const std::vector<std::int64_t> truth{0, 0, 0, 0}, pred{1, 1, 1, 1};
  const std::vector<std::int32_t> parts{0, 1};
  const double shape = shape_iou(truth, pred, parts);
  const bool pass = oa == 4.0 / 6.0 && macc == 0.625 && miou == 0.6 && shape == 0.0;
  std::ostringstream d;
  d.precision(17);
  d << "OA " << oa << ", mAcc " << macc << ", semantic mIoU " << miou << ", swapped-part shape IoU " << shape
    << " (exact)";
  return {pass, d.str()};
}

// --- 8 -----------------------------------------------------------------------

const char* kAblationConfig = R"(profile = synth-cls
synth_generators = sphere, cube, torus, plane
num_classes = 4
synth_points = 64
synth_clouds_per_class = 8
synth_test_clouds_per_class = 32
synth_noise = 0.05
blocks = (3,16),(16,16)
shape_width = 64
cls_hidden = 32,16
dropout = 0
epochs = 30
batch_size = 4
stop_at_train_accuracy = 0
seed = 0
)";

Outcome ablation() {
  constexpr double kMargin = 0.05;
  const auto t0 = std::chrono::steady_clock::now();
  auto config = cli::parse_config(kAblationConfig);
  config.out_dir = g_work / "ablation";
  std::ostringstream sink;
  const auto rows = cli::cmd_ablate(config, sink);

  const std::map<std::string, std::size_t> expected{
      {"transformer", 3}, {"aggregation", 4}, {"k", 5}, {"encoding", 2}, {"residual", 2}};
  std::map<std::string, std::size_t> counts;
  std::map<std::string, double> oa;
  for (const auto& r : rows) {
    ++counts[r.axis];
    oa[r.axis + "/" + r.variant] = r.overall_accuracy;
  }
  const bool complete = counts == std::map<std::string, std::size_t>(expected.begin(), expected.end()) &&
                        fs::exists(config.out_dir / "ablation.txt") && fs::exists(config.out_dir / "ablation.tsv");

  double max_gap = -1.0;
  for (const char* other : {"aggregation/avg", "aggregation/max+avg", "aggregation/concat (max, avg)"})
    max_gap = std::max(max_gap, oa[other] - oa["aggregation/max"]);
  const double enc_gap = oa["encoding/A (without F')"] - oa["encoding/B (with F')"];

  std::cout << cli::ablation_table(rows);
  const bool pass = complete && max_gap <= kMargin && enc_gap <= kMargin;
  return {pass, std::to_string(rows.size()) + " rows over 5 axes" + (complete ? "" : " (incomplete)") +
                    ", best rival minus max OA " + fmt(max_gap) + ", without minus with F' OA " + fmt(enc_gap) +
                    " (margin " + fmt(kMargin) + "), " + fmt(seconds_since(t0)) + " s"};
}

// --- 9 -----------------------------------------------------------------------

Outcome checkpoint_round_trip() {
  bool all = true;
  for (auto task : {model::Task::classification, model::Task::part_segmentation,
                    model::Task::semantic_segmentation}) {
    auto cfg = tiny_model(task);
    model::GTNet net(cfg);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> d(-0.2, 0.2);
    for (auto& p : net.parameters().all())
      for (auto& v : p.tensor.mutable_data()) v += d(rng);
    round_to_storage(net.parameters());
    const Tensor x = testing::random_tensor({20, 3}, rng);
    std::optional<std::int64_t> category;
    if (task == model::Task::part_segmentation) category = 1;
    const auto before = testing::to_vector(net.forward(x, category, Mode::eval()).logits);
    const auto path = g_work / ("roundtrip_" + std::string(model::task_name(task)) + ".gtn");
    model::save_checkpoint(net, path);
    auto loaded = model::load_checkpoint(path, cfg);
    all = all && testing::to_vector(loaded->forward(x, category, Mode::eval()).logits) == before;
  }
  return {all, std::string("logits after save/load ") + (all ? "bitwise equal" : "differ") + " for 3 tasks"};
}

// --- 10 ----------------------------------------------------------------------

const char* kDeterminismConfig = R"(profile = synth-cls
synth_points = 32
synth_clouds_per_class = 4
synth_test_clouds_per_class = 2
blocks = (3,16),(16,16)
k = 8
shape_width = 32
cls_hidden = 32,16
epochs = 3
batch_size = 4
stop_at_train_accuracy = 0
)";

Outcome determinism() {
  const auto dir = g_work / "determinism";
  fs::create_directories(dir);
  {
    std::ofstream(dir / "run.cfg") << kDeterminismConfig;
  }
  std::vector<std::string> stdout_text;
  for (const char* run : {"a", "b"}) {
    const auto out = dir / run;
    fs::remove_all(out);
    const std::string cmd = std::string("\"") + GTNET_BINARY + "\" train --deterministic --seed 7 --config \"" +
                            (dir / "run.cfg").string() + "\" --out \"" + out.string() + "\" > \"" +
                            (dir / (std::string(run) + ".stdout")).string() + "\" 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, std::string("run ") + run + " failed: " + cmd};
    // The output directory is echoed in the log; it is the one intended difference.
    std::string text = slurp(dir / (std::string(run) + ".stdout"));
    for (auto at = text.find(out.string()); at != std::string::npos; at = text.find(out.string()))
      text.erase(at, out.string().size());
    stdout_text.push_back(text);
  }
  const bool log_same = slurp(dir / "a" / "train_log.tsv") == slurp(dir / "b" / "train_log.tsv");
  const bool ckpt_same = slurp(dir / "a" / "checkpoint_last.gtn") == slurp(dir / "b" / "checkpoint_last.gtn") &&
                         slurp(dir / "a" / "checkpoint_best.gtn") == slurp(dir / "b" / "checkpoint_best.gtn");
  const bool out_same = stdout_text[0] == stdout_text[1];
  return {log_same && ckpt_same && out_same, std::string("train log ") + (log_same ? "identical" : "differs") +
                                                 ", checkpoints " + (ckpt_same ? "identical" : "differ") +
                                                 ", stdout " + (out_same ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"gtnet acceptance suite"};
  std::string work = (fs::temp_directory_path() / "gtnet_acceptance").string();
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "run only these criteria")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  fs::remove_all(g_work);
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, Outcome (*)()>> criteria{
      {"gradient correctness", gradients},       {"k-nn oracle", knn_oracle},
      {"attention normalisation", normalisation}, {"identity collapses", identities},
      {"permutation symmetry", symmetry},         {"overfit sanity", overfit},
      {"metric golden values", metric_values},    {"ablation harness", ablation},
      {"checkpoint round-trip", checkpoint_round_trip}, {"deterministic training", determinism}};

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << "criterion " << id << " " << criteria[i].first << ": " << (o.pass ? "PASS" : "FAIL") << " - "
              << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
