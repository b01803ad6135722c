#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "gtnet/gradcheck.hpp"
#include "gtnet/model.hpp"
#include "support.hpp"

using namespace gtnet;
using namespace gtnet::model;

namespace {

ModelConfig tiny(Task task) {
  ModelConfig c;
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
  return c;
}

// Pairwise distances are distinct with probability one.
Tensor cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return testing::random_tensor({n, 3}, rng);
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  return gather_rows(x, perm, {perm.size()});
}

}  // namespace

TEST_CASE("fresh alignment network is the identity") {
  std::mt19937_64 rng(0);
  ParameterStore store;
  AlignmentNet net(store, "align", {64, 128, 64}, rng);
  const Tensor x = cloud(12, 1);
  const auto r = net.forward(x);
  CHECK(testing::to_vector(r.transform) == std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  CHECK(testing::to_vector(r.aligned) == testing::to_vector(x));
}

TEST_CASE("alignment with a zero offset leaves any input unchanged") {
  std::mt19937_64 rng(0);
  ParameterStore store;
  AlignmentNet net(store, "align", {8, 16, 8}, rng);
  const Tensor x = testing::random_tensor({30, 3}, rng, -100, 100);
  CHECK(testing::to_vector(net.forward(x).aligned) == testing::to_vector(x));
}

TEST_CASE("gradient through the alignment transform") {
  std::mt19937_64 rng(0);
  ParameterStore store;
  AlignmentNet net(store, "align", {8, 16, 8}, rng);
  std::uniform_real_distribution<double> d(-0.1, 0.1);
  for (auto& v : net.offset().weight().mutable_data()) v = d(rng);
  Tensor x = testing::random_tensor({8, 3}, rng, -1, 1, true);
  auto params = store.trainable_tensors();
  params.push_back(x);
  CHECK(finite_difference_check([&] { return testing::probe(net.forward(x).aligned); }, params).max_relative_error <
        1e-4);
}

TEST_CASE("aggregate block outputs") {
  const Tensor single = Tensor::from({1, 3}, {4, 5, 6});
  CHECK(testing::to_vector(aggregate_block_outputs({single})) == std::vector<double>{4, 5, 6});
  const auto agg = aggregate_block_outputs({Tensor::full({4, 2}, 1.0), Tensor::full({4, 3}, 2.0)});
  CHECK(agg.shape() == Shape{1, 5});
  CHECK(testing::to_vector(agg) == std::vector<double>{1, 1, 2, 2, 2});

  std::mt19937_64 rng(1);
  const Tensor a = testing::random_tensor({10, 4}, rng), b = testing::random_tensor({10, 2}, rng);
  std::vector<std::size_t> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  CHECK(testing::to_vector(aggregate_block_outputs({a, b})) ==
        testing::to_vector(aggregate_block_outputs({permute_rows(a, perm), permute_rows(b, perm)})));
}

TEST_CASE("coincident points still run") {
  GTNet net(tiny(Task::classification));
  ForwardResult r = net.forward(Tensor::full({6, 3}, 0.5), std::nullopt, Mode::eval());
  for (const auto& g : r.graphs)
    for (std::size_t i = 0; i < 6; ++i)
      CHECK(std::vector<std::size_t>(g.row(i).begin(), g.row(i).end()) == std::vector<std::size_t>{0, 1, 2});
  for (double v : r.logits.data()) CHECK(std::isfinite(v));
}

TEST_CASE("single block backbone is one block forward on a coordinate graph") {
  auto cfg = tiny(Task::classification);
  cfg.blocks = {{3, 8}};
  GTNet net(cfg);
  const Tensor x = cloud(10, 2);
  const auto outs = net.backbone_forward(x, x.data(), Mode::eval());
  REQUIRE(outs.size() == 1);
  const auto expected = net.blocks()[0].forward(x, graph::knn_build(x, 3), Mode::eval());
  CHECK(testing::to_vector(outs[0]) == testing::to_vector(expected));
}

TEST_CASE("graph basis") {
  auto cfg = tiny(Task::classification);
  cfg.blocks = {{3, 8}, {8, 8}, {8, 8}};
  cfg.graph_basis = GraphBasis::always_coordinates;
  GTNet fixed(cfg);
  const auto r = fixed.forward(cloud(12, 3), std::nullopt, Mode::eval());
  REQUIRE(r.graphs.size() == 3);
  CHECK(r.graphs[1].indices == r.graphs[0].indices);
  CHECK(r.graphs[2].indices == r.graphs[0].indices);
  CHECK(r.graphs[1].space == graph::Space::coordinate);

  cfg.graph_basis = GraphBasis::coordinates_first_then_features;
  GTNet dynamic(cfg);
  const auto d = dynamic.forward(cloud(12, 3), std::nullopt, Mode::eval());
  CHECK(d.graphs[0].space == graph::Space::coordinate);
  CHECK(d.graphs[1].space == graph::Space::feature);
}

TEST_CASE("paper-scale logits shapes") {
  NoGradGuard no_grad;
  SUBCASE("classification, 1024 points") {
    ModelConfig cfg;
    GTNet net(cfg);
    CHECK(net.forward(cloud(1024, 4), std::nullopt, Mode::eval()).logits.shape() == Shape{1, 40});
  }
  SUBCASE("part segmentation, 2048 points") {
    ModelConfig cfg;
    cfg.task = Task::part_segmentation;
    cfg.blocks = {{3, 96}, {96, 96}, {96, 96}};
    cfg.num_classes = 16;
    cfg.use_alignment = true;
    GTNet net(cfg);
    CHECK(net.forward(cloud(2048, 5), 3, Mode::eval()).logits.shape() == Shape{2048, 50});
  }
}

TEST_CASE("permutation symmetry") {
  const Tensor x = cloud(24, 6);
  std::vector<std::size_t> perm(24);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(7);
  std::shuffle(perm.begin(), perm.end(), rng);
  const Tensor px = permute_rows(x, perm);

  GTNet cls(tiny(Task::classification));
  const auto a = cls.forward(x, std::nullopt, Mode::eval()).logits;
  const auto b = cls.forward(px, std::nullopt, Mode::eval()).logits;
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a.data()[i] - b.data()[i]) <= 1e-9);

  auto cfg = tiny(Task::part_segmentation);
  cfg.use_alignment = true;
  GTNet seg(cfg);
  const auto s = seg.forward(x, 1, Mode::eval()).logits;
  const auto t = seg.forward(px, 1, Mode::eval()).logits;
  for (std::size_t i = 0; i < 24; ++i)
    for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(t.at({i, c}) - s.at({perm[i], c})) <= 1e-9);
}

TEST_CASE("full tiny model gradient") {
  for (Task task : {Task::classification, Task::part_segmentation, Task::semantic_segmentation}) {
    auto cfg = tiny(task);
    cfg.use_alignment = true;
    GTNet net(cfg);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(-0.1, 0.1);
    for (auto& v : net.alignment()->offset().weight().mutable_data()) v = d(rng);
    const Tensor x = cloud(8, 9);
    std::vector<std::int64_t> targets(task == Task::classification ? 1 : 8);
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<std::int64_t>(i % 3);
    std::optional<std::int64_t> category;
    if (task == Task::part_segmentation) category = 2;
    auto f = [&] { return net.loss(net.forward(x, category, Mode::eval()).logits, targets); };
    INFO(task_name(task));
    CHECK(finite_difference_check(f, net.parameters().trainable_tensors()).max_relative_error < 1e-4);
  }
}

TEST_CASE("batched forward in eval mode matches per-cloud forward") {
  for (Task task : {Task::classification, Task::part_segmentation, Task::semantic_segmentation}) {
    INFO(task_name(task));
    auto cfg = tiny(task);
    cfg.use_alignment = true;
    GTNet net(cfg);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> d(-0.1, 0.1);
    for (auto& v : net.alignment()->offset().weight().mutable_data()) v = d(rng);
    const std::vector<Tensor> clouds{cloud(8, 1), cloud(10, 2), cloud(9, 3)};
    std::vector<std::optional<std::int64_t>> cats(3);
    if (task == Task::part_segmentation) cats = {0, 2, 1};
    const auto batch = net.forward_batch(clouds, cats, Mode::eval());
    CHECK(batch.rows == std::vector<std::size_t>{8, 10, 9});
    std::vector<double> expected;
    for (std::size_t b = 0; b < 3; ++b) {
      const auto v = testing::to_vector(net.forward(clouds[b], cats[b], Mode::eval()).logits);
      expected.insert(expected.end(), v.begin(), v.end());
    }
    CHECK(testing::to_vector(batch.logits) == expected);
    const auto one = net.forward_batch(std::span(clouds).first(1), std::span(cats).first(1), Mode::eval());
    CHECK(testing::to_vector(one.logits) == testing::to_vector(net.forward(clouds[0], cats[0], Mode::eval()).logits));
  }
}

TEST_CASE("training-mode batch norm pools statistics over the batch") {
  auto cfg = tiny(Task::semantic_segmentation);
  cfg.dropout = 0.0;
  GTNet net(cfg);
  std::mt19937_64 rng(0);
  const std::vector<Tensor> clouds{cloud(8, 5), cloud(8, 6)};
  const std::vector<std::optional<std::int64_t>> cats(2);
  const auto batch = testing::to_vector(net.forward_batch(clouds, cats, Mode::train(rng)).logits);
  const auto alone = testing::to_vector(net.forward(clouds[0], std::nullopt, Mode::train(rng)).logits);
  CHECK(std::vector<double>(batch.begin(), batch.begin() + static_cast<std::ptrdiff_t>(alone.size())) != alone);

  for (Task task : {Task::classification, Task::part_segmentation}) {
    INFO(task_name(task));
    auto c = tiny(task);
    c.dropout = 0.0;
    GTNet m(c);
    std::vector<std::optional<std::int64_t>> cat(2);
    if (task == Task::part_segmentation) cat = {1, 2};
    std::vector<std::int64_t> targets(task == Task::classification ? 2 : 16);
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<std::int64_t>(i % 3);
    auto f = [&] { return m.loss(m.forward_batch(clouds, cat, Mode::train(rng)).logits, targets); };
    CHECK(finite_difference_check(f, m.parameters().trainable_tensors()).max_relative_error < 1e-4);
  }
}

TEST_CASE("batched forward rejects bad batches") {
  GTNet net(tiny(Task::classification));
  const std::vector<Tensor> clouds{cloud(8, 1), cloud(2, 2)};
  const std::vector<std::optional<std::int64_t>> cats(2);
  CHECK_THROWS_AS(net.forward_batch(clouds, cats, Mode::eval()), ShapeError);  // K > N in cloud 2
  CHECK_THROWS_AS(net.forward_batch(std::span(clouds).first(1), cats, Mode::eval()), ShapeError);
  CHECK_THROWS_AS(net.forward_batch(std::span<const Tensor>{}, std::span<const std::optional<std::int64_t>>{},
                                    Mode::eval()),
                  ShapeError);
}

TEST_CASE("loss targets by task") {
  GTNet cls(tiny(Task::classification));
  PointCloud pc;
  pc.coords = {0, 0, 0, 1, 0, 0, 0, 1, 0};
  CHECK_THROWS(cls.targets_for(pc));
  pc.shape_label = 2;
  CHECK(cls.targets_for(pc) == std::vector<std::int64_t>{2});
  GTNet seg(tiny(Task::semantic_segmentation));
  CHECK_THROWS(seg.targets_for(pc));
  pc.point_labels = {0, 1, 3};
  CHECK(seg.targets_for(pc) == std::vector<std::int64_t>{0, 1, 3});

  GTNet part(tiny(Task::part_segmentation));
  CHECK_THROWS(part.forward(cloud(5, 1), std::nullopt, Mode::eval()));
  CHECK_THROWS(part.forward(cloud(5, 1), 7, Mode::eval()));
  CHECK_THROWS(cls.forward(cloud(2, 1), std::nullopt, Mode::eval()));  // K > N
}

TEST_CASE("head width and dropout only matter in training") {
  auto cfg = tiny(Task::classification);
  GTNet net(cfg);
  const Tensor x = cloud(9, 3);
  const auto a = net.forward(x, std::nullopt, Mode::eval()).logits;
  const auto b = net.forward(x, std::nullopt, Mode::eval()).logits;
  CHECK(testing::to_vector(a) == testing::to_vector(b));
  std::mt19937_64 rng(0);
  const auto t = net.forward(x, std::nullopt, Mode::train(rng)).logits;
  CHECK(t.shape() == Shape{1, 3});
}

TEST_CASE("model config parsing and validation") {
  CHECK(parse_blocks("(3,64),(64,64)") == std::vector<BlockSpec>{{3, 64}, {64, 64}});
  CHECK(parse_blocks("3:64, 64:128") == std::vector<BlockSpec>{{3, 64}, {64, 128}});
  CHECK_THROWS(parse_blocks("(3,64),(64"));

  ModelConfig c;
  c.blocks = {{3, 64}, {32, 64}};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.blocks = {{3, 62}};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.use_global = false;
  CHECK_NOTHROW(c.validate());
  c.use_local = false;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  ModelConfig d;
  d.task = Task::part_segmentation;
  d.aggregation = attention::Aggregation::concat;
  d.optimizer.schedule = CosineAnnealing{0.001, 200};
  d.epochs = 200;
  ModelConfig e;
  for (const auto& [k, v] : to_key_values(d)) CHECK(apply_key_value(e, k, v));
  CHECK(to_key_values(e) == to_key_values(d));
  CHECK_FALSE(apply_key_value(e, "nonsense", "1"));
  CHECK_THROWS(apply_key_value(e, "k", "many"));

  ModelConfig f = d;
  f.blocks = {{3, 64}, {64, 32}, {32, 128}, {128, 256}};
  const auto why = architecture_mismatch(d, f);
  REQUIRE(why.has_value());
  CHECK(why->find("block 1") != std::string::npos);
  f = d;
  f.optimizer.learning_rate = 0.5;
  f.seed = 9;
  CHECK_FALSE(architecture_mismatch(d, f).has_value());
}
