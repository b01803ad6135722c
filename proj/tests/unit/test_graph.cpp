#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "gtnet/gradcheck.hpp"
#include "gtnet/graph.hpp"
#include "support.hpp"

using namespace gtnet;
using namespace gtnet::graph;

TEST_CASE("collinear tie broken by index") {
  const std::vector<double> x = {0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0};
  const auto g = knn_build(x, 4, 3, 2);
  CHECK(std::vector<std::size_t>(g.row(1).begin(), g.row(1).end()) == std::vector<std::size_t>{1, 0});
  CHECK(std::vector<std::size_t>(g.row(3).begin(), g.row(3).end()) == std::vector<std::size_t>{3, 2});
}

TEST_CASE("K = N gives a permutation per row") {
  std::mt19937_64 rng(1);
  const auto t = testing::random_tensor({9, 3}, rng);
  const auto g = knn_build(t, 9);
  for (std::size_t i = 0; i < 9; ++i) {
    std::vector<std::size_t> row(g.row(i).begin(), g.row(i).end());
    CHECK(row[0] == i);
    std::sort(row.begin(), row.end());
    std::vector<std::size_t> all(9);
    std::iota(all.begin(), all.end(), 0);
    CHECK(row == all);
  }
}

TEST_CASE("random instance equals the sort oracle") {
  std::mt19937_64 rng(2);
  const auto t = testing::random_tensor({50, 16}, rng);
  const std::vector<double> x(t.data().begin(), t.data().end());
  CHECK(knn_build(t, 10, Space::feature).indices == testing::knn_reference(x, 50, 16, 10));
}

TEST_CASE("coincident points: rows are the first K indices") {
  const std::vector<double> x(6 * 3, 0.25);
  const auto g = knn_build(x, 6, 3, 4);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(std::vector<std::size_t>(g.row(i).begin(), g.row(i).end()) == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("knn argument errors") {
  const std::vector<double> x(4 * 3, 0.0);
  CHECK_THROWS(knn_build(x, 4, 3, 0));
  CHECK_THROWS(knn_build(x, 4, 3, 5));
  CHECK_THROWS(knn_build(x, 5, 3, 2));
}

TEST_CASE("gather neighbours") {
  const Tensor f = Tensor::from({3, 1}, {1, 2, 3});
  NeighborGraph g{{0, 2, 1, 0, 2, 1}, 3, 2};
  CHECK(testing::to_vector(gather_neighbors(f, g)) == std::vector<double>{1, 3, 2, 1, 3, 2});
  CHECK(gather_neighbors(f, g).shape() == Shape{3, 2, 1});

  NeighborGraph self{{0, 1, 2}, 3, 1};
  CHECK(testing::to_vector(gather_neighbors(f, self)) == testing::to_vector(f));
  CHECK(gather_neighbors(f, self).shape() == Shape{3, 1, 1});
}

TEST_CASE("gather gradient counts occurrences") {
  Tensor f = Tensor::from({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8}, true);
  NeighborGraph g{{0, 0, 1, 2, 0, 3, 0, 1}, 4, 2};
  backward(sum_all(gather_neighbors(f, g)));
  CHECK(f.grad() == std::vector<double>{4, 4, 2, 2, 1, 1, 1, 1});
  auto r = finite_difference_check([&] { return testing::probe(gather_neighbors(f, g)); }, {f});
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("absolute edge encoding") {
  std::mt19937_64 rng(0);
  ParameterStore store;
  Linear zero(store, "zero", 3, 4, rng, true, Init::zeros);
  const Tensor nb = testing::random_tensor({5, 2, 3}, rng);
  const auto encoded = edge_encode_absolute(nb, zero);
  for (double v : encoded.values.data()) CHECK(v == 0.0);

  Linear scalar(store, "scalar", 1, 1, rng, false);
  scalar.weight().mutable_data()[0] = 2.0;
  CHECK(edge_encode_absolute(Tensor::from({1, 1, 1}, {3}), scalar).values.item() == 6.0);

  // The same neighbour gathered by different centroids encodes identically.
  Linear w(store, "w", 3, 4, rng);
  const Tensor f = testing::random_tensor({4, 3}, rng);
  NeighborGraph g{{2, 0, 2, 1, 2, 3, 3, 2}, 4, 2};
  const auto e = edge_encode_absolute(gather_neighbors(f, g), w).values;
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(e.at({0, 0, c}) == e.at({1, 0, c}));
    CHECK(e.at({0, 0, c}) == e.at({3, 1, c}));
  }
}

TEST_CASE("relative edge encoding") {
  std::mt19937_64 rng(0);
  ParameterStore store;
  Linear w(store, "w", 2, 1, rng, true, Init::zeros);
  w.weight().mutable_data()[0] = 1.0;
  w.weight().mutable_data()[1] = 1.0;
  const Tensor f = Tensor::from({2, 1}, {1, 4});
  NeighborGraph g{{1, 1, 0, 0}, 2, 2};
  const auto e = edge_encode_relative(f, gather_neighbors(f, g), w).values;
  CHECK(e.at({0, 0, 0}) == 4.0);  // (4 - 1) + 1

  // f_j == f_i: only the centroid half contributes.
  Linear w2(store, "w2", 6, 3, rng);
  const Tensor p = testing::random_tensor({4, 3}, rng);
  NeighborGraph same{{0, 0, 1, 1, 2, 2, 3, 3}, 4, 2};
  const auto a = edge_encode_relative(p, gather_neighbors(p, same), w2).values;
  Linear half(store, "half", 3, 3, rng);
  for (std::size_t i = 0; i < 9; ++i) half.weight().mutable_data()[i] = w2.weight().data()[9 + i];
  for (std::size_t i = 0; i < 3; ++i) half.bias().mutable_data()[i] = w2.bias().data()[i];
  const auto b = half.forward(p);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) CHECK(a.at({i, 0, c}) == doctest::Approx(b.at({i, c})).epsilon(1e-14));

  // Translating every feature leaves the difference half unchanged.
  const Tensor shifted = add(p, Tensor::full({4, 3}, 7.5));
  NeighborGraph g2{{1, 2, 0, 3, 3, 1, 2, 0}, 4, 2};
  const auto d0 = sub(gather_neighbors(p, g2), broadcast_axis(p, 1, 2));
  const auto d1 = sub(gather_neighbors(shifted, g2), broadcast_axis(shifted, 1, 2));
  for (std::size_t i = 0; i < d0.numel(); ++i) CHECK(d0.data()[i] == doctest::Approx(d1.data()[i]).epsilon(1e-12));
}
