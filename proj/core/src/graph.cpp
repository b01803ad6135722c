#include "gtnet/graph.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace gtnet::graph {

NeighborGraph knn_build(std::span<const double> basis, std::size_t num_points, std::size_t dims, std::size_t k,
                        Space space) {
  if (k < 1) throw ShapeError("knn_build: K must be >= 1");
  if (k > num_points) {
    throw ShapeError("knn_build: K = " + std::to_string(k) + " exceeds N = " + std::to_string(num_points));
  }
  if (basis.size() != num_points * dims) throw ShapeError("knn_build: basis size does not match N x M");

  NeighborGraph g;
  g.num_points = num_points;
  g.k = k;
  g.space = space;
  g.indices.resize(num_points * k);

  std::vector<double> dist(num_points);
  std::vector<std::size_t> order(num_points);
  for (std::size_t i = 0; i < num_points; ++i) {
    const double* pi = basis.data() + i * dims;
    for (std::size_t j = 0; j < num_points; ++j) {
      const double* pj = basis.data() + j * dims;
      double d = 0.0;
      for (std::size_t m = 0; m < dims; ++m) {
        const double diff = pi[m] - pj[m];
        d += diff * diff;
      }
      dist[j] = d;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto closer = [&dist](std::size_t a, std::size_t b) {
      return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
    };
    if (k < num_points) {
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), closer);
    }
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), closer);
    std::copy_n(order.begin(), k, g.indices.begin() + static_cast<std::ptrdiff_t>(i * k));
  }
  return g;
}

NeighborGraph knn_build(const Tensor& basis, std::size_t k, Space space) {
  if (basis.rank() != 2) throw ShapeError("knn_build: basis must be [N, M], got " + shape_to_string(basis.shape()));
  return knn_build(basis.data(), basis.dim(0), basis.dim(1), k, space);
}

Tensor gather_neighbors(const Tensor& features, const NeighborGraph& graph) {
  if (features.rank() != 2 || features.dim(0) != graph.num_points) {
    throw ShapeError("gather_neighbors: features " + shape_to_string(features.shape()) + " vs graph over " +
                     std::to_string(graph.num_points) + " points");
  }
  return gather_rows(features, graph.indices, {graph.num_points, graph.k});
}

EdgeFeatures edge_encode_absolute(const Tensor& neighbors, const Linear& weights) {
  if (neighbors.rank() != 3 || neighbors.dim(2) != weights.in_features()) {
    throw ShapeError("edge_encode_absolute: neighbours " + shape_to_string(neighbors.shape()) +
                     " do not match weights with " + std::to_string(weights.in_features()) + " inputs");
  }
  return {weights.forward(neighbors), EdgeEncoding::absolute};
}

EdgeFeatures edge_encode_relative(const Tensor& features, const Tensor& neighbors, const Linear& weights) {
  if (features.rank() != 2 || neighbors.rank() != 3 || neighbors.dim(0) != features.dim(0) ||
      neighbors.dim(2) != features.dim(1) || weights.in_features() != 2 * features.dim(1)) {
    throw ShapeError("edge_encode_relative: features " + shape_to_string(features.shape()) + ", neighbours " +
                     shape_to_string(neighbors.shape()) + ", weights expecting " +
                     std::to_string(weights.in_features()) + " inputs");
  }
  const Tensor centre = broadcast_axis(features, 1, neighbors.dim(1));
  const Tensor joint = concat_last({sub(neighbors, centre), centre});
  return {weights.forward(joint), EdgeEncoding::relative};
}

}  // namespace gtnet::graph
