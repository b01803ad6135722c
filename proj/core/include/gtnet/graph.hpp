#pragma once

#include <span>
#include <vector>

#include "gtnet/layers.hpp"
#include "gtnet/tensor.hpp"

namespace gtnet::graph {

enum class Space { coordinate, feature };

/// Directed K-NN graph: row i lists the K nearest points of point i ordered
/// by (squared distance, index). A point is its own first neighbour unless an
/// exact duplicate with a lower index exists.
struct NeighborGraph {
  std::vector<std::size_t> indices;  // num_points x k
  std::size_t num_points = 0;
  std::size_t k = 0;
  Space space = Space::coordinate;

  std::span<const std::size_t> row(std::size_t i) const { return {indices.data() + i * k, k}; }
};

/// Exact brute-force K-NN over the rows of an N x M matrix.
NeighborGraph knn_build(std::span<const double> basis, std::size_t num_points, std::size_t dims, std::size_t k,
                        Space space = Space::coordinate);
NeighborGraph knn_build(const Tensor& basis, std::size_t k, Space space = Space::coordinate);

/// features[N, C] -> [N, K, C], out[i][j] = features[indices[i][j]].
Tensor gather_neighbors(const Tensor& features, const NeighborGraph& graph);

enum class EdgeEncoding { absolute, relative };

struct EdgeFeatures {
  Tensor values;  // N x K x D_e
  EdgeEncoding kind = EdgeEncoding::relative;
};

/// e_ij = psi(f_j): one shared linear map applied to every gathered neighbour.
EdgeFeatures edge_encode_absolute(const Tensor& neighbors, const Linear& weights);
/// e_ij = linear(concat(f_j - f_i, f_i)) with a shared (2C -> D_e) map.
EdgeFeatures edge_encode_relative(const Tensor& features, const Tensor& neighbors, const Linear& weights);

}  // namespace gtnet::graph
