#include "gtnet/point_cloud.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace gtnet {

std::size_t attribute_width(AttributeLayout layout) {
  switch (layout) {
    case AttributeLayout::none:
      return 0;
    case AttributeLayout::rgb:
      return 3;
    case AttributeLayout::rgb_normal:
      return 6;
  }
  return 0;
}

std::string_view layout_name(AttributeLayout layout) {
  switch (layout) {
    case AttributeLayout::none:
      return "xyz";
    case AttributeLayout::rgb:
      return "xyzrgb";
    case AttributeLayout::rgb_normal:
      return "xyzrgbn";
  }
  return "xyz";
}

void PointCloud::validate() const {
  if (coords.empty() || coords.size() % 3 != 0) throw std::invalid_argument("point cloud needs N >= 1 xyz rows");
  const std::size_t n = size();
  const std::size_t aw = attribute_width(layout);
  if (attributes.size() != n * aw) {
    throw std::invalid_argument("attribute array holds " + std::to_string(attributes.size()) + " values, expected " +
                                std::to_string(n * aw));
  }
  if (!point_labels.empty() && point_labels.size() != n) {
    throw std::invalid_argument("point label count " + std::to_string(point_labels.size()) + " != N = " +
                                std::to_string(n));
  }
  for (double v : coords)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite coordinate");
  for (double v : attributes)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite attribute");
  if (layout == AttributeLayout::rgb_normal) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* nrm = attributes.data() + i * aw + 3;
      const double len = std::sqrt(nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]);
      if (std::abs(len - 1.0) > 1e-4) {
        throw std::invalid_argument("normal of point " + std::to_string(i) + " has length " + std::to_string(len));
      }
    }
  }
}

std::vector<double> PointCloud::features() const {
  const std::size_t n = size();
  const std::size_t aw = attribute_width(layout);
  const std::size_t c = 3 + aw;
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 3; ++j) out[i * c + j] = coords[i * 3 + j];
    for (std::size_t j = 0; j < aw; ++j) out[i * c + 3 + j] = attributes[i * aw + j];
  }
  return out;
}

}  // namespace gtnet
