#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace gtnet {

/// Which per-point attribute columns follow xyz.
enum class AttributeLayout : std::uint8_t { none = 0, rgb = 1, rgb_normal = 2 };

std::size_t attribute_width(AttributeLayout layout);
std::string_view layout_name(AttributeLayout layout);

struct PointCloud {
  std::vector<double> coords;      // N x 3, row-major
  std::vector<double> attributes;  // N x attribute_width(layout)
  AttributeLayout layout = AttributeLayout::none;
  std::vector<std::int32_t> point_labels;  // empty or N entries
  std::optional<std::int32_t> shape_label;
  std::optional<std::int32_t> category;

  std::size_t size() const { return coords.size() / 3; }
  std::size_t channels() const { return 3 + attribute_width(layout); }
  bool has_point_labels() const { return !point_labels.empty(); }

  /// Throws std::invalid_argument when array lengths disagree, N == 0,
  /// values are non-finite, or normals are not unit length within 1e-4.
  void validate() const;
  /// xyz followed by attributes, N x channels().
  std::vector<double> features() const;
};

}  // namespace gtnet
