#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gtnet/point_cloud.hpp"

namespace gtnet::data {

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { train, test };
std::string_view split_name(Split s);

struct Dataset {
  std::vector<PointCloud> items;
  std::vector<std::string> item_names;
  Split split = Split::train;
  std::vector<std::string> class_names;
  std::vector<std::string> part_names;
  /// For part segmentation: the part labels each category may carry.
  std::vector<std::vector<std::int32_t>> category_parts;
};

// Text format: a header line "#cols: xyz|xyzrgb|xyzrgbn" optionally followed
// by "label", then one whitespace-separated point per line.
PointCloud parse_text(std::istream& in, const std::string& source = "<stream>");
PointCloud load_text(const std::filesystem::path& path);
void save_text(const PointCloud& cloud, const std::filesystem::path& path);

// Binary format:
//   "GTNPC1" | u8 layout (0 xyz, 1 xyzrgb, 2 xyzrgbn) | u8 has_labels | u32 N
//   | channels x N little-endian f32, column by column | N u32 labels
PointCloud load_binary(const std::filesystem::path& path);
void save_binary(const PointCloud& cloud, const std::filesystem::path& path);

/// Dispatches on extension: .txt or .gpc.
PointCloud load_cloud(const std::filesystem::path& path);

enum class LabelRole { shape_label, category };

/// Reads `<root>/<split>/<class>/<item>.(txt|gpc)`. Class directories are
/// sorted by name; the class index is stored according to `role`.
Dataset load_directory(const std::filesystem::path& root, Split split, LabelRole role);

/// Uniform sample of n points: without replacement when n <= N, with
/// replacement otherwise. Labels follow their points.
PointCloud sample_points(const PointCloud& cloud, std::size_t n, std::uint64_t seed);

/// Centres at the centroid and scales the largest radius to 1.
PointCloud normalize_unit_sphere(const PointCloud& cloud);

enum class Generator { sphere, cube, torus, plane, two_part_rod };
std::string_view generator_name(Generator g);
Generator parse_generator(std::string_view name);

struct SynthSpec {
  std::vector<Generator> generators{Generator::sphere, Generator::cube};  // one class each
  std::size_t points_per_cloud = 128;
  std::size_t clouds_per_class = 16;
  double noise_sigma = 0.01;
  std::uint64_t seed = 0;
  Split split = Split::train;
};

/// Seeded synthetic shapes. Every cloud carries shape_label = class index;
/// two_part_rod clouds also carry category = class index and per-point part
/// labels (1 where the axial coordinate is >= 0, else 0).
Dataset synth_generate(const SynthSpec& spec);

struct AugmentConfig {
  double scale_min = 0.8;
  double scale_max = 1.25;
  double shift = 0.1;
};

/// Uniform isotropic scale and translation; labels are untouched.
PointCloud augment(const PointCloud& cloud, const AugmentConfig& config, std::uint64_t seed);

}  // namespace gtnet::data
