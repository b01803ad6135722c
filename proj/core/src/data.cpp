#include "gtnet/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace gtnet::data {
namespace {

static_assert(std::endian::native == std::endian::little, "binary cloud I/O assumes a little-endian host");

constexpr char kBinaryMagic[6] = {'G', 'T', 'N', 'P', 'C', '1'};

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& tok, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw DataError(where + ": cannot parse '" + tok + "' as a number");
  }
  if (used != tok.size()) throw DataError(where + ": cannot parse '" + tok + "' as a number");
  if (!std::isfinite(v)) throw DataError(where + ": non-finite value '" + tok + "'");
  return v;
}

std::int32_t parse_label(const std::string& tok, const std::string& where) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(tok, &used);
  } catch (const std::exception&) {
    throw DataError(where + ": cannot parse label '" + tok + "'");
  }
  if (used != tok.size() || v < 0 || v > INT32_MAX) throw DataError(where + ": invalid label '" + tok + "'");
  return static_cast<std::int32_t>(v);
}

void validate_or_throw(const PointCloud& cloud, const std::string& source) {
  try {
    cloud.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(source + ": " + e.what());
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string_view split_name(Split s) { return s == Split::train ? "train" : "test"; }

PointCloud parse_text(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  AttributeLayout layout = AttributeLayout::none;
  bool has_label = false;
  PointCloud cloud;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = source + ":" + std::to_string(line_no);
    if (!have_header) {
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      const std::string prefix = "#cols:";
      if (line.rfind(prefix, 0) != 0) throw DataError(where + ": expected header '#cols: xyz|xyzrgb|xyzrgbn [label]'");
      const auto tokens = split_ws(line.substr(prefix.size()));
      if (tokens.empty() || tokens.size() > 2) throw DataError(where + ": malformed column header");
      if (tokens[0] == "xyz")
        layout = AttributeLayout::none;
      else if (tokens[0] == "xyzrgb")
        layout = AttributeLayout::rgb;
      else if (tokens[0] == "xyzrgbn")
        layout = AttributeLayout::rgb_normal;
      else
        throw DataError(where + ": unknown column layout '" + tokens[0] + "'");
      if (tokens.size() == 2) {
        if (tokens[1] != "label") throw DataError(where + ": unknown trailing column '" + tokens[1] + "'");
        has_label = true;
      }
      have_header = true;
      cloud.layout = layout;
      continue;
    }
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto tokens = split_ws(line);
    const std::size_t aw = attribute_width(layout);
    const std::size_t expected = 3 + aw + (has_label ? 1 : 0);
    if (tokens.size() != expected) {
      throw DataError(where + ": expected " + std::to_string(expected) + " columns, found " +
                      std::to_string(tokens.size()));
    }
    for (std::size_t j = 0; j < 3; ++j) cloud.coords.push_back(parse_double(tokens[j], where));
    for (std::size_t j = 0; j < aw; ++j) cloud.attributes.push_back(parse_double(tokens[3 + j], where));
    if (has_label) cloud.point_labels.push_back(parse_label(tokens.back(), where));
  }
  if (!have_header) throw DataError(source + ": missing '#cols:' header");
  if (cloud.coords.empty()) throw DataError(source + ": no points");
  validate_or_throw(cloud, source);
  return cloud;
}

PointCloud load_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return parse_text(in, path.string());
}

void save_text(const PointCloud& cloud, const std::filesystem::path& path) {
  validate_or_throw(cloud, path.string());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "#cols: " << layout_name(cloud.layout) << (cloud.has_point_labels() ? " label" : "") << "\n";
  out.precision(17);
  const std::size_t aw = attribute_width(cloud.layout);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out << cloud.coords[i * 3] << ' ' << cloud.coords[i * 3 + 1] << ' ' << cloud.coords[i * 3 + 2];
    for (std::size_t j = 0; j < aw; ++j) out << ' ' << cloud.attributes[i * aw + j];
    if (cloud.has_point_labels()) out << ' ' << cloud.point_labels[i];
    out << "\n";
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

PointCloud load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  char magic[6];
  in.read(magic, 6);
  if (in.gcount() != 6 || std::memcmp(magic, kBinaryMagic, 6) != 0) {
    throw DataError("'" + path.string() + "' is not a GTNPC1 file");
  }
  std::uint8_t layout = 0, has_labels = 0;
  std::uint32_t n = 0;
  in.read(reinterpret_cast<char*>(&layout), 1);
  in.read(reinterpret_cast<char*>(&has_labels), 1);
  in.read(reinterpret_cast<char*>(&n), 4);
  if (!in) throw DataError(path.string() + ": truncated header");
  if (layout > 2 || has_labels > 1) throw DataError(path.string() + ": invalid header fields");
  PointCloud cloud;
  cloud.layout = static_cast<AttributeLayout>(layout);
  const std::size_t aw = attribute_width(cloud.layout);
  const std::size_t channels = 3 + aw;
  cloud.coords.resize(std::size_t{n} * 3);
  cloud.attributes.resize(std::size_t{n} * aw);
  std::vector<float> column(n);
  for (std::size_t c = 0; c < channels; ++c) {
    in.read(reinterpret_cast<char*>(column.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw DataError(path.string() + ": truncated column " + std::to_string(c));
    for (std::size_t i = 0; i < n; ++i) {
      if (c < 3)
        cloud.coords[i * 3 + c] = column[i];
      else
        cloud.attributes[i * aw + (c - 3)] = column[i];
    }
  }
  if (has_labels) {
    std::vector<std::uint32_t> labels(n);
    in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(n * sizeof(std::uint32_t)));
    if (!in) throw DataError(path.string() + ": truncated labels");
    for (auto l : labels) {
      if (l > static_cast<std::uint32_t>(INT32_MAX)) throw DataError(path.string() + ": label out of range");
      cloud.point_labels.push_back(static_cast<std::int32_t>(l));
    }
  }
  validate_or_throw(cloud, path.string());
  return cloud;
}

void save_binary(const PointCloud& cloud, const std::filesystem::path& path) {
  validate_or_throw(cloud, path.string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  const std::uint8_t layout = static_cast<std::uint8_t>(cloud.layout);
  const std::uint8_t has_labels = cloud.has_point_labels() ? 1 : 0;
  const std::uint32_t n = static_cast<std::uint32_t>(cloud.size());
  out.write(kBinaryMagic, 6);
  out.write(reinterpret_cast<const char*>(&layout), 1);
  out.write(reinterpret_cast<const char*>(&has_labels), 1);
  out.write(reinterpret_cast<const char*>(&n), 4);
  const std::size_t aw = attribute_width(cloud.layout);
  std::vector<float> column(n);
  for (std::size_t c = 0; c < 3 + aw; ++c) {
    for (std::size_t i = 0; i < n; ++i)
      column[i] = static_cast<float>(c < 3 ? cloud.coords[i * 3 + c] : cloud.attributes[i * aw + (c - 3)]);
    out.write(reinterpret_cast<const char*>(column.data()), static_cast<std::streamsize>(n * sizeof(float)));
  }
  if (has_labels) {
    std::vector<std::uint32_t> labels(cloud.point_labels.begin(), cloud.point_labels.end());
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(n * sizeof(std::uint32_t)));
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

PointCloud load_cloud(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".txt") return load_text(path);
  if (ext == ".gpc") return load_binary(path);
  throw DataError("unsupported cloud file extension '" + ext + "' for '" + path.string() + "'");
}

Dataset load_directory(const std::filesystem::path& root, Split split, LabelRole role) {
  const auto dir = root / std::string(split_name(split));
  if (!std::filesystem::is_directory(dir)) throw DataError("dataset split directory '" + dir.string() + "' not found");
  Dataset ds;
  ds.split = split;
  std::vector<std::filesystem::path> class_dirs;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw DataError("no class directories under '" + dir.string() + "'");
  std::optional<AttributeLayout> layout;
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    ds.class_names.push_back(class_dirs[c].filename().string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(class_dirs[c])) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".txt" || ext == ".gpc")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::set<std::int32_t> parts;
    for (const auto& f : files) {
      PointCloud cloud = load_cloud(f);
      if (layout && *layout != cloud.layout) {
        throw DataError("'" + f.string() + "' has layout " + std::string(layout_name(cloud.layout)) +
                        ", dataset uses " + std::string(layout_name(*layout)));
      }
      layout = cloud.layout;
      const auto idx = static_cast<std::int32_t>(c);
      if (role == LabelRole::shape_label)
        cloud.shape_label = idx;
      else
        cloud.category = idx;
      parts.insert(cloud.point_labels.begin(), cloud.point_labels.end());
      ds.items.push_back(std::move(cloud));
      ds.item_names.push_back(ds.class_names.back() + "/" + f.stem().string());
    }
    ds.category_parts.emplace_back(parts.begin(), parts.end());
  }
  return ds;
}

PointCloud sample_points(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  const std::size_t total = cloud.size();
  if (total == 0) throw DataError("sample_points: empty cloud");
  if (n == 0) throw DataError("sample_points: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> pick(n);
  if (n <= total) {
    std::vector<std::size_t> perm(total);
    for (std::size_t i = 0; i < total; ++i) perm[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> dist(i, total - 1);
      std::swap(perm[i], perm[dist(rng)]);
    }
    std::copy_n(perm.begin(), n, pick.begin());
  } else {
    std::uniform_int_distribution<std::size_t> dist(0, total - 1);
    for (auto& p : pick) p = dist(rng);
  }
  PointCloud out;
  out.layout = cloud.layout;
  out.shape_label = cloud.shape_label;
  out.category = cloud.category;
  const std::size_t aw = attribute_width(cloud.layout);
  out.coords.reserve(n * 3);
  out.attributes.reserve(n * aw);
  for (auto p : pick) {
    out.coords.insert(out.coords.end(), cloud.coords.begin() + static_cast<std::ptrdiff_t>(p * 3),
                      cloud.coords.begin() + static_cast<std::ptrdiff_t>(p * 3 + 3));
    out.attributes.insert(out.attributes.end(), cloud.attributes.begin() + static_cast<std::ptrdiff_t>(p * aw),
                          cloud.attributes.begin() + static_cast<std::ptrdiff_t>(p * aw + aw));
    if (cloud.has_point_labels()) out.point_labels.push_back(cloud.point_labels[p]);
  }
  return out;
}

PointCloud normalize_unit_sphere(const PointCloud& cloud) {
  const std::size_t n = cloud.size();
  if (n == 0) throw DataError("normalize_unit_sphere: empty cloud");
  PointCloud out = cloud;
  double centroid[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 3; ++j) centroid[j] += cloud.coords[i * 3 + j];
  for (double& c : centroid) c /= static_cast<double>(n);
  double max_r = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r2 = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      out.coords[i * 3 + j] -= centroid[j];
      r2 += out.coords[i * 3 + j] * out.coords[i * 3 + j];
    }
    max_r = std::max(max_r, std::sqrt(r2));
  }
  if (max_r > 0.0)
    for (auto& v : out.coords) v /= max_r;
  return out;
}

std::string_view generator_name(Generator g) {
  switch (g) {
    case Generator::sphere:
      return "sphere";
    case Generator::cube:
      return "cube";
    case Generator::torus:
      return "torus";
    case Generator::plane:
      return "plane";
    case Generator::two_part_rod:
      return "two_part_rod";
  }
  return "sphere";
}

Generator parse_generator(std::string_view name) {
  for (auto g : {Generator::sphere, Generator::cube, Generator::torus, Generator::plane, Generator::two_part_rod})
    if (generator_name(g) == name) return g;
  throw std::invalid_argument("unknown synthetic generator '" + std::string(name) + "'");
}

namespace {

void generate_points(Generator g, std::size_t n, double sigma, std::mt19937_64& rng, PointCloud& cloud) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  cloud.coords.resize(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    double p[3] = {0, 0, 0};
    switch (g) {
      case Generator::sphere: {
        double v[3] = {gauss(rng), gauss(rng), gauss(rng)};
        double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        if (len == 0.0) {
          v[0] = 1.0;
          len = 1.0;
        }
        const double r = 1.0 + sigma * gauss(rng);
        for (int j = 0; j < 3; ++j) p[j] = v[j] / len * r;
        break;
      }
      case Generator::cube: {
        const auto face = static_cast<int>(unit(rng) * 6.0) % 6;
        const int axis = face / 2;
        const double sign = face % 2 == 0 ? 1.0 : -1.0;
        for (int j = 0; j < 3; ++j) p[j] = j == axis ? sign : sym(rng);
        for (double& v : p) v = v * 0.8 + sigma * gauss(rng);
        break;
      }
      case Generator::torus: {
        const double u = 2.0 * std::numbers::pi * unit(rng);
        const double v = 2.0 * std::numbers::pi * unit(rng);
        const double major = 0.7, minor = 0.3;
        p[0] = (major + minor * std::cos(v)) * std::cos(u);
        p[1] = (major + minor * std::cos(v)) * std::sin(u);
        p[2] = minor * std::sin(v);
        for (double& c : p) c += sigma * gauss(rng);
        break;
      }
      case Generator::plane: {
        p[0] = sym(rng);
        p[1] = sym(rng);
        p[2] = sigma * gauss(rng);
        break;
      }
      case Generator::two_part_rod: {
        const double angle = 2.0 * std::numbers::pi * unit(rng);
        const double radius = 0.15;
        p[0] = sym(rng);
        p[1] = radius * std::cos(angle) + sigma * gauss(rng);
        p[2] = radius * std::sin(angle) + sigma * gauss(rng);
        break;
      }
    }
    for (int j = 0; j < 3; ++j) cloud.coords[i * 3 + j] = p[j];
  }
  if (g == Generator::two_part_rod) {
    cloud.point_labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) cloud.point_labels[i] = cloud.coords[i * 3] >= 0.0 ? 1 : 0;
  }
}

}  // namespace

Dataset synth_generate(const SynthSpec& spec) {
  if (spec.generators.empty()) throw std::invalid_argument("synth_generate: no generators");
  if (spec.points_per_cloud == 0) throw std::invalid_argument("synth_generate: points_per_cloud must be >= 1");
  if (!(spec.noise_sigma >= 0.0)) throw std::invalid_argument("synth_generate: noise_sigma must be >= 0");
  Dataset ds;
  ds.split = spec.split;
  const std::uint64_t base = mix_seed(spec.seed, spec.split == Split::train ? 0 : 1);
  for (std::size_t c = 0; c < spec.generators.size(); ++c) {
    const Generator g = spec.generators[c];
    ds.class_names.emplace_back(generator_name(g));
    ds.category_parts.push_back(g == Generator::two_part_rod ? std::vector<std::int32_t>{0, 1}
                                                             : std::vector<std::int32_t>{});
    for (std::size_t i = 0; i < spec.clouds_per_class; ++i) {
      std::mt19937_64 rng(mix_seed(base, c * 1000003ULL + i));
      PointCloud cloud;
      generate_points(g, spec.points_per_cloud, spec.noise_sigma, rng, cloud);
      cloud.shape_label = static_cast<std::int32_t>(c);
      if (g == Generator::two_part_rod) cloud.category = static_cast<std::int32_t>(c);
      ds.items.push_back(std::move(cloud));
      ds.item_names.push_back(std::string(generator_name(g)) + "_" + std::to_string(i));
    }
  }
  bool any_parts = false;
  for (const auto& parts : ds.category_parts) any_parts = any_parts || !parts.empty();
  if (any_parts) ds.part_names = {"negative_half", "positive_half"};
  return ds;
}

PointCloud augment(const PointCloud& cloud, const AugmentConfig& config, std::uint64_t seed) {
  if (config.scale_min > config.scale_max || config.shift < 0.0) throw std::invalid_argument("augment: bad ranges");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale_dist(config.scale_min, std::nextafter(config.scale_max, INFINITY));
  const double s = config.scale_min == config.scale_max ? config.scale_min : scale_dist(rng);
  double shift[3] = {0, 0, 0};
  if (config.shift > 0.0) {
    std::uniform_real_distribution<double> shift_dist(-config.shift, config.shift);
    for (double& t : shift) t = shift_dist(rng);
  }
  PointCloud out = cloud;
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) out.coords[i * 3 + j] = out.coords[i * 3 + j] * s + shift[j];
  return out;
}

}  // namespace gtnet::data
