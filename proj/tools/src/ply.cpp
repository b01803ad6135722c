#include "gtnet/cli/ply.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gtnet::cli {
namespace {

// Hues stepped by the golden angle so neighbouring labels stay distinct;
// three value levels keep the 50 entries apart.
std::array<std::array<std::uint8_t, 3>, kPaletteSize> build_palette() {
  std::array<std::array<std::uint8_t, 3>, kPaletteSize> table{};
  for (std::size_t i = 0; i < kPaletteSize; ++i) {
    const double h = std::fmod(static_cast<double>(i) * 0.6180339887498949, 1.0) * 6.0;
    const double s = 0.75;
    const double v = 1.0 - 0.2 * static_cast<double>(i % 3);
    const int sector = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    double r = 0, g = 0, b = 0;
    switch (sector) {
      case 0: r = v, g = t, b = p; break;
      case 1: r = q, g = v, b = p; break;
      case 2: r = p, g = v, b = t; break;
      case 3: r = p, g = q, b = v; break;
      case 4: r = t, g = p, b = v; break;
      default: r = v, g = p, b = q; break;
    }
    auto byte = [](double x) { return static_cast<std::uint8_t>(std::lround(x * 255.0)); };
    table[i] = {byte(r), byte(g), byte(b)};
  }
  return table;
}

}  // namespace

std::array<std::uint8_t, 3> palette_color(std::int64_t label) {
  static const auto table = build_palette();
  const auto n = static_cast<std::int64_t>(kPaletteSize);
  return table[static_cast<std::size_t>(((label % n) + n) % n)];
}

void write_ply(const std::filesystem::path& path, std::span<const double> coords,
               std::span<const std::int64_t> labels) {
  if (coords.size() != labels.size() * 3) throw std::invalid_argument("write_ply: one label per point required");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << labels.size()
      << "\nproperty double x\nproperty double y\nproperty double z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  out.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = palette_color(labels[i]);
    out << coords[i * 3] << ' ' << coords[i * 3 + 1] << ' ' << coords[i * 3 + 2] << ' ' << int(c[0]) << ' '
        << int(c[1]) << ' ' << int(c[2]) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

PlyVertices read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::size_t count = 0;
  bool ascii = false;
  while (std::getline(in, line)) {
    if (line == "end_header") break;
    std::istringstream ss(line);
    std::string a, b;
    ss >> a >> b;
    if (a == "format") ascii = b == "ascii";
    if (a == "element" && b == "vertex") ss >> count;
  }
  if (!ascii) throw std::runtime_error(path.string() + ": only ASCII PLY is supported");
  PlyVertices v;
  v.coords.resize(count * 3);
  v.colors.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    int r, g, b;
    if (!(in >> v.coords[i * 3] >> v.coords[i * 3 + 1] >> v.coords[i * 3 + 2] >> r >> g >> b))
      throw std::runtime_error(path.string() + ": truncated vertex list");
    v.colors[i] = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
  }
  return v;
}

}  // namespace gtnet::cli
