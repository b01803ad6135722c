#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace gtnet::cli {

inline constexpr std::size_t kPaletteSize = 50;

/// Fixed label colours; labels wrap modulo the palette size.
std::array<std::uint8_t, 3> palette_color(std::int64_t label);

/// ASCII PLY with x y z (double) and red green blue (uchar) per vertex.
void write_ply(const std::filesystem::path& path, std::span<const double> coords,
               std::span<const std::int64_t> labels);

struct PlyVertices {
  std::vector<double> coords;
  std::vector<std::array<std::uint8_t, 3>> colors;
};
PlyVertices read_ply(const std::filesystem::path& path);

}  // namespace gtnet::cli
