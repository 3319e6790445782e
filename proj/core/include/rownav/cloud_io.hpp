#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "rownav/pcd_pipeline.hpp"
#include "rownav/types.hpp"

namespace rownav {

/// Point cloud files. The format follows the extension:
///   .xyz / .txt  one "x y z" triple per line, meters; blank lines and lines
///                starting with '#' are skipped
///   .bin         packed little-endian float32 triples
/// Throws std::runtime_error on unreadable or malformed input.
std::vector<Point3> read_cloud(const std::filesystem::path& path);
void write_cloud(const std::filesystem::path& path, std::span<const Point3> cloud);

/// Binary PGM (P5): one row per lateral cell, top row = leftmost (largest y),
/// columns = forward cells. 0 = free, 255 = occupied.
void write_pgm(const std::filesystem::path& path, const OccupancyGrid& grid);

}  // namespace rownav
