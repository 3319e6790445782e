#include "rownav/cloud_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace rownav {

namespace {

enum class CloudFormat { kText, kBinary };

CloudFormat format_of(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".xyz" || ext == ".txt") return CloudFormat::kText;
  if (ext == ".bin") return CloudFormat::kBinary;
  throw std::runtime_error("unsupported cloud extension '" + ext + "' for " + path.string());
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

}  // namespace

std::vector<Point3> read_cloud(const std::filesystem::path& path) {
  const CloudFormat format = format_of(path);
  std::ifstream in(path, format == CloudFormat::kBinary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot open " + path.string());

  std::vector<Point3> cloud;
  if (format == CloudFormat::kText) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      std::istringstream fields(line);
      Point3 p;
      std::string extra;
      if (!(fields >> p.x >> p.y >> p.z) || (fields >> extra) || !std::isfinite(p.x) ||
          !std::isfinite(p.y) || !std::isfinite(p.z)) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": expected three finite numbers");
      }
      cloud.push_back(p);
    }
    return cloud;
  }

  std::array<char, 12> record{};
  while (in.read(record.data(), record.size())) {
    std::array<float, 3> xyz{};
    for (std::size_t k = 0; k < 3; ++k) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, record.data() + 4 * k, 4);
      bits = to_little_endian(bits);
      xyz[k] = std::bit_cast<float>(bits);
    }
    cloud.push_back(Point3{xyz[0], xyz[1], xyz[2]});
  }
  if (in.gcount() != 0) {
    throw std::runtime_error(path.string() + ": trailing bytes, size is not a multiple of 12");
  }
  return cloud;
}

void write_cloud(const std::filesystem::path& path, std::span<const Point3> cloud) {
  const CloudFormat format = format_of(path);
  std::ofstream out(path, format == CloudFormat::kBinary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (format == CloudFormat::kText) {
    out.precision(9);
    for (const Point3& p : cloud) out << p.x << ' ' << p.y << ' ' << p.z << '\n';
    return;
  }
  for (const Point3& p : cloud) {
    for (double c : {p.x, p.y, p.z}) {
      const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(c)));
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
}

void write_pgm(const std::filesystem::path& path, const OccupancyGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << grid.nx() << ' ' << grid.ny() << "\n255\n";
  for (int j = grid.ny_half(); j >= -grid.ny_half(); --j) {
    for (int i = 0; i < grid.nx(); ++i) {
      out.put(grid.occupied(i, j) ? static_cast<char>(255) : static_cast<char>(0));
    }
  }
}

}  // namespace rownav
