#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace dg {

/// Volume extent (D, H, W); storage is row-major with W fastest.
using Dims = std::array<std::size_t, 3>;
using Vec3 = std::array<double, 3>;

inline std::size_t voxel_count(const Dims& d) { return d[0] * d[1] * d[2]; }
inline std::size_t flat_index(const Dims& d, std::size_t z, std::size_t y, std::size_t x) {
  return (z * d[1] + y) * d[2] + x;
}

/// Corner-aligned normalized coordinate of voxel center i on an axis of n
/// voxels: 0 -> -1, n-1 -> +1.
inline double voxel_to_normalized(double i, std::size_t n) {
  return n < 2 ? 0.0 : -1.0 + 2.0 * i / static_cast<double>(n - 1);
}
inline double normalized_to_voxel(double p, std::size_t n) {
  return n < 2 ? 0.0 : (p + 1.0) * 0.5 * static_cast<double>(n - 1);
}

struct VoxelMask {
  Dims dims{0, 0, 0};
  std::vector<std::uint8_t> occupancy;  // 0 or 1
  double spacing_mm = 1.0;

  VoxelMask() = default;
  explicit VoxelMask(Dims d, double spacing = 1.0)
      : dims(d), occupancy(voxel_count(d), 0), spacing_mm(spacing) {}

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : occupancy) n += v;
    return n;
  }
  std::uint8_t at(std::size_t z, std::size_t y, std::size_t x) const {
    return occupancy[flat_index(dims, z, y, x)];
  }
  void set(std::size_t z, std::size_t y, std::size_t x, bool on) {
    occupancy[flat_index(dims, z, y, x)] = on ? 1 : 0;
  }
  bool operator==(const VoxelMask&) const = default;
};

/// Signed distances in voxel units, positive inside.
struct SdfGrid {
  Dims dims{0, 0, 0};
  std::vector<double> values;
};

/// Scan intensities, real32, normalized to [-1, 1].
struct Image {
  Dims dims{0, 0, 0};
  std::vector<float> values;
  bool operator==(const Image&) const = default;
};

}  // namespace dg
