#pragma once

// Mask <-> signed distance conversions, analytic shape fields and training
// point sampling. Distances are in voxel units, positive inside.

#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "deepgrowth/volume.hpp"

namespace dg {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exact EDT-based SDF. Foreground voxels get +(distance to the nearest
/// background center - 0.5), background voxels -(distance to the nearest
/// foreground center - 0.5). Throws GeometryError for single-phase masks.
SdfGrid mask_to_sdf(const VoxelMask& mask);

/// occupancy = value >= 0.
VoxelMask sdf_to_mask(std::span<const double> values, const Dims& dims, double spacing_mm = 1.0);
inline VoxelMask sdf_to_mask(const SdfGrid& sdf, double spacing_mm = 1.0) {
  return sdf_to_mask(sdf.values, sdf.dims, spacing_mm);
}

/// Field over voxel-index coordinates (z, y, x).
using SdfField = std::function<double(const Vec3&)>;

SdfField analytic_sdf_sphere(const Vec3& center, double radius);
/// Positive inside; exact zero set on the ellipsoid surface, approximately
/// Euclidean elsewhere.
SdfField analytic_sdf_ellipsoid(const Vec3& center, const Vec3& radii);

/// Mask of voxels whose center satisfies field >= 0.
VoxelMask voxelize(const SdfField& field, const Dims& dims, double spacing_mm = 1.0);
/// Field evaluated at every voxel center.
SdfGrid sample_field(const SdfField& field, const Dims& dims);

struct SamplePoint {
  Vec3 coords;  // normalized, [-1, 1]^3
  double target_sdf = 0.0;
};

struct SamplingOptions {
  std::size_t n = 4096;
  double near_surface_fraction = 0.5;
  double clamp_dist = 8.0;
  double band = 2.0;  // voxels
};

/// Trilinear read of the grid at a normalized coordinate.
double sdf_at(const SdfGrid& sdf, const Vec3& normalized);

std::vector<SamplePoint> sample_training_points(const SdfGrid& sdf, const SamplingOptions& opt,
                                                std::mt19937_64& rng);

}  // namespace dg
