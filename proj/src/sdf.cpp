#include "deepgrowth/sdf.hpp"

#include <algorithm>
#include <cmath>

#include "deepgrowth/kernels.hpp"

namespace dg {

SdfGrid mask_to_sdf(const VoxelMask& mask) {
  const std::size_t n = voxel_count(mask.dims);
  if (mask.occupancy.size() != n) throw GeometryError("mask_to_sdf: occupancy size does not match dims");
  const std::size_t fg = mask.count();
  if (fg == 0 || fg == n)
    throw GeometryError("mask_to_sdf: mask must contain both foreground and background voxels");

  std::vector<std::uint8_t> background(n);
  for (std::size_t i = 0; i < n; ++i) background[i] = mask.occupancy[i] ? 0 : 1;
  std::vector<double> to_fg(n), to_bg(n);
  kernels::squared_edt(mask.dims, mask.occupancy, to_fg);
  kernels::squared_edt(mask.dims, background, to_bg);

  SdfGrid out{mask.dims, std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i)
    out.values[i] = mask.occupancy[i] ? std::sqrt(to_bg[i]) - 0.5 : -(std::sqrt(to_fg[i]) - 0.5);
  return out;
}

VoxelMask sdf_to_mask(std::span<const double> values, const Dims& dims, double spacing_mm) {
  VoxelMask m(dims, spacing_mm);
  for (std::size_t i = 0; i < values.size(); ++i) m.occupancy[i] = values[i] >= 0.0 ? 1 : 0;
  return m;
}

SdfField analytic_sdf_sphere(const Vec3& center, double radius) {
  if (!(radius > 0.0)) throw GeometryError("sphere radius must be positive");
  return [center, radius](const Vec3& p) {
    const double dz = p[0] - center[0], dy = p[1] - center[1], dx = p[2] - center[2];
    return radius - std::sqrt(dz * dz + dy * dy + dx * dx);
  };
}

SdfField analytic_sdf_ellipsoid(const Vec3& center, const Vec3& radii) {
  for (double r : radii)
    if (!(r > 0.0)) throw GeometryError("ellipsoid radii must be positive");
  const double r_min = std::min({radii[0], radii[1], radii[2]});
  return [center, radii, r_min](const Vec3& p) {
    // Gradient-normalized implicit: k0 (k0 - 1) / k1 with k0 = |q/r|, k1 = |q/r^2|.
    double k0 = 0.0, k1 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double q = p[a] - center[a];
      k0 += (q / radii[a]) * (q / radii[a]);
      k1 += (q / (radii[a] * radii[a])) * (q / (radii[a] * radii[a]));
    }
    k0 = std::sqrt(k0);
    k1 = std::sqrt(k1);
    if (k1 == 0.0) return r_min;
    return -k0 * (k0 - 1.0) / k1;
  };
}

VoxelMask voxelize(const SdfField& field, const Dims& dims, double spacing_mm) {
  VoxelMask m(dims, spacing_mm);
  for (std::size_t z = 0; z < dims[0]; ++z)
    for (std::size_t y = 0; y < dims[1]; ++y)
      for (std::size_t x = 0; x < dims[2]; ++x)
        m.set(z, y, x, field({double(z), double(y), double(x)}) >= 0.0);
  return m;
}

SdfGrid sample_field(const SdfField& field, const Dims& dims) {
  SdfGrid g{dims, std::vector<double>(voxel_count(dims))};
  for (std::size_t z = 0; z < dims[0]; ++z)
    for (std::size_t y = 0; y < dims[1]; ++y)
      for (std::size_t x = 0; x < dims[2]; ++x)
        g.values[flat_index(dims, z, y, x)] = field({double(z), double(y), double(x)});
  return g;
}

double sdf_at(const SdfGrid& sdf, const Vec3& normalized) {
  double out = 0.0;
  kernels::trilinear_sample(1, sdf.dims, sdf.values, std::span<const double>(normalized.data(), 3),
                            std::span<double>(&out, 1));
  return out;
}

std::vector<SamplePoint> sample_training_points(const SdfGrid& sdf, const SamplingOptions& opt,
                                                std::mt19937_64& rng) {
  if (opt.n == 0) throw GeometryError("sample_training_points: n must be at least 1");
  if (opt.near_surface_fraction < 0.0 || opt.near_surface_fraction > 1.0)
    throw GeometryError("sample_training_points: near_surface_fraction must lie in [0, 1]");

  std::vector<std::size_t> band;
  for (std::size_t i = 0; i < sdf.values.size(); ++i)
    if (std::abs(sdf.values[i]) < opt.band) band.push_back(i);

  std::size_t n_near = static_cast<std::size_t>(std::llround(opt.n * opt.near_surface_fraction));
  if (band.empty()) n_near = 0;

  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  std::uniform_int_distribution<std::size_t> pick(0, band.empty() ? 0 : band.size() - 1);

  const Dims& d = sdf.dims;
  std::vector<SamplePoint> out;
  out.reserve(opt.n);
  for (std::size_t s = 0; s < opt.n; ++s) {
    SamplePoint p;
    if (s < n_near) {
      const std::size_t idx = band[pick(rng)];
      const std::array<std::size_t, 3> vox = {idx / (d[1] * d[2]), (idx / d[2]) % d[1], idx % d[2]};
      for (int a = 0; a < 3; ++a) {
        const double v = static_cast<double>(vox[a]) + jitter(rng);
        p.coords[a] = std::clamp(voxel_to_normalized(v, d[a]), -1.0, 1.0);
      }
    } else {
      for (int a = 0; a < 3; ++a) p.coords[a] = unit(rng);
    }
    p.target_sdf = std::clamp(sdf_at(sdf, p.coords), -opt.clamp_dist, opt.clamp_dist);
    out.push_back(p);
  }
  return out;
}

}  // namespace dg
