#pragma once

// Data-parallel numeric kernels. Every kernel parallelizes over independent
// outputs only (no floating-point reductions across threads), so results are
// bit-identical regardless of OMP_NUM_THREADS. Serial reference versions used
// by tests and the benchmark live in tests/reference.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace dg::kernels {

struct ConvGeometry {
  std::size_t in_channels = 1;
  std::array<std::size_t, 3> dims{1, 1, 1};  // D, H, W
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_dim(std::size_t axis) const {
    return (dims[axis] + 2 * padding - kernel) / stride + 1;
  }
  std::size_t out_voxels() const { return out_dim(0) * out_dim(1) * out_dim(2); }
  std::size_t in_voxels() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t patch_size() const { return in_channels * kernel * kernel * kernel; }
};

/// Row-major C = alpha * op(A) * op(B) + beta * C, backed by Eigen.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, const double* b, double beta, double* c);

/// Unfolds input [C,D,H,W] into col [C*k^3, D'*H'*W'] with zero padding.
void im2col3d(const ConvGeometry& g, std::span<const double> input, std::span<double> col);

/// Adjoint of im2col3d: scatters col back, accumulating into input_grad.
void col2im3d(const ConvGeometry& g, std::span<const double> col, std::span<double> input_grad);

void conv3d_forward(const ConvGeometry& g, std::size_t out_channels,
                    std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);

/// Accumulates into whichever gradient spans are non-empty.
void conv3d_backward(const ConvGeometry& g, std::size_t out_channels,
                     std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias);

/// y[r,:] = W x[r,:] + b. The summation order per row is independent of the
/// number of rows, so a batched call matches a row-by-row call exactly.
void linear_forward(std::size_t rows, std::size_t in_features, std::size_t out_features,
                    std::span<const double> x, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> y);

void linear_backward(std::size_t rows, std::size_t in_features, std::size_t out_features,
                     std::span<const double> x, std::span<const double> weight,
                     std::span<const double> grad_y, std::span<double> grad_x,
                     std::span<double> grad_weight, std::span<double> grad_bias);

/// Corner-aligned trilinear sampling of grid [C,d,h,w] at points [P,3]
/// (coordinate k addresses array axis k; -1 maps to node 0, +1 to node n-1;
/// outside coordinates are clamped). Writes out [P,C].
void trilinear_sample(std::size_t channels, const std::array<std::size_t, 3>& dims,
                      std::span<const double> grid, std::span<const double> points,
                      std::span<double> out);

void trilinear_sample_backward(std::size_t channels, const std::array<std::size_t, 3>& dims,
                               std::span<const double> grid, std::span<const double> points,
                               std::span<const double> grad_out, std::span<double> grad_grid,
                               std::span<double> grad_points);

/// Exact squared Euclidean distance (in voxel units) from every voxel center
/// to the nearest voxel with feature != 0. Voxels with no feature anywhere get
/// kNoFeature. Separable lower-envelope algorithm, one pass per axis.
inline constexpr double kNoFeature = 1e30;
void squared_edt(const std::array<std::size_t, 3>& dims, std::span<const std::uint8_t> feature,
                 std::span<double> out);

}  // namespace dg::kernels
