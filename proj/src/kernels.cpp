#include "deepgrowth/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

namespace dg::kernels {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, const double* b, double beta, double* c) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ColMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
  if (m == 0 || n == 0) return;
  const auto M = static_cast<Eigen::Index>(m), N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k);
  Eigen::Map<RowMat> C(c, M, N);
  if (beta == 0.0) C.setZero();
  else if (beta != 1.0) C *= beta;
  if (k == 0) return;
  // A row-major [r x s] buffer read as column-major [s x r] is its transpose.
  auto run = [&](const auto& A, const auto& B) { C.noalias() += alpha * (A * B); };
  if (!trans_a && !trans_b) run(Eigen::Map<const RowMat>(a, M, K), Eigen::Map<const RowMat>(b, K, N));
  else if (!trans_a) run(Eigen::Map<const RowMat>(a, M, K), Eigen::Map<const ColMat>(b, K, N));
  else if (!trans_b) run(Eigen::Map<const ColMat>(a, M, K), Eigen::Map<const RowMat>(b, K, N));
  else run(Eigen::Map<const ColMat>(a, M, K), Eigen::Map<const ColMat>(b, K, N));
}

void im2col3d(const ConvGeometry& g, std::span<const double> input, std::span<double> col) {
  const std::size_t k = g.kernel;
  const std::size_t od = g.out_dim(0), oh = g.out_dim(1), ow = g.out_dim(2);
  const auto [D, H, W] = g.dims;
  const std::size_t n_out = od * oh * ow;
  const auto rows = static_cast<std::ptrdiff_t>(g.patch_size());
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t row = 0; row < rows; ++row) {
    const auto r = static_cast<std::size_t>(row);
    const std::size_t c = r / (k * k * k);
    const std::size_t kd = (r / (k * k)) % k;
    const std::size_t kh = (r / k) % k;
    const std::size_t kw = r % k;
    const double* src = input.data() + c * D * H * W;
    double* dst = col.data() + r * n_out;
    for (std::size_t z = 0; z < od; ++z) {
      const auto iz = static_cast<std::ptrdiff_t>(z * g.stride + kd) - pad;
      for (std::size_t y = 0; y < oh; ++y) {
        const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + kh) - pad;
        double* out_row = dst + (z * oh + y) * ow;
        if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(D) || iy < 0 ||
            iy >= static_cast<std::ptrdiff_t>(H)) {
          std::fill(out_row, out_row + ow, 0.0);
          continue;
        }
        const double* in_row = src + (static_cast<std::size_t>(iz) * H + static_cast<std::size_t>(iy)) * W;
        for (std::size_t x = 0; x < ow; ++x) {
          const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kw) - pad;
          out_row[x] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) ? 0.0 : in_row[ix];
        }
      }
    }
  }
}

void col2im3d(const ConvGeometry& g, std::span<const double> col, std::span<double> input_grad) {
  const std::size_t k = g.kernel;
  const std::size_t od = g.out_dim(0), oh = g.out_dim(1), ow = g.out_dim(2);
  const auto [D, H, W] = g.dims;
  const std::size_t n_out = od * oh * ow;
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto channels = static_cast<std::ptrdiff_t>(g.in_channels);

  // One thread per input channel: rows of a channel only touch that channel.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ch = 0; ch < channels; ++ch) {
    const auto c = static_cast<std::size_t>(ch);
    double* dst = input_grad.data() + c * D * H * W;
    for (std::size_t kk = 0; kk < k * k * k; ++kk) {
      const std::size_t kd = kk / (k * k), kh = (kk / k) % k, kw = kk % k;
      const double* src = col.data() + (c * k * k * k + kk) * n_out;
      for (std::size_t z = 0; z < od; ++z) {
        const auto iz = static_cast<std::ptrdiff_t>(z * g.stride + kd) - pad;
        if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(D)) continue;
        for (std::size_t y = 0; y < oh; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y * g.stride + kh) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          double* in_row = dst + (static_cast<std::size_t>(iz) * H + static_cast<std::size_t>(iy)) * W;
          const double* col_row = src + (z * oh + y) * ow;
          for (std::size_t x = 0; x < ow; ++x) {
            const auto ix = static_cast<std::ptrdiff_t>(x * g.stride + kw) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) in_row[ix] += col_row[x];
          }
        }
      }
    }
  }
}

namespace {

bool is_pointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.padding == 0;
}

}  // namespace

void conv3d_forward(const ConvGeometry& g, std::size_t out_channels,
                    std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const std::size_t n_out = g.out_voxels();
  const std::size_t patch = g.patch_size();
  const double* cols = input.data();
  std::vector<double> buffer;
  if (!is_pointwise(g)) {
    buffer.resize(patch * n_out);
    im2col3d(g, input, buffer);
    cols = buffer.data();
  }
  gemm(false, false, out_channels, n_out, patch, 1.0, weight.data(), cols, 0.0, out.data());
  const auto oc = static_cast<std::ptrdiff_t>(out_channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t o = 0; o < oc; ++o) {
    const double b = bias[static_cast<std::size_t>(o)];
    double* row = out.data() + static_cast<std::size_t>(o) * n_out;
    for (std::size_t i = 0; i < n_out; ++i) row[i] += b;
  }
}

void conv3d_backward(const ConvGeometry& g, std::size_t out_channels,
                     std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  const std::size_t n_out = g.out_voxels();
  const std::size_t patch = g.patch_size();
  const bool pointwise = is_pointwise(g);

  if (!grad_bias.empty()) {
    for (std::size_t o = 0; o < out_channels; ++o) {
      const double* row = grad_out.data() + o * n_out;
      double s = 0.0;
      for (std::size_t i = 0; i < n_out; ++i) s += row[i];
      grad_bias[o] += s;
    }
  }
  if (!grad_weight.empty()) {
    const double* cols = input.data();
    std::vector<double> buffer;
    if (!pointwise) {
      buffer.resize(patch * n_out);
      im2col3d(g, input, buffer);
      cols = buffer.data();
    }
    gemm(false, true, out_channels, patch, n_out, 1.0, grad_out.data(), cols, 1.0,
         grad_weight.data());
  }
  if (!grad_input.empty()) {
    if (pointwise) {
      gemm(true, false, patch, n_out, out_channels, 1.0, weight.data(), grad_out.data(), 1.0,
           grad_input.data());
    } else {
      std::vector<double> dcol(patch * n_out);
      gemm(true, false, patch, n_out, out_channels, 1.0, weight.data(), grad_out.data(), 0.0,
           dcol.data());
      col2im3d(g, dcol, grad_input);
    }
  }
}

void linear_forward(std::size_t rows, std::size_t in_features, std::size_t out_features,
                    std::span<const double> x, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> y) {
  std::vector<double> wt(in_features * out_features);
  for (std::size_t o = 0; o < out_features; ++o)
    for (std::size_t i = 0; i < in_features; ++i)
      wt[i * out_features + o] = weight[o * in_features + i];

  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t rr = 0; rr < n; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    double* acc = y.data() + r * out_features;
    const double* xr = x.data() + r * in_features;
    for (std::size_t o = 0; o < out_features; ++o) acc[o] = bias[o];
    for (std::size_t i = 0; i < in_features; ++i) {
      const double xi = xr[i];
      const double* wrow = wt.data() + i * out_features;
      for (std::size_t o = 0; o < out_features; ++o) acc[o] += xi * wrow[o];
    }
  }
}

void linear_backward(std::size_t rows, std::size_t in_features, std::size_t out_features,
                     std::span<const double> x, std::span<const double> weight,
                     std::span<const double> grad_y, std::span<double> grad_x,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  if (!grad_x.empty())
    gemm(false, false, rows, in_features, out_features, 1.0, grad_y.data(), weight.data(), 1.0,
         grad_x.data());
  if (!grad_weight.empty())
    gemm(true, false, out_features, in_features, rows, 1.0, grad_y.data(), x.data(), 1.0,
         grad_weight.data());
  if (!grad_bias.empty()) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gy = grad_y.data() + r * out_features;
      for (std::size_t o = 0; o < out_features; ++o) grad_bias[o] += gy[o];
    }
  }
}

namespace {

struct AxisWeight {
  std::size_t lo = 0, hi = 0;
  double t = 0.0;       // weight of hi
  double dt_dp = 0.0;   // d t / d coordinate, zero when clamped
};

AxisWeight axis_weight(double p, std::size_t n) {
  AxisWeight a;
  if (n < 2) return a;
  const double scale = 0.5 * static_cast<double>(n - 1);
  double u = (p + 1.0) * scale;
  a.dt_dp = scale;
  if (p < -1.0) {
    u = 0.0;
    a.dt_dp = 0.0;
  } else if (p > 1.0) {
    u = static_cast<double>(n - 1);
    a.dt_dp = 0.0;
  }
  auto lo = static_cast<std::size_t>(std::floor(u));
  if (lo > n - 2) lo = n - 2;
  a.lo = lo;
  a.hi = lo + 1;
  a.t = u - static_cast<double>(lo);
  return a;
}

}  // namespace

void trilinear_sample(std::size_t channels, const std::array<std::size_t, 3>& dims,
                      std::span<const double> grid, std::span<const double> points,
                      std::span<double> out) {
  const std::size_t n_points = points.size() / 3;
  const auto [d, h, w] = dims;
  const std::size_t plane = d * h * w;
  const auto n = static_cast<std::ptrdiff_t>(n_points);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pp = 0; pp < n; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    const AxisWeight az = axis_weight(points[3 * p + 0], d);
    const AxisWeight ay = axis_weight(points[3 * p + 1], h);
    const AxisWeight ax = axis_weight(points[3 * p + 2], w);
    const std::array<std::size_t, 8> idx = {
        (az.lo * h + ay.lo) * w + ax.lo, (az.lo * h + ay.lo) * w + ax.hi,
        (az.lo * h + ay.hi) * w + ax.lo, (az.lo * h + ay.hi) * w + ax.hi,
        (az.hi * h + ay.lo) * w + ax.lo, (az.hi * h + ay.lo) * w + ax.hi,
        (az.hi * h + ay.hi) * w + ax.lo, (az.hi * h + ay.hi) * w + ax.hi};
    const std::array<double, 8> wt = {
        (1 - az.t) * (1 - ay.t) * (1 - ax.t), (1 - az.t) * (1 - ay.t) * ax.t,
        (1 - az.t) * ay.t * (1 - ax.t),       (1 - az.t) * ay.t * ax.t,
        az.t * (1 - ay.t) * (1 - ax.t),       az.t * (1 - ay.t) * ax.t,
        az.t * ay.t * (1 - ax.t),             az.t * ay.t * ax.t};
    double* o = out.data() + p * channels;
    for (std::size_t c = 0; c < channels; ++c) {
      const double* g = grid.data() + c * plane;
      double s = 0.0;
      for (std::size_t k = 0; k < 8; ++k) s += wt[k] * g[idx[k]];
      o[c] = s;
    }
  }
}

void trilinear_sample_backward(std::size_t channels, const std::array<std::size_t, 3>& dims,
                               std::span<const double> grid, std::span<const double> points,
                               std::span<const double> grad_out, std::span<double> grad_grid,
                               std::span<double> grad_points) {
  const std::size_t n_points = points.size() / 3;
  const auto [d, h, w] = dims;
  const std::size_t plane = d * h * w;

  if (!grad_grid.empty()) {
    // Scatter is race-free when each thread owns one channel slice.
    const auto nc = static_cast<std::ptrdiff_t>(channels);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t cc = 0; cc < nc; ++cc) {
      const auto c = static_cast<std::size_t>(cc);
      double* g = grad_grid.data() + c * plane;
      for (std::size_t p = 0; p < n_points; ++p) {
        const double go = grad_out[p * channels + c];
        if (go == 0.0) continue;
        const AxisWeight az = axis_weight(points[3 * p + 0], d);
        const AxisWeight ay = axis_weight(points[3 * p + 1], h);
        const AxisWeight ax = axis_weight(points[3 * p + 2], w);
        g[(az.lo * h + ay.lo) * w + ax.lo] += go * (1 - az.t) * (1 - ay.t) * (1 - ax.t);
        g[(az.lo * h + ay.lo) * w + ax.hi] += go * (1 - az.t) * (1 - ay.t) * ax.t;
        g[(az.lo * h + ay.hi) * w + ax.lo] += go * (1 - az.t) * ay.t * (1 - ax.t);
        g[(az.lo * h + ay.hi) * w + ax.hi] += go * (1 - az.t) * ay.t * ax.t;
        g[(az.hi * h + ay.lo) * w + ax.lo] += go * az.t * (1 - ay.t) * (1 - ax.t);
        g[(az.hi * h + ay.lo) * w + ax.hi] += go * az.t * (1 - ay.t) * ax.t;
        g[(az.hi * h + ay.hi) * w + ax.lo] += go * az.t * ay.t * (1 - ax.t);
        g[(az.hi * h + ay.hi) * w + ax.hi] += go * az.t * ay.t * ax.t;
      }
    }
  }

  if (!grad_points.empty()) {
    const auto n = static_cast<std::ptrdiff_t>(n_points);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t pp = 0; pp < n; ++pp) {
      const auto p = static_cast<std::size_t>(pp);
      const AxisWeight az = axis_weight(points[3 * p + 0], d);
      const AxisWeight ay = axis_weight(points[3 * p + 1], h);
      const AxisWeight ax = axis_weight(points[3 * p + 2], w);
      double gz = 0.0, gy = 0.0, gx = 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        const double go = grad_out[p * channels + c];
        const double* g = grid.data() + c * plane;
        auto at = [&](std::size_t z, std::size_t y, std::size_t x) { return g[(z * h + y) * w + x]; };
        const double c000 = at(az.lo, ay.lo, ax.lo), c001 = at(az.lo, ay.lo, ax.hi);
        const double c010 = at(az.lo, ay.hi, ax.lo), c011 = at(az.lo, ay.hi, ax.hi);
        const double c100 = at(az.hi, ay.lo, ax.lo), c101 = at(az.hi, ay.lo, ax.hi);
        const double c110 = at(az.hi, ay.hi, ax.lo), c111 = at(az.hi, ay.hi, ax.hi);
        // Bilinear faces at lo/hi along each axis.
        const double lo_z = (1 - ay.t) * ((1 - ax.t) * c000 + ax.t * c001) +
                            ay.t * ((1 - ax.t) * c010 + ax.t * c011);
        const double hi_z = (1 - ay.t) * ((1 - ax.t) * c100 + ax.t * c101) +
                            ay.t * ((1 - ax.t) * c110 + ax.t * c111);
        const double lo_y = (1 - az.t) * ((1 - ax.t) * c000 + ax.t * c001) +
                            az.t * ((1 - ax.t) * c100 + ax.t * c101);
        const double hi_y = (1 - az.t) * ((1 - ax.t) * c010 + ax.t * c011) +
                            az.t * ((1 - ax.t) * c110 + ax.t * c111);
        const double lo_x = (1 - az.t) * ((1 - ay.t) * c000 + ay.t * c010) +
                            az.t * ((1 - ay.t) * c100 + ay.t * c110);
        const double hi_x = (1 - az.t) * ((1 - ay.t) * c001 + ay.t * c011) +
                            az.t * ((1 - ay.t) * c101 + ay.t * c111);
        gz += go * (hi_z - lo_z);
        gy += go * (hi_y - lo_y);
        gx += go * (hi_x - lo_x);
      }
      grad_points[3 * p + 0] += gz * az.dt_dp;
      grad_points[3 * p + 1] += gy * ay.dt_dp;
      grad_points[3 * p + 2] += gx * ax.dt_dp;
    }
  }
}

namespace {

// 1D squared distance transform of sampled function f (lower envelope of
// parabolas rooted at finite samples). Entries >= kNoFeature are ignored.
void edt_1d(const double* f, std::size_t n, double* out, std::vector<std::size_t>& v,
            std::vector<double>& z) {
  v.resize(n);
  z.resize(n + 1);
  std::size_t count = 0;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] >= kNoFeature) continue;
    const double fq = f[q] + static_cast<double>(q * q);
    while (count > 0) {
      const std::size_t p = v[count - 1];
      const double s = (fq - (f[p] + static_cast<double>(p * p))) /
                       (2.0 * static_cast<double>(q) - 2.0 * static_cast<double>(p));
      if (s <= z[count - 1]) {
        --count;
      } else {
        z[count] = s;
        break;
      }
    }
    if (count == 0) z[0] = -1e300;
    v[count] = q;
    ++count;
    z[count] = 1e300;
  }
  if (count == 0) {
    std::fill(out, out + n, kNoFeature);
    return;
  }
  std::size_t j = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[j + 1] < static_cast<double>(q)) ++j;
    const double diff = static_cast<double>(q) - static_cast<double>(v[j]);
    out[q] = diff * diff + f[v[j]];
  }
}

// Runs edt_1d over every line along `axis` of a [D,H,W] volume, in place.
void edt_pass(const std::array<std::size_t, 3>& dims, std::size_t axis, std::span<double> data) {
  const std::array<std::size_t, 3> strides = {dims[1] * dims[2], dims[2], 1};
  const std::size_t a = (axis + 1) % 3, b = (axis + 2) % 3;
  const std::size_t n = dims[axis];
  const auto lines = static_cast<std::ptrdiff_t>(dims[a] * dims[b]);
#pragma omp parallel
  {
    std::vector<double> line(n), result(n), z;
    std::vector<std::size_t> v;
#pragma omp for schedule(static)
    for (std::ptrdiff_t li = 0; li < lines; ++li) {
      const auto l = static_cast<std::size_t>(li);
      const std::size_t base = (l / dims[b]) * strides[a] + (l % dims[b]) * strides[b];
      for (std::size_t i = 0; i < n; ++i) line[i] = data[base + i * strides[axis]];
      edt_1d(line.data(), n, result.data(), v, z);
      for (std::size_t i = 0; i < n; ++i) data[base + i * strides[axis]] = result[i];
    }
  }
}

}  // namespace

void squared_edt(const std::array<std::size_t, 3>& dims, std::span<const std::uint8_t> feature,
                 std::span<double> out) {
  const std::size_t total = dims[0] * dims[1] * dims[2];
  for (std::size_t i = 0; i < total; ++i) out[i] = feature[i] ? 0.0 : kNoFeature;
  edt_pass(dims, 2, out);
  edt_pass(dims, 1, out);
  edt_pass(dims, 0, out);
}

}  // namespace dg::kernels
