#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "deepgrowth/autodiff.hpp"
#include "deepgrowth/volume.hpp"

namespace dg::testing {

inline ad::Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                                bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = u(rng);
  return ad::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Contracts an output with fixed random weights so every Jacobian row is exercised.
inline ad::Tensor probe_sum(const ad::Tensor& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ad::sum(ad::mul(out, random_tensor(out.shape(), rng, -1.0, 1.0, false)));
}

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

/// Central differences (step h) against backward() for every element of every
/// input, or for `max_per_input` randomly chosen elements when nonzero.
inline GradCheck check_gradients(std::vector<ad::Tensor> inputs, const std::function<ad::Tensor()>& loss_fn,
                                 double h = 1e-5, std::size_t max_per_input = 0, std::uint64_t seed = 5) {
  for (auto& t : inputs) t.zero_grad();
  ad::backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    std::vector<double> g(t.numel(), 0.0);
    if (!t.grad().empty()) std::copy(t.grad().begin(), t.grad().end(), g.begin());
    analytic.push_back(std::move(g));
  }
  ad::NoGradGuard guard;
  std::mt19937_64 rng(seed);
  GradCheck r;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_values();
    std::vector<std::size_t> idx(values.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_per_input && idx.size() > max_per_input) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_per_input);
    }
    for (std::size_t i : idx) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss_fn().item();
      values[i] = saved - h;
      const double down = loss_fn().item();
      values[i] = saved;
      r.max_rel = std::max(r.max_rel, relative_error(analytic[k][i], (up - down) / (2.0 * h)));
      ++r.checked;
    }
  }
  return r;
}

inline VoxelMask random_mask(const Dims& d, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution b(p);
  VoxelMask m(d);
  for (auto& v : m.occupancy) v = b(rng) ? 1 : 0;
  return m;
}

/// Random mask with both phases present.
inline VoxelMask random_two_phase_mask(const Dims& d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pu(0.05, 0.6);
  for (;;) {
    VoxelMask m = random_mask(d, pu(rng), rng);
    const std::size_t n = m.count();
    if (n > 0 && n < m.occupancy.size()) return m;
  }
}

/// Union of a few random balls; smoother than i.i.d. noise.
inline VoxelMask random_blob_mask(const Dims& d, std::mt19937_64& rng, int balls = 3) {
  VoxelMask m(d);
  std::uniform_real_distribution<double> cz(0.0, static_cast<double>(d[0] - 1)), cy(0.0, static_cast<double>(d[1] - 1)),
      cx(0.0, static_cast<double>(d[2] - 1)), rr(1.0, static_cast<double>(std::min({d[0], d[1], d[2]})) / 3.0);
  for (int b = 0; b < balls; ++b) {
    const double z0 = cz(rng), y0 = cy(rng), x0 = cx(rng), r = rr(rng);
    for (std::size_t z = 0; z < d[0]; ++z)
      for (std::size_t y = 0; y < d[1]; ++y)
        for (std::size_t x = 0; x < d[2]; ++x) {
          const double dz = static_cast<double>(z) - z0, dy = static_cast<double>(y) - y0, dx = static_cast<double>(x) - x0;
          if (dz * dz + dy * dy + dx * dx <= r * r) m.set(z, y, x, true);
        }
  }
  return m;
}

}  // namespace dg::testing
