#include "deepgrowth/neural_field.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dg {

namespace {

ad::Tensor uniform(ad::Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = dist(rng);
  return ad::Tensor::from(std::move(shape), std::move(v), true);
}

void reject_nan(const ad::Tensor& t, const char* what) {
  for (double v : t.values())
    if (std::isnan(v)) throw ad::NonFiniteError(std::string("decode_sdf: NaN in ") + what);
}

}  // namespace

DecoderMlp::DecoderMlp(const DecoderConfig& cfg, ad::ParameterSet& params, std::mt19937_64& rng,
                       const std::string& prefix)
    : cfg_(cfg) {
  if (cfg.hidden_layers == 0) throw std::invalid_argument("decoder needs at least one hidden layer");
  std::size_t in = 3 + cfg.latent_channels;
  for (std::size_t l = 0; l <= cfg.hidden_layers; ++l) {
    const bool last = l == cfg.hidden_layers;
    const std::size_t out = last ? 1 : cfg.width;
    const auto fan_in = static_cast<double>(in);
    // First layer U(-1/in, 1/in); later layers U(-sqrt(6/in)/omega, +).
    const double bound = l == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / cfg.hidden_omega;
    const std::string name = prefix + ".l" + std::to_string(l);
    weights_.push_back(params.add(name + ".weight", uniform({out, in}, bound, rng)));
    biases_.push_back(params.add(name + ".bias", uniform({out}, 1.0 / std::sqrt(fan_in), rng)));
    in = out;
  }
}

ad::Tensor DecoderMlp::forward(const ad::Tensor& features) const {
  ad::Tensor x = features;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    x = ad::linear(x, weights_[l], biases_[l]);
    if (l + 1 < weights_.size()) x = ad::sine(x, l == 0 ? cfg_.first_omega : cfg_.hidden_omega);
  }
  if (cfg_.output_scale != 1.0) x = ad::scale(x, cfg_.output_scale);
  return x;
}

ad::Tensor query_latent(const LatentGrid& z, const ad::Tensor& points) {
  return ad::grid_sample_trilinear(z.data, points);
}

ad::Tensor decode_sdf(const DecoderMlp& mlp, const LatentGrid& z, const ad::Tensor& points) {
  reject_nan(z.data, "latent grid");
  reject_nan(points, "points");
  return mlp.forward(ad::concat_last(points, query_latent(z, points)));
}

ad::Tensor voxel_center_points(const Dims& dims, std::size_t begin, std::size_t count) {
  std::vector<double> v(count * 3);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t idx = begin + i;
    const std::size_t z = idx / (dims[1] * dims[2]), y = (idx / dims[2]) % dims[1], x = idx % dims[2];
    v[3 * i + 0] = voxel_to_normalized(static_cast<double>(z), dims[0]);
    v[3 * i + 1] = voxel_to_normalized(static_cast<double>(y), dims[1]);
    v[3 * i + 2] = voxel_to_normalized(static_cast<double>(x), dims[2]);
  }
  return ad::Tensor::from({count, 3}, std::move(v));
}

std::vector<double> decode_full_grid(const DecoderMlp& mlp, const LatentGrid& z, const Dims& out_dims) {
  ad::NoGradGuard no_grad;
  const std::size_t total = voxel_count(out_dims);
  std::vector<double> out(total);
  for (std::size_t begin = 0; begin < total; begin += kDecodeChunk) {
    const std::size_t count = std::min(kDecodeChunk, total - begin);
    const auto values = decode_sdf(mlp, z, voxel_center_points(out_dims, begin, count));
    std::copy(values.values().begin(), values.values().end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
  }
  return out;
}

}  // namespace dg
