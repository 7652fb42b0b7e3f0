#pragma once

// Locally conditioned neural field: a low-resolution latent grid is sampled
// trilinearly at each query point and, concatenated with the point's
// coordinates, fed to a sine-activated MLP that outputs a signed distance.

#include <random>
#include <string>
#include <vector>

#include "deepgrowth/autodiff.hpp"
#include "deepgrowth/optim.hpp"
#include "deepgrowth/volume.hpp"

namespace dg {

struct LatentGrid {
  ad::Tensor data;  // [C, d, h, w]

  std::size_t channels() const { return data.dim(0); }
  Dims dims() const { return {data.dim(1), data.dim(2), data.dim(3)}; }
};

struct DecoderConfig {
  std::size_t latent_channels = 32;
  std::size_t width = 64;
  std::size_t hidden_layers = 5;
  double first_omega = 30.0;
  double hidden_omega = 1.0;
  double output_scale = 1.0;  // fixed gain on the linear head

  bool operator==(const DecoderConfig&) const = default;
};

class DecoderMlp {
 public:
  DecoderMlp() = default;
  /// Registers its parameters under `prefix` and draws the sine-network
  /// initialization from rng.
  DecoderMlp(const DecoderConfig& cfg, ad::ParameterSet& params, std::mt19937_64& rng,
             const std::string& prefix = "decoder");

  /// features [P, 3 + C] -> [P, 1]
  ad::Tensor forward(const ad::Tensor& features) const;
  const DecoderConfig& config() const { return cfg_; }
  std::vector<ad::Tensor>& weights() { return weights_; }
  std::vector<ad::Tensor>& biases() { return biases_; }

 private:
  DecoderConfig cfg_;
  std::vector<ad::Tensor> weights_;
  std::vector<ad::Tensor> biases_;
};

/// [P,3] normalized points -> [P,C] interpolated latent vectors.
ad::Tensor query_latent(const LatentGrid& z, const ad::Tensor& points);

/// f(x, z(x)) for each point; returns [P, 1]. Rejects NaN inputs.
ad::Tensor decode_sdf(const DecoderMlp& mlp, const LatentGrid& z, const ad::Tensor& points);

/// Normalized coordinates of voxel centers [begin, begin + count) in
/// row-major order, as a [count, 3] tensor.
ad::Tensor voxel_center_points(const Dims& dims, std::size_t begin, std::size_t count);

inline constexpr std::size_t kDecodeChunk = 65536;

/// Decodes every voxel center of out_dims without recording a graph.
std::vector<double> decode_full_grid(const DecoderMlp& mlp, const LatentGrid& z, const Dims& out_dims);

}  // namespace dg
