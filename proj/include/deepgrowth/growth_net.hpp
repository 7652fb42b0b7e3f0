#pragma once

// Longitudinal growth model: a convolutional encoder maps each prior scan to a
// latent grid, a time-conditioned ConvLSTM predicts the latent grid of the
// target date, and the neural-field decoder turns any latent grid into a
// signed distance field.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "json.hpp"

#include "deepgrowth/autodiff.hpp"
#include "deepgrowth/cohort.hpp"
#include "deepgrowth/neural_field.hpp"
#include "deepgrowth/optim.hpp"
#include "deepgrowth/temporal.hpp"
#include "deepgrowth/volume.hpp"

namespace dg {

struct ModelConfig {
  Dims volume{32, 32, 32};
  std::size_t latent_channels = 32;
  std::size_t downsample = 4;
  int encoding_order = 6;
  TimeMode time_mode = TimeMode::Encoded;
  double time_dropout = 0.1;
  std::size_t encoder_width = 16;
  std::size_t lstm_layers = 3;
  std::size_t lstm_hidden = 32;
  std::size_t lstm_kernel = 3;
  std::size_t decoder_width = 64;
  std::size_t decoder_layers = 5;
  double first_omega = 30.0;
  double hidden_omega = 1.0;
  double output_scale = 1.0;
  std::uint64_t init_seed = 1;

  Dims latent_dims() const {
    return {volume[0] / downsample, volume[1] / downsample, volume[2] / downsample};
  }
  DecoderConfig decoder() const {
    return {latent_channels, decoder_width, decoder_layers, first_omega, hidden_omega, output_scale};
  }
  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& c);
/// Starts from `base` and overrides present keys; unknown keys are rejected.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

class GrowthNet {
 public:
  explicit GrowthNet(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ad::ParameterSet& parameters() { return params_; }
  const ad::ParameterSet& parameters() const { return params_; }
  const DecoderMlp& decoder() const { return decoder_; }

  /// image, mask: [D,H,W] tensors -> latent [C, D/s, H/s, W/s].
  LatentGrid encode(const ad::Tensor& image, const ad::Tensor& mask) const;
  LatentGrid encode(const Image& image, const VoxelMask& mask) const;

  /// Consumes latents z_1..z_{N-1} with normalized dates D_1..D_N; step i is
  /// conditioned on tau_i = D_{i+1} - D_i, so the last step carries the
  /// prediction interval.
  LatentGrid predict_latent(const std::vector<LatentGrid>& latents,
                            std::span<const double> normalized_dates, bool training,
                            std::mt19937_64& rng) const;
  LatentGrid predict_latent(const std::vector<LatentGrid>& latents, const ScanTimeline& timeline,
                            bool training, std::mt19937_64& rng) const {
    return predict_latent(latents, timeline.normalized, training, rng);
  }

 private:
  struct ConvParam {
    ad::Tensor weight, bias;
  };
  ConvParam add_conv(const std::string& name, std::size_t out, std::size_t in, std::size_t k,
                     double bound, std::mt19937_64& rng);

  ModelConfig cfg_;
  ad::ParameterSet params_;
  ConvParam stem_;
  std::vector<std::pair<ConvParam, ConvParam>> down_blocks_;  // strided conv, refine conv
  bool use_unet_ = false;
  ConvParam unet_down_, unet_mid_, unet_fuse_;
  ConvParam head_;
  std::vector<ConvParam> lstm_;
  ConvParam readout_;
  DecoderMlp decoder_;
};

/// Model inputs for one case: the 2-channel encoder inputs of every scan and
/// dates normalized by a cohort-wide horizon.
struct CaseTensors {
  std::string case_id;
  std::vector<ad::Tensor> images;  // [D,H,W]
  std::vector<ad::Tensor> masks;   // [D,H,W]
  std::vector<double> normalized_dates;
};

CaseTensors make_case_tensors(const LongitudinalCase& c, int horizon_days);

struct ForwardOutputs {
  std::vector<LatentGrid> latents;  // z_1..z_{N-1}
  LatentGrid predicted;             // z_N estimate
};

/// Encodes scans 1..N-1 and predicts the latent of scan N.
ForwardOutputs forward_latents(const GrowthNet& net, const CaseTensors& c, bool training,
                               std::mt19937_64& rng);

struct Prediction {
  std::vector<double> sdf;  // decoded at every voxel center
  Dims dims{0, 0, 0};
  ForwardOutputs outputs;
  VoxelMask mask() const;
};

/// Inference: predicts the tumor at normalized date `target_date` from the
/// first `n_inputs` scans (defaults to all but the last).
Prediction predict(const GrowthNet& net, const CaseTensors& c, double target_date,
                   std::size_t n_inputs = 0);

/// Full-grid decoding of every input latent (reconstructions).
std::vector<std::vector<double>> reconstruct_inputs(const GrowthNet& net, const ForwardOutputs& out);

}  // namespace dg
