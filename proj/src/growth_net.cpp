#include "deepgrowth/growth_net.hpp"

#include "deepgrowth/sdf.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace dg {

using nlohmann::json;

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (downsample == 0 || (downsample & (downsample - 1)) != 0) fail("downsample must be a power of two");
  for (auto d : volume)
    if (d == 0 || d % downsample != 0) fail("volume dims must be divisible by downsample");
  if (latent_channels == 0) fail("latent_channels must be positive");
  if (encoding_order < 1) fail("encoding_order must be >= 1");
  if (time_dropout < 0.0 || time_dropout >= 1.0) fail("time_dropout must lie in [0, 1)");
  if (encoder_width == 0 || lstm_hidden == 0 || decoder_width == 0) fail("widths must be positive");
  if (lstm_layers == 0) fail("lstm_layers must be >= 1");
  if (lstm_kernel % 2 == 0) fail("lstm_kernel must be odd");
  if (decoder_layers == 0) fail("decoder_layers must be >= 1");
  if (!(first_omega > 0.0) || !(hidden_omega > 0.0)) fail("sine frequencies must be positive");
  if (!(output_scale > 0.0)) fail("output_scale must be positive");
}

json to_json(const ModelConfig& c) {
  return json{{"volume", {c.volume[0], c.volume[1], c.volume[2]}},
              {"latent_channels", c.latent_channels},
              {"downsample", c.downsample},
              {"encoding_order", c.encoding_order},
              {"time_mode", to_string(c.time_mode)},
              {"time_dropout", c.time_dropout},
              {"encoder_width", c.encoder_width},
              {"lstm_layers", c.lstm_layers},
              {"lstm_hidden", c.lstm_hidden},
              {"lstm_kernel", c.lstm_kernel},
              {"decoder_width", c.decoder_width},
              {"decoder_layers", c.decoder_layers},
              {"first_omega", c.first_omega},
              {"hidden_omega", c.hidden_omega},
              {"output_scale", c.output_scale},
              {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  static const std::set<std::string> keys = {
      "volume",      "latent_channels", "downsample",     "encoding_order", "time_mode",
      "time_dropout", "encoder_width",  "lstm_layers",    "lstm_hidden",    "lstm_kernel",
      "decoder_width", "decoder_layers", "first_omega",   "hidden_omega",   "output_scale", "init_seed"};
  if (!j.is_object()) throw std::invalid_argument("model config must be an object");
  for (const auto& [k, _] : j.items())
    if (!keys.count(k)) throw std::invalid_argument("model config: unknown key '" + k + "'");
  try {
    if (j.contains("volume")) c.volume = j["volume"].get<Dims>();
    if (j.contains("latent_channels")) c.latent_channels = j["latent_channels"].get<std::size_t>();
    if (j.contains("downsample")) c.downsample = j["downsample"].get<std::size_t>();
    if (j.contains("encoding_order")) c.encoding_order = j["encoding_order"].get<int>();
    if (j.contains("time_mode")) c.time_mode = time_mode_from_string(j["time_mode"].get<std::string>());
    if (j.contains("time_dropout")) c.time_dropout = j["time_dropout"].get<double>();
    if (j.contains("encoder_width")) c.encoder_width = j["encoder_width"].get<std::size_t>();
    if (j.contains("lstm_layers")) c.lstm_layers = j["lstm_layers"].get<std::size_t>();
    if (j.contains("lstm_hidden")) c.lstm_hidden = j["lstm_hidden"].get<std::size_t>();
    if (j.contains("lstm_kernel")) c.lstm_kernel = j["lstm_kernel"].get<std::size_t>();
    if (j.contains("decoder_width")) c.decoder_width = j["decoder_width"].get<std::size_t>();
    if (j.contains("decoder_layers")) c.decoder_layers = j["decoder_layers"].get<std::size_t>();
    if (j.contains("first_omega")) c.first_omega = j["first_omega"].get<double>();
    if (j.contains("hidden_omega")) c.hidden_omega = j["hidden_omega"].get<double>();
    if (j.contains("output_scale")) c.output_scale = j["output_scale"].get<double>();
    if (j.contains("init_seed")) c.init_seed = j["init_seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

GrowthNet::ConvParam GrowthNet::add_conv(const std::string& name, std::size_t out, std::size_t in,
                                         std::size_t k, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(out * in * k * k * k);
  for (auto& v : w) v = dist(rng);
  ConvParam p;
  p.weight = params_.add(name + ".weight", ad::Tensor::from({out, in, k, k, k}, std::move(w), true));
  p.bias = params_.add(name + ".bias", ad::Tensor::zeros({out}, true));
  return p;
}

GrowthNet::GrowthNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.init_seed);
  auto he = [](std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); };
  auto fan = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };

  const std::size_t w0 = cfg_.encoder_width;
  const std::size_t w1 = 2 * cfg_.encoder_width;
  stem_ = add_conv("encoder.stem", w0, 2, 3, he(2 * 27), rng);
  std::size_t width = w0;
  for (std::size_t s = cfg_.downsample, level = 0; s > 1; s /= 2, ++level) {
    const std::string name = "encoder.down" + std::to_string(level);
    auto down = add_conv(name + ".stride", w1, width, 3, he(width * 27), rng);
    auto refine = add_conv(name + ".refine", w1, w1, 3, he(w1 * 27), rng);
    down_blocks_.emplace_back(down, refine);
    width = w1;
  }
  const Dims ld = cfg_.latent_dims();
  use_unet_ = ld[0] >= 2 && ld[1] >= 2 && ld[2] >= 2 && ld[0] % 2 == 0 && ld[1] % 2 == 0 && ld[2] % 2 == 0;
  if (use_unet_) {
    unet_down_ = add_conv("encoder.unet.down", width, width, 3, he(width * 27), rng);
    unet_mid_ = add_conv("encoder.unet.mid", width, width, 3, he(width * 27), rng);
    unet_fuse_ = add_conv("encoder.unet.fuse", width, 2 * width, 3, he(2 * width * 27), rng);
  }
  head_ = add_conv("encoder.head", cfg_.latent_channels, width, 1, fan(width), rng);

  const std::size_t H = cfg_.lstm_hidden, k = cfg_.lstm_kernel;
  const std::size_t k3 = k * k * k;
  for (std::size_t l = 0; l < cfg_.lstm_layers; ++l) {
    const std::size_t in = l == 0 ? cfg_.latent_channels + time_channels(cfg_.time_mode, cfg_.encoding_order) : H;
    auto p = add_conv("lstm.l" + std::to_string(l), 4 * H, in + H, k, fan((in + H) * k3), rng);
    auto b = p.bias.mutable_values();
    for (std::size_t i = H; i < 2 * H; ++i) b[i] = 1.0;  // forget gate
    lstm_.push_back(p);
  }
  readout_ = add_conv("lstm.readout", cfg_.latent_channels, H, 1, fan(H), rng);

  decoder_ = DecoderMlp(cfg_.decoder(), params_, rng, "decoder");
}

LatentGrid GrowthNet::encode(const ad::Tensor& image, const ad::Tensor& mask) const {
  const ad::Shape expected{cfg_.volume[0], cfg_.volume[1], cfg_.volume[2]};
  if (image.shape() != expected || mask.shape() != expected)
    throw ad::ShapeError("encode: image " + ad::shape_string(image.shape()) + " / mask " +
                         ad::shape_string(mask.shape()) + " do not match model volume " +
                         ad::shape_string(expected));
  if (image.requires_grad() || mask.requires_grad())
    throw std::invalid_argument("encode: encoder inputs must not require gradients");
  std::vector<double> stacked(image.values().begin(), image.values().end());
  stacked.insert(stacked.end(), mask.values().begin(), mask.values().end());
  ad::Tensor x = ad::Tensor::from({2, expected[0], expected[1], expected[2]}, std::move(stacked));
  x = ad::relu(ad::conv3d(x, stem_.weight, stem_.bias, 1, 1));
  for (const auto& [down, refine] : down_blocks_) {
    x = ad::relu(ad::conv3d(x, down.weight, down.bias, 2, 1));
    x = ad::relu(ad::conv3d(x, refine.weight, refine.bias, 1, 1));
  }
  if (use_unet_) {
    const ad::Tensor skip = x;
    ad::Tensor y = ad::relu(ad::conv3d(x, unet_down_.weight, unet_down_.bias, 2, 1));
    y = ad::relu(ad::conv3d(y, unet_mid_.weight, unet_mid_.bias, 1, 1));
    y = ad::upsample2(y);
    x = ad::relu(ad::conv3d(ad::concat0({skip, y}), unet_fuse_.weight, unet_fuse_.bias, 1, 1));
  }
  return {ad::conv3d(x, head_.weight, head_.bias, 1, 0)};
}

LatentGrid GrowthNet::encode(const Image& image, const VoxelMask& mask) const {
  if (image.dims != mask.dims) throw ad::ShapeError("encode: image and mask shapes differ");
  const ad::Shape s{image.dims[0], image.dims[1], image.dims[2]};
  std::vector<double> iv(image.values.begin(), image.values.end());
  std::vector<double> mv(mask.occupancy.begin(), mask.occupancy.end());
  return encode(ad::Tensor::from(s, std::move(iv)), ad::Tensor::from(s, std::move(mv)));
}

LatentGrid GrowthNet::predict_latent(const std::vector<LatentGrid>& latents,
                                     std::span<const double> normalized_dates, bool training,
                                     std::mt19937_64& rng) const {
  if (latents.empty()) throw std::invalid_argument("predict_latent: need at least two scans (N >= 2)");
  if (normalized_dates.size() != latents.size() + 1)
    throw std::invalid_argument("predict_latent: timeline has " + std::to_string(normalized_dates.size()) +
                                " dates for " + std::to_string(latents.size()) + " latents (expected N = latents + 1)");
  const Dims ld = latents[0].dims();
  const std::size_t H = cfg_.lstm_hidden;
  const std::size_t pad = cfg_.lstm_kernel / 2;
  std::vector<ad::Tensor> h(cfg_.lstm_layers), c(cfg_.lstm_layers);
  for (std::size_t l = 0; l < cfg_.lstm_layers; ++l) {
    h[l] = ad::Tensor::zeros({H, ld[0], ld[1], ld[2]});
    c[l] = ad::Tensor::zeros({H, ld[0], ld[1], ld[2]});
  }
  for (std::size_t i = 0; i < latents.size(); ++i) {
    if (latents[i].channels() != cfg_.latent_channels || latents[i].dims() != ld)
      throw ad::ShapeError("predict_latent: latent " + std::to_string(i) + " has shape " +
                           ad::shape_string(latents[i].data.shape()));
    const double tau = normalized_dates[i + 1] - normalized_dates[i];
    ad::Tensor x = concat_code_to_grid(latents[i].data, time_features(cfg_.time_mode, tau, cfg_.encoding_order),
                                       cfg_.time_dropout, training, rng);
    for (std::size_t l = 0; l < cfg_.lstm_layers; ++l) {
      const auto gates = ad::conv3d(ad::concat0({x, h[l]}), lstm_[l].weight, lstm_[l].bias, 1, pad);
      const auto in_gate = ad::sigmoid(ad::slice0(gates, 0, H));
      const auto forget_gate = ad::sigmoid(ad::slice0(gates, H, H));
      const auto out_gate = ad::sigmoid(ad::slice0(gates, 2 * H, H));
      const auto candidate = ad::tanh(ad::slice0(gates, 3 * H, H));
      c[l] = ad::add(ad::mul(forget_gate, c[l]), ad::mul(in_gate, candidate));
      h[l] = ad::mul(out_gate, ad::tanh(c[l]));
      x = h[l];
    }
  }
  return {ad::conv3d(h.back(), readout_.weight, readout_.bias, 1, 0)};
}

CaseTensors make_case_tensors(const LongitudinalCase& c, int horizon_days) {
  CaseTensors t;
  t.case_id = c.case_id;
  const Dims d = c.dims();
  const ad::Shape s{d[0], d[1], d[2]};
  for (const auto& scan : c.scans) {
    t.images.push_back(ad::Tensor::from(s, std::vector<double>(scan.image.values.begin(), scan.image.values.end())));
    t.masks.push_back(ad::Tensor::from(s, std::vector<double>(scan.mask.occupancy.begin(), scan.mask.occupancy.end())));
  }
  t.normalized_dates = normalize_dates(c.dates(), horizon_days).normalized;
  return t;
}

ForwardOutputs forward_latents(const GrowthNet& net, const CaseTensors& c, bool training, std::mt19937_64& rng) {
  const std::size_t n = c.images.size();
  if (n < 2 || c.masks.size() != n || c.normalized_dates.size() != n)
    throw std::invalid_argument("forward: case " + c.case_id + " needs at least two consistent scans");
  ForwardOutputs out;
  for (std::size_t t = 0; t + 1 < n; ++t) out.latents.push_back(net.encode(c.images[t], c.masks[t]));
  out.predicted = net.predict_latent(out.latents, c.normalized_dates, training, rng);
  return out;
}

VoxelMask Prediction::mask() const { return sdf_to_mask(sdf, dims); }

Prediction predict(const GrowthNet& net, const CaseTensors& c, double target_date, std::size_t n_inputs) {
  if (n_inputs == 0) n_inputs = c.images.size() - 1;
  if (n_inputs < 1 || n_inputs > c.images.size())
    throw std::invalid_argument("predict: invalid number of input scans");
  if (target_date < c.normalized_dates[n_inputs - 1])
    throw std::invalid_argument("predict: target date precedes the last input scan");
  ad::NoGradGuard no_grad;
  std::mt19937_64 unused(0);
  Prediction p;
  for (std::size_t t = 0; t < n_inputs; ++t) p.outputs.latents.push_back(net.encode(c.images[t], c.masks[t]));
  std::vector<double> dates(c.normalized_dates.begin(), c.normalized_dates.begin() + static_cast<std::ptrdiff_t>(n_inputs));
  dates.push_back(target_date);
  p.outputs.predicted = net.predict_latent(p.outputs.latents, dates, false, unused);
  p.dims = net.config().volume;
  p.sdf = decode_full_grid(net.decoder(), p.outputs.predicted, p.dims);
  return p;
}

std::vector<std::vector<double>> reconstruct_inputs(const GrowthNet& net, const ForwardOutputs& out) {
  std::vector<std::vector<double>> grids;
  for (const auto& z : out.latents) grids.push_back(decode_full_grid(net.decoder(), z, net.config().volume));
  return grids;
}

}  // namespace dg
