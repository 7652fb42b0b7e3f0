#include "deepgrowth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "deepgrowth/seeding.hpp"

namespace dg {

using nlohmann::json;

void LossConfig::validate() const {
  if (!(lambda_rec >= 0.0) || !(lambda_reg >= 0.0)) throw std::invalid_argument("loss weights must be >= 0");
  if (n_points == 0) throw std::invalid_argument("n_points must be >= 1");
  if (!(clamp_dist > 0.0)) throw std::invalid_argument("clamp_dist must be positive");
  if (near_surface_fraction < 0.0 || near_surface_fraction > 1.0)
    throw std::invalid_argument("near_surface_fraction must lie in [0, 1]");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be positive");
  loss.validate();
}

json to_json(const LossConfig& c) {
  return json{{"lambda_rec", c.lambda_rec},
              {"lambda_reg", c.lambda_reg},
              {"n_points", c.n_points},
              {"clamp_dist", c.clamp_dist},
              {"near_surface_fraction", c.near_surface_fraction}};
}

json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"lr", c.lr},
              {"seed", c.seed},
              {"checkpoint_every", c.checkpoint_every},
              {"loss", to_json(c.loss)}};
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& keys, const std::string& section) {
  if (!j.is_object()) throw std::invalid_argument(section + " config must be an object");
  for (const auto& [k, _] : j.items())
    if (!keys.count(k)) throw std::invalid_argument(section + " config: unknown key '" + k + "'");
}

template <class T>
void read_key(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(section + " config: bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

LossConfig loss_config_from_json(const json& j, LossConfig c) {
  reject_unknown(j, {"lambda_rec", "lambda_reg", "n_points", "clamp_dist", "near_surface_fraction"}, "loss");
  read_key(j, "lambda_rec", c.lambda_rec, "loss");
  read_key(j, "lambda_reg", c.lambda_reg, "loss");
  read_key(j, "n_points", c.n_points, "loss");
  read_key(j, "clamp_dist", c.clamp_dist, "loss");
  read_key(j, "near_surface_fraction", c.near_surface_fraction, "loss");
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  reject_unknown(j, {"epochs", "lr", "seed", "checkpoint_every", "loss"}, "train");
  read_key(j, "epochs", c.epochs, "train");
  read_key(j, "lr", c.lr, "train");
  read_key(j, "seed", c.seed, "train");
  read_key(j, "checkpoint_every", c.checkpoint_every, "train");
  if (j.contains("loss")) c.loss = loss_config_from_json(j["loss"], c.loss);
  c.validate();
  return c;
}

TrainingCase make_training_case(const LongitudinalCase& c, int horizon_days) {
  TrainingCase t;
  t.tensors = make_case_tensors(c, horizon_days);
  for (const auto& scan : c.scans) t.targets.push_back(mask_to_sdf(scan.mask));
  return t;
}

LossParts compute_loss(const GrowthNet& net, const ForwardOutputs& outputs, const std::vector<SdfGrid>& targets,
                       const LossConfig& cfg, std::mt19937_64& rng) {
  const std::size_t n = outputs.latents.size() + 1;
  if (targets.size() != n)
    throw std::invalid_argument("compute_loss: " + std::to_string(targets.size()) + " SDF targets for " +
                                std::to_string(n) + " tumors");
  SamplingOptions opt;
  opt.n = cfg.n_points;
  opt.clamp_dist = cfg.clamp_dist;
  opt.near_surface_fraction = cfg.near_surface_fraction;

  std::vector<ad::Tensor> per_tumor;
  for (std::size_t t = 0; t < n; ++t) {
    const LatentGrid& z = t + 1 < n ? outputs.latents[t] : outputs.predicted;
    const auto samples = sample_training_points(targets[t], opt, rng);
    std::vector<double> coords(3 * samples.size()), values(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::copy(samples[i].coords.begin(), samples[i].coords.end(), coords.begin() + 3 * i);
      values[i] = samples[i].target_sdf;
    }
    const auto points = ad::Tensor::from({samples.size(), 3}, std::move(coords));
    const auto target = ad::Tensor::from({samples.size(), 1}, std::move(values));
    per_tumor.push_back(ad::l1_mean(decode_sdf(net.decoder(), z, points), target));
  }
  const auto rec = ad::weighted_sum(per_tumor, std::vector<double>(n, 1.0 / static_cast<double>(n)));

  std::vector<ad::Tensor> latent_data;
  for (const auto& z : outputs.latents) latent_data.push_back(z.data);
  const auto reg = ad::l2_norm_mean(latent_data);

  LossParts parts;
  parts.total = ad::weighted_sum({rec, reg}, {cfg.lambda_rec, cfg.lambda_reg});
  parts.rec = rec.item();
  parts.reg = reg.item();
  parts.total_value = parts.total.item();
  return parts;
}

std::uint64_t case_stream_seed(std::uint64_t seed, std::size_t epoch, const std::string& case_id) {
  return derive_seed(seed, epoch, fnv1a(case_id));
}

LossParts case_loss(const GrowthNet& net, const TrainingCase& c, const TrainConfig& cfg, std::size_t epoch) {
  std::mt19937_64 rng(case_stream_seed(cfg.seed, epoch, c.tensors.case_id));
  const auto outputs = forward_latents(net, c.tensors, true, rng);
  return compute_loss(net, outputs, c.targets, cfg.loss, rng);
}

void train(GrowthNet& net, const std::vector<TrainingCase>& cases, const TrainConfig& cfg, TrainState& state,
           const TrainHooks& hooks) {
  cfg.validate();
  if (cases.empty()) throw std::invalid_argument("train: empty dataset");
  state.adam.lr = cfg.lr;
  auto params = net.parameters().tensors();

  std::vector<std::size_t> order(cases.size());
  for (std::size_t epoch = state.epochs_completed; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, epoch, 0x5eed));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    LossLogEntry entry;
    entry.epoch = epoch;
    for (std::size_t idx : order) {
      const TrainingCase& c = cases[idx];
      net.parameters().zero_grad();
      auto diverged = [&](const std::string& what) {
        return NumericalError(what + " (lr " + std::to_string(state.adam.lr) + ", epoch " + std::to_string(epoch) +
                                  ", case " + c.tensors.case_id + ")",
                              state.adam.lr, epoch, c.tensors.case_id);
      };
      LossParts parts;
      try {
        parts = case_loss(net, c, cfg, epoch);
      } catch (const ad::NonFiniteError& e) {
        throw diverged(std::string("non-finite activations: ") + e.what());
      }
      if (!std::isfinite(parts.total_value)) throw diverged("non-finite loss");
      ad::backward(parts.total);
      ad::adam_step(params, state.adam);
      entry.rec += parts.rec;
      entry.reg += parts.reg;
      entry.total += parts.total_value;
    }
    const auto k = static_cast<double>(cases.size());
    entry.rec /= k;
    entry.reg /= k;
    entry.total /= k;
    state.log.push_back(entry);
    state.epochs_completed = epoch + 1;
    if (hooks.on_epoch) hooks.on_epoch(entry);
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && state.epochs_completed % cfg.checkpoint_every == 0)
      hooks.on_checkpoint(state);
  }
}

}  // namespace dg
