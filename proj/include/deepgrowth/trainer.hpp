#pragma once

// End-to-end optimization of GrowthNet over longitudinal cases.

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepgrowth/cohort.hpp"
#include "deepgrowth/growth_net.hpp"
#include "deepgrowth/optim.hpp"
#include "deepgrowth/sdf.hpp"

namespace dg {

struct LossConfig {
  double lambda_rec = 1.0;
  double lambda_reg = 0.1;
  std::size_t n_points = 4096;  // per tumor
  double clamp_dist = 8.0;
  double near_surface_fraction = 0.5;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 300;
  double lr = 1e-4;
  std::uint64_t seed = 7;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
  LossConfig loss;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const LossConfig& c);
nlohmann::json to_json(const TrainConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j, LossConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Network inputs plus the EDT signed distance of every scan.
struct TrainingCase {
  CaseTensors tensors;
  std::vector<SdfGrid> targets;
};

TrainingCase make_training_case(const LongitudinalCase& c, int horizon_days);

struct LossParts {
  ad::Tensor total;  // differentiable
  double rec = 0.0;
  double reg = 0.0;
  double total_value = 0.0;
};

/// L_rec averages the l1 error of all N tumors (inputs decoded from their own
/// latents, the target from the predicted latent); L_reg is the mean l2 norm of
/// the N-1 encoder latents.
LossParts compute_loss(const GrowthNet& net, const ForwardOutputs& outputs,
                       const std::vector<SdfGrid>& targets, const LossConfig& cfg, std::mt19937_64& rng);

/// The random stream of one case in one epoch depends only on (seed, epoch,
/// case id), never on the dataset order.
std::uint64_t case_stream_seed(std::uint64_t seed, std::size_t epoch, const std::string& case_id);

/// Forward pass and loss of one case, with training-mode dropout.
LossParts case_loss(const GrowthNet& net, const TrainingCase& c, const TrainConfig& cfg, std::size_t epoch);

struct LossLogEntry {
  std::size_t epoch = 0;
  double rec = 0.0;
  double reg = 0.0;
  double total = 0.0;
  bool operator==(const LossLogEntry&) const = default;
};

struct TrainState {
  ad::AdamState adam;
  std::size_t epochs_completed = 0;
  std::vector<LossLogEntry> log;
};

class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, double lr, std::size_t epoch, std::string case_id)
      : std::runtime_error(what), lr(lr), epoch(epoch), case_id(std::move(case_id)) {}
  double lr;
  std::size_t epoch;
  std::string case_id;
};

struct TrainHooks {
  std::function<void(const LossLogEntry&)> on_epoch;
  std::function<void(const TrainState&)> on_checkpoint;
};

/// Runs epochs state.epochs_completed .. cfg.epochs - 1, appending one log
/// entry (case-averaged) per epoch. Throws NumericalError on a non-finite loss.
void train(GrowthNet& net, const std::vector<TrainingCase>& cases, const TrainConfig& cfg,
           TrainState& state, const TrainHooks& hooks = {});

}  // namespace dg
