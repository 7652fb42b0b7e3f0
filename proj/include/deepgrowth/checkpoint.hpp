#pragma once

// Checkpoint container:
//
//   "DGROWTH1" | u64 header length | UTF-8 JSON header | tensor payloads
//
// The header carries the format version, model and training configuration,
// optimizer scalars, the loss log and a manifest of every tensor (name, shape,
// dtype, byte offset into the payload). Payloads are little-endian f64:
// parameters in registration order, then the Adam first and second moments.

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>

#include "deepgrowth/growth_net.hpp"
#include "deepgrowth/trainer.hpp"

namespace dg {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stored configuration disagrees with what the caller expects.
class ConfigMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  TrainState state;
  int horizon_days = 0;  // date normalization of the training cohort
  std::unique_ptr<GrowthNet> net;
};

std::string serialize_checkpoint(const GrowthNet& net, const TrainConfig& train, const TrainState& state,
                                 int horizon_days);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& context);

/// Written to a temporary sibling and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const GrowthNet& net, const TrainConfig& train,
                     const TrainState& state, int horizon_days);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Also rejects a stored model configuration different from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

/// Keys whose values differ between two model configurations.
std::vector<std::string> config_differences(const ModelConfig& a, const ModelConfig& b);

}  // namespace dg
