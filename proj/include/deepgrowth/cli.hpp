#pragma once

// The deepgrowth command line: synth, train, predict, sweep-time, evaluate and
// export-slices. Exit codes: 0 success, 2 usage or input error, 3 numerical
// failure, 4 checkpoint or configuration mismatch.

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepgrowth/growth_net.hpp"
#include "deepgrowth/trainer.hpp"

namespace dg {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitNumerical = 3, kExitCheckpoint = 4 };

/// Environment variable naming the default config file.
inline constexpr const char* kConfigEnv = "DGROWTH_CONFIG";

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

/// {"model": {...}, "train": {..., "loss": {...}}}; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
nlohmann::json to_json(const RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

/// Portable graymap (P5) slice of a volume along `axis` (0 = D, 1 = H, 2 = W),
/// linearly mapped from the volume's [min, max] to [0, 255].
struct Slice {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};
Slice extract_slice(const Dims& dims, const std::vector<double>& values, int axis, std::size_t index);
/// 255 on in-plane boundary pixels of the mask slice, 0 elsewhere.
Slice contour_slice(const VoxelMask& mask, int axis, std::size_t index);
void write_pgm(const std::filesystem::path& path, const Slice& s);
Slice read_pgm(const std::filesystem::path& path);

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace dg
