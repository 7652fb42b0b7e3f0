#pragma once

// Synthetic longitudinal tumor cases and their on-disk layout:
//
//   <root>/manifest.json
//   <root>/cases/<id>/meta.json
//   <root>/cases/<id>/scan_<t>.bin     (intensity record followed by mask record)
//
// Each record is a DGVOL volume: 20-byte header (6-byte magic "DGVOL\0",
// u16 dtype code, u32 D, H, W; all little-endian) then the row-major payload.

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepgrowth/volume.hpp"

namespace dg {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Lobe {
  Vec3 direction{1.0, 0.0, 0.0};  // unit vector from the ellipsoid center
  double radius_fraction = 0.5;   // lobe radius relative to the mean radius
};

struct GrowthScenario {
  std::string group = "stable";
  Dims shape{32, 32, 32};
  double spacing_mm = 1.0;
  Vec3 radii{5.0, 5.0, 5.0};  // voxels, at the first scan
  Vec3 rates{0.0, 0.0, 0.0};  // relative radius change per year
  std::vector<Lobe> lobes;
  std::size_t n_scans = 3;
  std::array<int, 2> interval_days{90, 540};
  double noise_sigma = 0.05;
  double ramp_width = 1.5;  // voxels
};

inline constexpr double kDaysPerYear = 365.0;

struct Scan {
  int date_days = 0;
  Image image;
  VoxelMask mask;
};

struct LongitudinalCase {
  std::string case_id;
  std::vector<Scan> scans;
  double spacing_mm = 1.0;
  std::uint64_t seed = 0;
  GrowthScenario scenario;
  Vec3 center{0.0, 0.0, 0.0};  // resolved ellipsoid center (voxel coordinates)

  Dims dims() const { return scans.at(0).mask.dims; }
  std::vector<int> dates() const;
};

/// Analytic shape of a scenario at `years` after the first scan, centered at
/// `center`: union of the ellipsoid and its lobes, positive inside.
double scenario_sdf(const GrowthScenario& s, const Vec3& center, double years, const Vec3& p);

/// Deterministic per seed. Throws DataError when the tumor leaves the crop,
/// naming the offending date.
LongitudinalCase generate_case(const GrowthScenario& scenario, std::uint64_t seed);

struct CohortSpec {
  std::size_t n_cases = 40;
  std::map<std::string, double> proportions{
      {"stable", 0.25}, {"slow", 0.25}, {"fast", 0.25}, {"shrinking", 0.25}};
  std::size_t n_train = 30;
  std::size_t n_val = 0;
  std::size_t n_test = 10;
  Dims shape{32, 32, 32};
  double spacing_mm = 1.0;
  std::size_t n_scans = 3;
  std::array<int, 2> interval_days{90, 540};
  double noise_sigma = 0.05;
  std::uint64_t seed = 2024;
};

/// Rejects unknown keys and invalid values with std::invalid_argument.
CohortSpec cohort_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CohortSpec& spec);

/// Draws the scenario of one case of `group` (stable/slow/fast/shrinking).
GrowthScenario draw_scenario(const CohortSpec& spec, const std::string& group, std::mt19937_64& rng);

struct CohortManifest {
  int version = 1;
  int horizon_days = 0;
  double spacing_mm = 1.0;
  Dims shape{0, 0, 0};
  std::map<std::string, std::vector<std::string>> splits;  // train/val/test
  std::map<std::string, std::vector<std::string>> groups;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::map<std::string, std::string>> checksums;  // case -> file -> crc32
  nlohmann::json spec;

  std::vector<std::string> case_ids() const;
};

struct Cohort {
  CohortManifest manifest;
  std::vector<LongitudinalCase> cases;

  const LongitudinalCase& find(const std::string& id) const;
  std::vector<const LongitudinalCase*> split(const std::string& name) const;
};

/// Generates every case in memory (with the manifest bookkeeping filled in).
Cohort generate_cohort(const CohortSpec& spec);
/// Writes the cohort to `root`; fills in manifest checksums.
void write_cohort(Cohort& cohort, const std::filesystem::path& root);

LongitudinalCase load_case(const std::filesystem::path& root, const CohortManifest& manifest,
                           const std::string& case_id);
CohortManifest load_manifest(const std::filesystem::path& root);
Cohort load_cohort(const std::filesystem::path& root);

// DGVOL records.
enum class VolumeDtype : std::uint16_t { U8 = 1, F32 = 2 };

void write_volume(std::ostream& os, const Dims& dims, const std::vector<std::uint8_t>& data);
void write_volume(std::ostream& os, const Dims& dims, const std::vector<float>& data);
struct VolumeRecord {
  VolumeDtype dtype = VolumeDtype::U8;
  Dims dims{0, 0, 0};
  std::vector<std::uint8_t> u8;
  std::vector<float> f32;
};
VolumeRecord read_volume(std::istream& is, const std::string& context);

void save_mask_file(const std::filesystem::path& path, const VoxelMask& mask);
void save_float_volume_file(const std::filesystem::path& path, const Dims& dims, const std::vector<float>& values);
VolumeRecord load_volume_file(const std::filesystem::path& path);

std::string crc32_hex(const std::string& bytes);
std::string file_crc32(const std::filesystem::path& path);

}  // namespace dg
