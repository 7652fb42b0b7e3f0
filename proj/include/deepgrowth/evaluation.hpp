#pragma once

// Overlap and surface metrics, the stable-tumor baseline, grower
// stratification and report assembly.

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepgrowth/cohort.hpp"
#include "deepgrowth/growth_net.hpp"
#include "deepgrowth/volume.hpp"

namespace dg {

/// 2|A n B| / (|A| + |B|); 1 when both masks are empty.
double dice(const VoxelMask& pred, const VoxelMask& gt);

/// Foreground voxels with at least one face neighbour in the background.
/// Voxels outside the volume count as background.
std::vector<std::array<std::size_t, 3>> surface_voxels(const VoxelMask& mask);

/// Pooled 95th percentile (linear interpolation between order statistics) of
/// the surface-to-surface distances in both directions, in mm. Empty when
/// either mask is empty.
std::optional<double> hd95(const VoxelMask& pred, const VoxelMask& gt, double spacing_mm);

/// (V_pred - V_gt) / V_gt; throws std::invalid_argument when gt is empty.
double signed_rvd(const VoxelMask& pred, const VoxelMask& gt);
double rvd(const VoxelMask& pred, const VoxelMask& gt);

/// The most recent input mask M_{N-1}, used verbatim as the prediction of M_N.
VoxelMask stable_tumor_baseline(const LongitudinalCase& c);

struct MetricsRecord {
  std::string case_id;
  double dice = 0.0;
  std::optional<double> hd95_mm;
  double rvd = 0.0;
  double signed_rvd = 0.0;
  double predicted_volume_mm3 = 0.0;
  double target_volume_mm3 = 0.0;
  double grower_rank_stat = 0.0;  // |V_N - V_{N-1}| / V_{N-1}
};

/// `previous` is the last input mask, which defines the grower statistic.
MetricsRecord score_prediction(const std::string& case_id, const VoxelMask& pred, const VoxelMask& gt,
                               const VoxelMask& previous, double spacing_mm);

/// Top ceil(fraction * K) records by grower_rank_stat, descending; ties by case_id.
std::vector<MetricsRecord> stratify_top_growers(const std::vector<MetricsRecord>& records, double fraction);

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t n = 0;
};

struct MetricSummary {
  Aggregate dice, hd95_mm, rvd;
};

/// Undefined HD95 values are left out of the HD95 aggregate only.
MetricSummary summarize(const std::vector<MetricsRecord>& records);

struct MethodReport {
  std::string method;
  std::vector<MetricsRecord> records;
  MetricSummary overall;
  MetricSummary top;
  std::vector<std::string> hd95_exclusions;
};

struct EvaluationReport {
  std::string split;
  std::string checkpoint_crc;
  double top_fraction = 0.2;
  std::vector<std::string> top_case_ids;
  std::vector<MethodReport> methods;  // model first, then the stable-tumor baseline
};

/// Builds one method's section; the top-grower subset is chosen by case id.
MethodReport make_method_report(std::string method, std::vector<MetricsRecord> records,
                                const std::vector<std::string>& top_case_ids);

/// Predicts M_N of every case of `split` from the preceding scans and scores it
/// alongside the stable-tumor baseline.
EvaluationReport evaluate(const GrowthNet& net, const Cohort& cohort, const std::string& split, int horizon_days,
                          double top_fraction = 0.2, const std::string& checkpoint_crc = "");

struct SweepPoint {
  int days = 0;  // since the first scan
  double volume_mm3 = 0.0;
  std::vector<double> sdf;
  VoxelMask mask;
};

/// Queries the model at start + k * step days (k = 0..count-1) from the first
/// n_inputs scans (default N-1). Query dates must not precede the last input.
std::vector<SweepPoint> sweep_time(const GrowthNet& net, const LongitudinalCase& c, int horizon_days, int start_days,
                                   int step_days, std::size_t count, std::size_t n_inputs = 0);

/// Mean absolute volume change between consecutive sweep points.
double mean_abs_volume_change(const std::vector<SweepPoint>& sweep);

nlohmann::json to_json(const EvaluationReport& r);
/// One row per (method, case).
std::string to_csv(const EvaluationReport& r);
/// Writes report_<split>_<crc>.json and .csv into `dir`; returns the JSON path.
std::filesystem::path write_report(const EvaluationReport& r, const std::filesystem::path& dir);

}  // namespace dg
