#include "deepgrowth/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "deepgrowth/kernels.hpp"
#include "deepgrowth/sdf.hpp"

namespace dg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_same_dims(const VoxelMask& a, const VoxelMask& b, const char* what) {
  if (a.dims != b.dims || a.occupancy.size() != b.occupancy.size())
    throw std::invalid_argument(std::string(what) + ": mask shapes differ");
}

double volume_mm3(const VoxelMask& m, double spacing_mm) {
  return static_cast<double>(m.count()) * spacing_mm * spacing_mm * spacing_mm;
}

/// Distances from every surface voxel of `from` to the nearest surface voxel of `to`.
void directed_distances(const VoxelMask& from, const VoxelMask& to, std::vector<double>& out) {
  const auto to_surface = surface_voxels(to);
  std::vector<std::uint8_t> feature(to.occupancy.size(), 0);
  for (const auto& v : to_surface) feature[flat_index(to.dims, v[0], v[1], v[2])] = 1;
  std::vector<double> d2(feature.size());
  kernels::squared_edt(to.dims, feature, d2);
  for (const auto& v : surface_voxels(from)) out.push_back(std::sqrt(d2[flat_index(from.dims, v[0], v[1], v[2])]));
}

}  // namespace

double dice(const VoxelMask& pred, const VoxelMask& gt) {
  require_same_dims(pred, gt, "dice");
  std::size_t inter = 0, a = 0, b = 0;
  for (std::size_t i = 0; i < pred.occupancy.size(); ++i) {
    a += pred.occupancy[i];
    b += gt.occupancy[i];
    inter += pred.occupancy[i] & gt.occupancy[i];
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

std::vector<std::array<std::size_t, 3>> surface_voxels(const VoxelMask& mask) {
  const Dims& d = mask.dims;
  std::vector<std::array<std::size_t, 3>> out;
  auto background = [&](std::ptrdiff_t z, std::ptrdiff_t y, std::ptrdiff_t x) {
    if (z < 0 || y < 0 || x < 0 || z >= static_cast<std::ptrdiff_t>(d[0]) || y >= static_cast<std::ptrdiff_t>(d[1]) ||
        x >= static_cast<std::ptrdiff_t>(d[2]))
      return true;
    return !mask.at(static_cast<std::size_t>(z), static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  for (std::size_t z = 0; z < d[0]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[2]; ++x) {
        if (!mask.at(z, y, x)) continue;
        const auto iz = static_cast<std::ptrdiff_t>(z), iy = static_cast<std::ptrdiff_t>(y),
                   ix = static_cast<std::ptrdiff_t>(x);
        if (background(iz - 1, iy, ix) || background(iz + 1, iy, ix) || background(iz, iy - 1, ix) ||
            background(iz, iy + 1, ix) || background(iz, iy, ix - 1) || background(iz, iy, ix + 1))
          out.push_back({z, y, x});
      }
  return out;
}

std::optional<double> hd95(const VoxelMask& pred, const VoxelMask& gt, double spacing_mm) {
  require_same_dims(pred, gt, "hd95");
  if (pred.count() == 0 || gt.count() == 0) return std::nullopt;
  std::vector<double> d;
  directed_distances(pred, gt, d);
  directed_distances(gt, pred, d);
  std::sort(d.begin(), d.end());
  const double rank = 0.95 * static_cast<double>(d.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return (d[lo] + frac * (d[hi] - d[lo])) * spacing_mm;
}

double signed_rvd(const VoxelMask& pred, const VoxelMask& gt) {
  require_same_dims(pred, gt, "rvd");
  const auto vg = static_cast<double>(gt.count());
  if (vg == 0.0) throw std::invalid_argument("rvd: ground-truth mask is empty");
  return (static_cast<double>(pred.count()) - vg) / vg;
}

double rvd(const VoxelMask& pred, const VoxelMask& gt) { return std::abs(signed_rvd(pred, gt)); }

VoxelMask stable_tumor_baseline(const LongitudinalCase& c) {
  if (c.scans.size() < 2) throw std::invalid_argument("stable_tumor_baseline: case " + c.case_id + " has fewer than 2 scans");
  return c.scans[c.scans.size() - 2].mask;
}

MetricsRecord score_prediction(const std::string& case_id, const VoxelMask& pred, const VoxelMask& gt,
                               const VoxelMask& previous, double spacing_mm) {
  MetricsRecord r;
  r.case_id = case_id;
  r.dice = dice(pred, gt);
  r.hd95_mm = hd95(pred, gt, spacing_mm);
  r.signed_rvd = signed_rvd(pred, gt);
  r.rvd = std::abs(r.signed_rvd);
  r.predicted_volume_mm3 = volume_mm3(pred, spacing_mm);
  r.target_volume_mm3 = volume_mm3(gt, spacing_mm);
  r.grower_rank_stat = rvd(gt, previous);
  return r;
}

std::vector<MetricsRecord> stratify_top_growers(const std::vector<MetricsRecord>& records, double fraction) {
  if (records.empty()) throw std::invalid_argument("stratify_top_growers: no records");
  if (!(fraction > 0.0) || fraction > 1.0) throw std::invalid_argument("stratify_top_growers: fraction must lie in (0, 1]");
  std::vector<MetricsRecord> sorted = records;
  std::sort(sorted.begin(), sorted.end(), [](const MetricsRecord& a, const MetricsRecord& b) {
    if (a.grower_rank_stat != b.grower_rank_stat) return a.grower_rank_stat > b.grower_rank_stat;
    return a.case_id < b.case_id;
  });
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(records.size()) - 1e-12));
  sorted.resize(std::max<std::size_t>(1, std::min(k, sorted.size())));
  return sorted;
}

namespace {

Aggregate aggregate(const std::vector<double>& v) {
  Aggregate a;
  a.n = v.size();
  if (v.empty()) return a;
  double s = 0.0;
  for (double x : v) s += x;
  a.mean = s / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - a.mean) * (x - a.mean);
  a.std = std::sqrt(ss / static_cast<double>(v.size()));
  return a;
}

}  // namespace

MetricSummary summarize(const std::vector<MetricsRecord>& records) {
  std::vector<double> d, h, r;
  for (const auto& rec : records) {
    d.push_back(rec.dice);
    if (rec.hd95_mm) h.push_back(*rec.hd95_mm);
    r.push_back(rec.rvd);
  }
  return {aggregate(d), aggregate(h), aggregate(r)};
}

MethodReport make_method_report(std::string method, std::vector<MetricsRecord> records,
                                const std::vector<std::string>& top_case_ids) {
  MethodReport m;
  m.method = std::move(method);
  m.records = std::move(records);
  m.overall = summarize(m.records);
  const std::set<std::string> top(top_case_ids.begin(), top_case_ids.end());
  std::vector<MetricsRecord> subset;
  for (const auto& r : m.records) {
    if (top.count(r.case_id)) subset.push_back(r);
    if (!r.hd95_mm) m.hd95_exclusions.push_back(r.case_id);
  }
  m.top = summarize(subset);
  return m;
}

EvaluationReport evaluate(const GrowthNet& net, const Cohort& cohort, const std::string& split, int horizon_days,
                          double top_fraction, const std::string& checkpoint_crc) {
  const auto cases = cohort.split(split);
  if (cases.empty()) throw std::invalid_argument("evaluate: split '" + split + "' has no cases");
  EvaluationReport report;
  report.split = split;
  report.checkpoint_crc = checkpoint_crc;
  report.top_fraction = top_fraction;

  std::vector<MetricsRecord> model, baseline;
  for (const LongitudinalCase* c : cases) {
    if (c->scans.size() < 2) throw std::invalid_argument("evaluate: case " + c->case_id + " has fewer than 2 scans");
    const auto tensors = make_case_tensors(*c, horizon_days);
    const Prediction p = predict(net, tensors, tensors.normalized_dates.back());
    const VoxelMask& gt = c->scans.back().mask;
    const VoxelMask& previous = c->scans[c->scans.size() - 2].mask;
    VoxelMask pred = p.mask();
    pred.spacing_mm = c->spacing_mm;
    model.push_back(score_prediction(c->case_id, pred, gt, previous, c->spacing_mm));
    baseline.push_back(score_prediction(c->case_id, stable_tumor_baseline(*c), gt, previous, c->spacing_mm));
  }
  for (const auto& r : stratify_top_growers(model, top_fraction)) report.top_case_ids.push_back(r.case_id);
  report.methods.push_back(make_method_report("deepgrowth", std::move(model), report.top_case_ids));
  report.methods.push_back(make_method_report("stable_baseline", std::move(baseline), report.top_case_ids));
  return report;
}

std::vector<SweepPoint> sweep_time(const GrowthNet& net, const LongitudinalCase& c, int horizon_days, int start_days,
                                   int step_days, std::size_t count, std::size_t n_inputs) {
  if (count == 0) throw std::invalid_argument("sweep_time: count must be >= 1");
  if (c.scans.size() < 2) throw std::invalid_argument("sweep_time: case " + c.case_id + " has fewer than 2 scans");
  if (n_inputs == 0) n_inputs = c.scans.size() - 1;
  if (n_inputs > c.scans.size()) throw std::invalid_argument("sweep_time: more inputs than scans");
  const auto tensors = make_case_tensors(c, horizon_days);
  const int first = c.scans.front().date_days;
  const int last_input = c.scans[n_inputs - 1].date_days - first;
  std::vector<SweepPoint> out;
  for (std::size_t k = 0; k < count; ++k) {
    SweepPoint p;
    p.days = start_days + static_cast<int>(k) * step_days;
    if (p.days < last_input)
      throw std::invalid_argument("sweep_time: query day " + std::to_string(p.days) + " precedes the last input scan (day " +
                                  std::to_string(last_input) + ")");
    const Prediction pred =
        predict(net, tensors, static_cast<double>(p.days) / static_cast<double>(horizon_days), n_inputs);
    p.sdf = pred.sdf;
    p.mask = pred.mask();
    p.mask.spacing_mm = c.spacing_mm;
    p.volume_mm3 = volume_mm3(p.mask, c.spacing_mm);
    out.push_back(std::move(p));
  }
  return out;
}

double mean_abs_volume_change(const std::vector<SweepPoint>& sweep) {
  if (sweep.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t k = 1; k < sweep.size(); ++k) s += std::abs(sweep[k].volume_mm3 - sweep[k - 1].volume_mm3);
  return s / static_cast<double>(sweep.size() - 1);
}

namespace {

json aggregate_json(const Aggregate& a) { return json{{"mean", a.mean}, {"std", a.std}, {"n", a.n}}; }

json summary_json(const MetricSummary& s) {
  return json{{"dice", aggregate_json(s.dice)}, {"hd95_mm", aggregate_json(s.hd95_mm)}, {"rvd", aggregate_json(s.rvd)}};
}

}  // namespace

json to_json(const EvaluationReport& r) {
  json methods = json::array();
  for (const auto& m : r.methods) {
    json cases = json::array();
    for (const auto& rec : m.records)
      cases.push_back({{"case_id", rec.case_id},
                       {"dice", rec.dice},
                       {"hd95_mm", rec.hd95_mm ? json(*rec.hd95_mm) : json(nullptr)},
                       {"rvd", rec.rvd},
                       {"signed_rvd", rec.signed_rvd},
                       {"predicted_volume_mm3", rec.predicted_volume_mm3},
                       {"target_volume_mm3", rec.target_volume_mm3},
                       {"grower_rank_stat", rec.grower_rank_stat}});
    methods.push_back({{"method", m.method},
                       {"cases", cases},
                       {"overall", summary_json(m.overall)},
                       {"top_growers", summary_json(m.top)},
                       {"exclusions", {{"hd95_undefined", m.hd95_exclusions}}}});
  }
  return json{{"split", r.split},
              {"checkpoint_crc", r.checkpoint_crc},
              {"top_fraction", r.top_fraction},
              {"top_case_ids", r.top_case_ids},
              {"methods", methods}};
}

std::string to_csv(const EvaluationReport& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "method,case_id,dice,hd95_mm,rvd,signed_rvd,predicted_volume_mm3,target_volume_mm3,grower_rank_stat,top_grower\n";
  const std::set<std::string> top(r.top_case_ids.begin(), r.top_case_ids.end());
  for (const auto& m : r.methods)
    for (const auto& rec : m.records) {
      os << m.method << ',' << rec.case_id << ',' << rec.dice << ',';
      if (rec.hd95_mm) os << *rec.hd95_mm;
      os << ',' << rec.rvd << ',' << rec.signed_rvd << ',' << rec.predicted_volume_mm3 << ','
         << rec.target_volume_mm3 << ',' << rec.grower_rank_stat << ',' << (top.count(rec.case_id) ? 1 : 0) << '\n';
    }
  return os.str();
}

fs::path write_report(const EvaluationReport& r, const fs::path& dir) {
  fs::create_directories(dir);
  const std::string stem = "report_" + r.split + "_" + (r.checkpoint_crc.empty() ? "nockpt" : r.checkpoint_crc);
  const fs::path json_path = dir / (stem + ".json");
  std::ofstream js(json_path);
  js << to_json(r).dump(2) << '\n';
  std::ofstream csv(dir / (stem + ".csv"));
  csv << to_csv(r);
  if (!js || !csv) throw std::runtime_error("cannot write report into " + dir.string());
  return json_path;
}

}  // namespace dg
