#include "deepgrowth/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "deepgrowth/checkpoint.hpp"
#include "deepgrowth/cohort.hpp"
#include "deepgrowth/evaluation.hpp"
#include "deepgrowth/sdf.hpp"

namespace dg {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig run_config_from_json(const json& j, RunConfig base) {
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (k != "model" && k != "train" && k != "command")
      throw std::invalid_argument("config: unknown key '" + k + "'");
  if (j.contains("model")) base.model = model_config_from_json(j["model"], base.model);
  if (j.contains("train")) base.train = train_config_from_json(j["train"], base.train);
  base.model.validate();
  base.train.validate();
  return base;
}

json to_json(const RunConfig& c) { return json{{"model", to_json(c.model)}, {"train", to_json(c.train)}}; }

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

namespace {

std::array<std::size_t, 2> plane_axes(int axis) {
  if (axis == 0) return {1, 2};
  if (axis == 1) return {0, 2};
  return {0, 1};
}

void check_slice(const Dims& dims, int axis, std::size_t index) {
  if (axis < 0 || axis > 2) throw std::invalid_argument("axis must be 0, 1 or 2");
  if (index >= dims[static_cast<std::size_t>(axis)])
    throw std::invalid_argument("slice index " + std::to_string(index) + " out of range [0, " +
                                std::to_string(dims[static_cast<std::size_t>(axis)]) + ")");
}

std::size_t voxel_of(const Dims& dims, int axis, std::size_t index, std::size_t r, std::size_t c) {
  std::array<std::size_t, 3> p{};
  const auto pa = plane_axes(axis);
  p[static_cast<std::size_t>(axis)] = index;
  p[pa[0]] = r;
  p[pa[1]] = c;
  return flat_index(dims, p[0], p[1], p[2]);
}

}  // namespace

Slice extract_slice(const Dims& dims, const std::vector<double>& values, int axis, std::size_t index) {
  check_slice(dims, axis, index);
  if (values.size() != voxel_count(dims)) throw std::invalid_argument("extract_slice: value count does not match dims");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double vmin = *lo, range = *hi - *lo;
  const auto pa = plane_axes(axis);
  Slice s{dims[pa[0]], dims[pa[1]], {}};
  s.pixels.resize(s.rows * s.cols, 0);
  if (range > 0.0)
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < s.cols; ++c) {
        const double v = (values[voxel_of(dims, axis, index, r, c)] - vmin) / range;
        s.pixels[r * s.cols + c] = static_cast<std::uint8_t>(std::lround(255.0 * v));
      }
  return s;
}

Slice contour_slice(const VoxelMask& mask, int axis, std::size_t index) {
  check_slice(mask.dims, axis, index);
  const auto pa = plane_axes(axis);
  Slice s{mask.dims[pa[0]], mask.dims[pa[1]], {}};
  s.pixels.resize(s.rows * s.cols, 0);
  auto on = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
    if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(s.rows) || c >= static_cast<std::ptrdiff_t>(s.cols)) return false;
    return mask.occupancy[voxel_of(mask.dims, axis, index, static_cast<std::size_t>(r), static_cast<std::size_t>(c))] != 0;
  };
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < s.cols; ++c) {
      const auto ir = static_cast<std::ptrdiff_t>(r), ic = static_cast<std::ptrdiff_t>(c);
      if (on(ir, ic) && (!on(ir - 1, ic) || !on(ir + 1, ic) || !on(ir, ic - 1) || !on(ir, ic + 1)))
        s.pixels[r * s.cols + c] = 255;
    }
  return s;
}

void write_pgm(const fs::path& path, const Slice& s) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << "P5\n" << s.cols << ' ' << s.rows << "\n255\n";
  os.write(reinterpret_cast<const char*>(s.pixels.data()), static_cast<std::streamsize>(s.pixels.size()));
  if (!os) throw DataError("write failed for " + path.string());
}

Slice read_pgm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::string magic;
  std::size_t maxval = 0;
  Slice s;
  is >> magic >> s.cols >> s.rows >> maxval;
  if (!is || magic != "P5" || maxval != 255) throw DataError(path.string() + ": not an 8-bit P5 graymap");
  is.get();
  s.pixels.resize(s.rows * s.cols);
  if (!is.read(reinterpret_cast<char*>(s.pixels.data()), static_cast<std::streamsize>(s.pixels.size())))
    throw DataError(path.string() + ": truncated graymap");
  return s;
}

namespace {

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string loss_log_csv(const std::vector<LossLogEntry>& log) {
  std::string s = "epoch,rec,reg,total\n";
  for (const auto& e : log)
    s += std::to_string(e.epoch) + "," + format_double(e.rec) + "," + format_double(e.reg) + "," +
         format_double(e.total) + "\n";
  return s;
}

std::vector<VolumeRecord> read_all_records(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<VolumeRecord> out;
  while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_volume(is, path.string()));
  if (out.empty()) throw DataError(path.string() + ": no volume records");
  return out;
}

std::vector<double> record_values(const VolumeRecord& r) {
  if (r.dtype == VolumeDtype::U8) return {r.u8.begin(), r.u8.end()};
  return {r.f32.begin(), r.f32.end()};
}

const VolumeRecord& pick_record(const std::vector<VolumeRecord>& recs, std::size_t k, const fs::path& path) {
  if (k >= recs.size())
    throw std::invalid_argument(path.string() + ": record " + std::to_string(k) + " out of range (" +
                                std::to_string(recs.size()) + " records)");
  return recs[k];
}

/// SDF rounded to real32 and the mask taken from the rounded values, so that
/// the written mask is exactly sdf_to_mask of the written SDF.
std::pair<std::vector<float>, VoxelMask> float_outputs(const std::vector<double>& sdf, const Dims& dims,
                                                       double spacing) {
  std::vector<float> f(sdf.begin(), sdf.end());
  const std::vector<double> back(f.begin(), f.end());
  return {std::move(f), sdf_to_mask(back, dims, spacing)};
}

void check_case_dims(const Checkpoint& ck, const LongitudinalCase& c) {
  if (c.dims() != ck.model.volume)
    throw ConfigMismatchError("case " + c.case_id + " has shape " + std::to_string(c.dims()[0]) + "x" +
                              std::to_string(c.dims()[1]) + "x" + std::to_string(c.dims()[2]) +
                              ", checkpoint expects " + std::to_string(ck.model.volume[0]) + "x" +
                              std::to_string(ck.model.volume[1]) + "x" + std::to_string(ck.model.volume[2]));
}

Checkpoint open_checkpoint(const fs::path& path, const std::string& config_path) {
  if (config_path.empty()) return load_checkpoint(path);
  return load_checkpoint(path, load_run_config(config_path).model);
}

json command_record(const std::string& name, json args) { return json{{"name", name}, {"args", std::move(args)}}; }

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string out, spec;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_cases;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  json j = json::object();
  if (!a.spec.empty()) {
    std::ifstream is(a.spec);
    if (!is) throw std::invalid_argument("cannot open spec " + a.spec);
    try {
      j = json::parse(is);
    } catch (const json::exception& e) {
      throw std::invalid_argument(a.spec + ": " + e.what());
    }
  }
  if (a.seed) j["seed"] = *a.seed;
  if (a.n_cases) j["n_cases"] = *a.n_cases;
  const CohortSpec spec = cohort_spec_from_json(j);
  Cohort cohort = generate_cohort(spec);
  write_cohort(cohort, a.out);
  write_json_file(fs::path(a.out) / "resolved_config.json", to_json(spec));

  const auto& m = cohort.manifest;
  out << "cohort: " << cohort.cases.size() << " cases, shape " << m.shape[0] << "x" << m.shape[1] << "x" << m.shape[2]
      << ", spacing " << m.spacing_mm << " mm, horizon " << m.horizon_days << " days\n";
  for (const auto& [name, ids] : m.splits) out << "  split " << name << ": " << ids.size() << "\n";
  for (const auto& [name, ids] : m.groups) out << "  group " << name << ": " << ids.size() << "\n";
  out << "written to " << a.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data, out, config, split = "train", resume;
  std::vector<std::string> cases;
  std::optional<std::size_t> epochs, n_points, checkpoint_every, downsample, latent_channels;
  std::optional<double> lr, output_scale;
  std::optional<std::uint64_t> seed, init_seed;
  std::optional<int> encoding_order;
  bool no_temporal_encoding = false, raw_tau = false, no_time = false;
  std::size_t log_every = 10;
};

RunConfig resolve_train_config(const TrainArgs& a, const Dims& shape) {
  RunConfig rc;
  std::string path = a.config;
  if (path.empty())
    if (const char* env = std::getenv(kConfigEnv); env && *env) path = env;
  json j = json::object();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config " + path);
    try {
      j = json::parse(is);
    } catch (const json::exception& e) {
      throw std::invalid_argument(path + ": " + e.what());
    }
  }
  if (j.is_object() && j.contains("model") && j["model"].is_object() && j["model"].contains("volume")) {
    if (j["model"]["volume"].get<Dims>() != shape)
      throw std::invalid_argument("config volume does not match the dataset shape");
  }
  rc.model.volume = shape;
  rc = run_config_from_json(j, rc);
  if (a.epochs) rc.train.epochs = *a.epochs;
  if (a.lr) rc.train.lr = *a.lr;
  if (a.seed) rc.train.seed = *a.seed;
  if (a.n_points) rc.train.loss.n_points = *a.n_points;
  if (a.checkpoint_every) rc.train.checkpoint_every = *a.checkpoint_every;
  if (a.downsample) rc.model.downsample = *a.downsample;
  if (a.latent_channels) rc.model.latent_channels = *a.latent_channels;
  if (a.encoding_order) rc.model.encoding_order = *a.encoding_order;
  if (a.init_seed) rc.model.init_seed = *a.init_seed;
  if (a.output_scale) rc.model.output_scale = *a.output_scale;
  if (a.no_temporal_encoding || a.raw_tau) rc.model.time_mode = TimeMode::Raw;
  if (a.no_time) rc.model.time_mode = TimeMode::None;
  rc.model.validate();
  rc.train.validate();
  return rc;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (!fs::exists(a.data)) throw std::invalid_argument("dataset not found: " + a.data);
  const Cohort cohort = load_cohort(a.data);
  const RunConfig rc = resolve_train_config(a, cohort.manifest.shape);

  std::vector<const LongitudinalCase*> selected;
  if (a.cases.empty()) {
    selected = cohort.split(a.split);
  } else {
    for (const auto& id : a.cases) selected.push_back(&cohort.find(id));
  }
  if (selected.empty()) throw std::invalid_argument("no training cases selected");
  const int horizon = cohort.manifest.horizon_days;

  std::vector<TrainingCase> cases;
  for (const auto* c : selected) cases.push_back(make_training_case(*c, horizon));

  std::unique_ptr<GrowthNet> net;
  TrainState state;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume, rc.model);
    if (ck.horizon_days != horizon)
      throw ConfigMismatchError(a.resume + ": checkpoint horizon " + std::to_string(ck.horizon_days) +
                                " days, dataset horizon " + std::to_string(horizon));
    TrainConfig stored = ck.train, wanted = rc.train;
    stored.epochs = wanted.epochs;
    stored.checkpoint_every = wanted.checkpoint_every;
    if (!(stored == wanted)) throw ConfigMismatchError(a.resume + ": training configuration differs from the checkpoint");
    net = std::move(ck.net);
    state = std::move(ck.state);
    out << "resuming from epoch " << state.epochs_completed << "\n";
  } else {
    net = std::make_unique<GrowthNet>(rc.model);
  }

  const fs::path dir = a.out;
  fs::create_directories(dir);
  json resolved = to_json(rc);
  json cmd_args{{"data", a.data}, {"split", a.split}, {"cases", a.cases}, {"resume", a.resume}};
  resolved["command"] = command_record("train", cmd_args);
  write_json_file(dir / "resolved_config.json", resolved);

  const fs::path ckpt = dir / "checkpoint.dgc";
  TrainHooks hooks;
  hooks.on_epoch = [&](const LossLogEntry& e) {
    if (a.log_every && (e.epoch % a.log_every == 0 || e.epoch + 1 == rc.train.epochs))
      out << "epoch " << e.epoch << " rec " << format_double(e.rec) << " reg " << format_double(e.reg) << " total "
          << format_double(e.total) << std::endl;
  };
  hooks.on_checkpoint = [&](const TrainState& s) {
    save_checkpoint(ckpt, *net, rc.train, s, horizon);
    write_text_file(dir / "loss_log.csv", loss_log_csv(s.log));
  };
  train(*net, cases, rc.train, state, hooks);
  save_checkpoint(ckpt, *net, rc.train, state, horizon);
  write_text_file(dir / "loss_log.csv", loss_log_csv(state.log));
  out << "checkpoint written to " << ckpt.string() << "\n";
  return kExitOk;
}

struct PredictArgs {
  std::string checkpoint, data, case_id, out, config;
  int target_days = 0;
  std::size_t inputs = 0;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const Checkpoint ck = open_checkpoint(a.checkpoint, a.config);
  if (!fs::exists(a.data)) throw std::invalid_argument("dataset not found: " + a.data);
  const CohortManifest manifest = load_manifest(a.data);
  const LongitudinalCase c = load_case(a.data, manifest, a.case_id);
  check_case_dims(ck, c);
  const std::size_t n_inputs = a.inputs ? a.inputs : c.scans.size() - 1;
  if (c.scans.size() < 2 || n_inputs < 1 || n_inputs > c.scans.size())
    throw std::invalid_argument("case " + c.case_id + " lacks the requested prior scans");
  const int last_input = c.scans[n_inputs - 1].date_days - c.scans.front().date_days;
  if (a.target_days < last_input)
    throw std::invalid_argument("target day " + std::to_string(a.target_days) + " precedes the last input scan (day " +
                                std::to_string(last_input) + ")");

  const auto tensors = make_case_tensors(c, ck.horizon_days);
  const Prediction p = predict(*ck.net, tensors, static_cast<double>(a.target_days) / ck.horizon_days, n_inputs);
  const auto [sdf, mask] = float_outputs(p.sdf, p.dims, c.spacing_mm);

  const fs::path dir = a.out;
  fs::create_directories(dir);
  const std::string stem = c.case_id + "_day" + std::to_string(a.target_days);
  save_float_volume_file(dir / (stem + "_sdf.bin"), p.dims, sdf);
  save_mask_file(dir / (stem + "_mask.bin"), mask);
  json resolved = to_json(RunConfig{ck.model, ck.train});
  resolved["command"] = command_record(
      "predict", {{"checkpoint", a.checkpoint}, {"data", a.data}, {"case", a.case_id}, {"target_days", a.target_days},
                  {"inputs", n_inputs}, {"horizon_days", ck.horizon_days}});
  write_json_file(dir / "resolved_config.json", resolved);
  out << c.case_id << " day " << a.target_days << ": predicted volume "
      << static_cast<double>(mask.count()) * std::pow(c.spacing_mm, 3) << " mm3\n";
  return kExitOk;
}

struct SweepArgs {
  std::string checkpoint, data, case_id, out, config;
  int start_days = 0, step_days = 180;
  std::size_t count = 4, inputs = 0;
};

int cmd_sweep_time(const SweepArgs& a, std::ostream& out) {
  if (a.count < 1) throw std::invalid_argument("count must be >= 1");
  const Checkpoint ck = open_checkpoint(a.checkpoint, a.config);
  if (!fs::exists(a.data)) throw std::invalid_argument("dataset not found: " + a.data);
  const CohortManifest manifest = load_manifest(a.data);
  const LongitudinalCase c = load_case(a.data, manifest, a.case_id);
  check_case_dims(ck, c);
  const auto sweep = sweep_time(*ck.net, c, ck.horizon_days, a.start_days, a.step_days, a.count, a.inputs);

  const fs::path dir = a.out;
  fs::create_directories(dir);
  std::string csv = "days,volume_mm3\n";
  for (std::size_t k = 0; k < sweep.size(); ++k) {
    const auto [sdf, mask] = float_outputs(sweep[k].sdf, c.dims(), c.spacing_mm);
    save_mask_file(dir / (c.case_id + "_sweep" + std::to_string(k) + "_day" + std::to_string(sweep[k].days) + "_mask.bin"),
                   mask);
    csv += std::to_string(sweep[k].days) + "," + format_double(sweep[k].volume_mm3) + "\n";
  }
  write_text_file(dir / "volume_curve.csv", csv);
  json resolved = to_json(RunConfig{ck.model, ck.train});
  resolved["command"] = command_record(
      "sweep-time", {{"checkpoint", a.checkpoint}, {"data", a.data}, {"case", a.case_id}, {"start_days", a.start_days},
                     {"step_days", a.step_days}, {"count", a.count}, {"inputs", a.inputs},
                     {"horizon_days", ck.horizon_days}});
  write_json_file(dir / "resolved_config.json", resolved);
  out << csv;
  return kExitOk;
}

struct EvaluateArgs {
  std::string checkpoint, data, split = "test", out, config;
  double top_fraction = 0.2;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const Checkpoint ck = open_checkpoint(a.checkpoint, a.config);
  if (!fs::exists(a.data)) throw std::invalid_argument("dataset not found: " + a.data);
  const Cohort cohort = load_cohort(a.data);
  for (const auto* c : cohort.split(a.split)) check_case_dims(ck, *c);
  const EvaluationReport r =
      evaluate(*ck.net, cohort, a.split, ck.horizon_days, a.top_fraction, file_crc32(a.checkpoint));
  const fs::path path = write_report(r, a.out);
  json resolved = to_json(RunConfig{ck.model, ck.train});
  resolved["command"] = command_record("evaluate", {{"checkpoint", a.checkpoint},
                                                    {"data", a.data},
                                                    {"split", a.split},
                                                    {"top_fraction", a.top_fraction},
                                                    {"horizon_days", ck.horizon_days}});
  write_json_file(fs::path(a.out) / "resolved_config.json", resolved);

  out << std::fixed << std::setprecision(4);
  for (const auto& m : r.methods) {
    out << m.method << ": dice " << m.overall.dice.mean << " +- " << m.overall.dice.std << ", hd95 "
        << m.overall.hd95_mm.mean << " +- " << m.overall.hd95_mm.std << " mm, rvd " << m.overall.rvd.mean << " +- "
        << m.overall.rvd.std << "; top growers dice " << m.top.dice.mean << "\n";
  }
  out << "report: " << path.string() << "\n";
  return kExitOk;
}

struct ExportArgs {
  std::string volume, out, mask, overlay_out;
  std::size_t record = 0, index = 0;
  std::optional<std::size_t> mask_record;
  int axis = 0;
};

int cmd_export_slices(const ExportArgs& a, std::ostream& out) {
  const auto recs = read_all_records(a.volume);
  const VolumeRecord& vol = pick_record(recs, a.record, a.volume);
  const Slice s = extract_slice(vol.dims, record_values(vol), a.axis, a.index);
  write_pgm(a.out, s);
  out << "slice " << s.cols << "x" << s.rows << " written to " << a.out << "\n";

  if (!a.mask.empty()) {
    const auto mrecs = read_all_records(a.mask);
    const VolumeRecord& mr = pick_record(mrecs, a.mask_record.value_or(mrecs.size() - 1), a.mask);
    if (mr.dtype != VolumeDtype::U8) throw std::invalid_argument(a.mask + ": overlay record is not a u8 mask");
    if (mr.dims != vol.dims) throw std::invalid_argument("overlay mask shape differs from the volume");
    VoxelMask m(mr.dims);
    for (std::size_t i = 0; i < m.occupancy.size(); ++i) m.occupancy[i] = mr.u8[i] ? 1 : 0;
    fs::path overlay = a.overlay_out;
    if (overlay.empty()) {
      const fs::path base = a.out;
      overlay = base.parent_path() / (base.stem().string() + "_contour.pgm");
    }
    write_pgm(overlay, contour_slice(m, a.axis, a.index));
    out << "contour written to " << overlay.string() << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"deepgrowth: longitudinal tumor growth prediction"};
  app.name(args.empty() ? "deepgrowth" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic longitudinal cohort");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--spec", synth.spec, "Cohort spec (JSON)");
  s->add_option("--seed", synth.seed, "Cohort seed");
  s->add_option("--n-cases", synth.n_cases, "Number of cases");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model on a cohort");
  t->add_option("--data", tr.data, "Cohort directory")->required();
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--config", tr.config, std::string("Run config (JSON); defaults to $") + kConfigEnv);
  t->add_option("--split", tr.split, "Training split")->capture_default_str();
  t->add_option("--cases", tr.cases, "Train on these case ids instead of a split")->delimiter(',');
  t->add_option("--resume", tr.resume, "Checkpoint to continue from");
  t->add_option("--epochs", tr.epochs);
  t->add_option("--lr", tr.lr);
  t->add_option("--seed", tr.seed, "Training seed");
  t->add_option("--init-seed", tr.init_seed, "Parameter initialization seed");
  t->add_option("--n-points", tr.n_points, "Sample points per tumor");
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Epochs between checkpoints (0: only at the end)");
  t->add_option("--downsample", tr.downsample, "Encoder downsampling factor s");
  t->add_option("--latent-channels", tr.latent_channels, "Latent channels C");
  t->add_option("--encoding-order", tr.encoding_order, "Temporal encoding order l");
  t->add_option("--output-scale", tr.output_scale, "Decoder output gain");
  auto* nte = t->add_flag("--no-temporal-encoding", tr.no_temporal_encoding, "Feed raw tau instead of its encoding");
  auto* raw = t->add_flag("--raw-tau", tr.raw_tau, "Same as --no-temporal-encoding");
  t->add_flag("--no-time", tr.no_time, "No time conditioning")->excludes(nte)->excludes(raw);
  t->add_option("--log-every", tr.log_every, "Print every n-th epoch (0: silent)")->capture_default_str();

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Predict a tumor at a given date");
  p->add_option("--checkpoint", pr.checkpoint)->required();
  p->add_option("--data", pr.data, "Cohort directory")->required();
  p->add_option("--case", pr.case_id)->required();
  p->add_option("--target-days", pr.target_days, "Target date, days after the first scan")->required();
  p->add_option("--inputs", pr.inputs, "Number of prior scans used (default: all but the last)");
  p->add_option("--config", pr.config, "Expected run config; a different model configuration is rejected");
  p->add_option("--out", pr.out, "Output directory")->required();

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep-time", "Query a case at evenly spaced dates");
  w->add_option("--checkpoint", sw.checkpoint)->required();
  w->add_option("--data", sw.data, "Cohort directory")->required();
  w->add_option("--case", sw.case_id)->required();
  w->add_option("--start-days", sw.start_days)->required();
  w->add_option("--step-days", sw.step_days)->capture_default_str();
  w->add_option("--count", sw.count)->capture_default_str();
  w->add_option("--inputs", sw.inputs, "Number of prior scans used (default: all but the last)");
  w->add_option("--config", sw.config, "Expected run config; a different model configuration is rejected");
  w->add_option("--out", sw.out, "Output directory")->required();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a checkpoint and the stable-tumor baseline on a split");
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--data", ev.data, "Cohort directory")->required();
  e->add_option("--split", ev.split)->capture_default_str();
  e->add_option("--top-fraction", ev.top_fraction)->capture_default_str();
  e->add_option("--config", ev.config, "Expected run config; a different model configuration is rejected");
  e->add_option("--out", ev.out, "Report directory")->required();

  ExportArgs ex;
  auto* x = app.add_subcommand("export-slices", "Write a volume slice as a graymap");
  x->add_option("--volume", ex.volume, "DGVOL file")->required();
  x->add_option("--record", ex.record, "Record within the file")->capture_default_str();
  x->add_option("--axis", ex.axis)->required()->check(CLI::Range(0, 2));
  x->add_option("--index", ex.index)->required();
  x->add_option("--out", ex.out, "Output .pgm")->required();
  x->add_option("--mask", ex.mask, "Mask file for the contour map");
  x->add_option("--mask-record", ex.mask_record, "Record within the mask file (default: last)");
  x->add_option("--overlay-out", ex.overlay_out, "Contour .pgm (default: <out>_contour.pgm)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  if (argv.empty()) argv.push_back("deepgrowth");

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*t) return cmd_train(tr, out);
    if (*p) return cmd_predict(pr, out);
    if (*w) return cmd_sweep_time(sw, out);
    if (*e) return cmd_evaluate(ev, out);
    if (*x) return cmd_export_slices(ex, out);
  } catch (const NumericalError& ne) {
    err << "numerical failure: " << ne.what() << " (lr " << ne.lr << ", epoch " << ne.epoch << ", case " << ne.case_id
        << ")\n";
    return kExitNumerical;
  } catch (const CheckpointError& ce) {
    err << "checkpoint error: " << ce.what() << "\n";
    return kExitCheckpoint;
  } catch (const DataError& de) {
    err << "data error: " << de.what() << "\n";
    return kExitUsage;
  } catch (const GeometryError& ge) {
    err << "geometry error: " << ge.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& ia) {
    err << "error: " << ia.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& fe) {
    err << "filesystem error: " << fe.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex2) {
    err << "error: " << ex2.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace dg
