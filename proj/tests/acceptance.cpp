// Acceptance runner: one pass/fail line per criterion.
//
//   acceptance --criterion N [--work DIR]
//   acceptance --criterion all [--work DIR]

#include <algorithm>
#include <chrono>
#include <cstring>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "deepgrowth/checkpoint.hpp"
#include "deepgrowth/cli.hpp"
#include "deepgrowth/evaluation.hpp"
#include "deepgrowth/sdf.hpp"
#include "deepgrowth/temporal.hpp"
#include "deepgrowth/trainer.hpp"
#include "reference.hpp"
#include "test_util.hpp"

using namespace dg;
namespace fs = std::filesystem;
using dg::testing::check_gradients;
using dg::testing::probe_sum;
using dg::testing::random_tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

void progress(const std::string& s) {
  std::printf("  %s\n", s.c_str());
  std::fflush(stdout);
}

// --- 1: SDF oracle ------------------------------------------------------------

Outcome sdf_oracle(const fs::path&) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  int masks = 0, round_trips = 0;
  while (masks < 60) {
    const VoxelMask m = masks % 2 ? dg::testing::random_two_phase_mask({12, 12, 12}, rng)
                                  : dg::testing::random_blob_mask({12, 12, 12}, rng, 1 + masks % 4);
    if (m.count() == 0 || m.count() == m.occupancy.size()) continue;
    const SdfGrid s = mask_to_sdf(m);
    const auto brute = reference::signed_distance(m);
    for (std::size_t i = 0; i < brute.size(); ++i) worst = std::max(worst, std::abs(s.values[i] - brute[i]));
    round_trips += sdf_to_mask(s) == m;
    ++masks;
  }
  const double t = seconds_since(t0);
  return {worst < 1e-9 && round_trips == masks && t < 60.0,
          fmt("%d masks, max |err| %.3g, exact round trips %d/%d, %.1f s", masks, worst, round_trips, masks, t)};
}

// --- 2: analytic spheres ------------------------------------------------------

Outcome analytic_spheres(const fs::path&) {
  const auto t0 = Clock::now();
  const Dims d{32, 32, 32};
  double worst = 0.0;
  int spheres = 0;
  for (double r = 4.0; r <= 12.0 + 1e-9; r += 0.5) {
    for (const Vec3& c : {Vec3{15.5, 15.5, 15.5}, Vec3{15.2, 16.1, 15.7}}) {
      const auto field = analytic_sdf_sphere(c, r);
      const SdfGrid edt = mask_to_sdf(voxelize(field, d));
      const SdfGrid exact = sample_field(field, d);
      for (std::size_t i = 0; i < edt.values.size(); ++i)
        worst = std::max(worst, std::abs(edt.values[i] - exact.values[i]));
      ++spheres;
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1.0 && t < 30.0, fmt("%d spheres r=4..12, max |EDT - analytic| %.4f voxel, %.1f s", spheres, worst, t)};
}

// --- 3: gradients -------------------------------------------------------------

ModelConfig tiny_model() {
  ModelConfig c;
  c.volume = {8, 8, 8};
  c.latent_channels = 4;
  c.downsample = 2;
  c.encoding_order = 3;
  c.encoder_width = 2;
  c.lstm_layers = 1;
  c.lstm_hidden = 3;
  c.decoder_width = 8;
  c.decoder_layers = 3;
  return c;
}

Outcome gradients(const fs::path&) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(7);
  double worst_op = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
  auto op = [&](const std::string& name, std::vector<ad::Tensor> inputs, const std::function<ad::Tensor()>& f) {
    const auto r = check_gradients(std::move(inputs), f, 1e-6);
    checked += r.checked;
    if (r.max_rel >= worst_op) worst_op = r.max_rel, worst_name = name;
  };
  // Inputs are kept away from kinks (relu at 0, l1 at ties).
  auto away_from_zero = [&](ad::Shape s) {
    auto t = random_tensor(std::move(s), rng, 0.1, 1.0);
    std::bernoulli_distribution flip(0.5);
    for (auto& v : t.mutable_values()) v = flip(rng) ? -v : v;
    return t;
  };

  auto x = random_tensor({2, 5, 4, 6}, rng);
  auto k3 = random_tensor({3, 2, 3, 3, 3}, rng), k1 = random_tensor({3, 2, 1, 1, 1}, rng);
  auto b3 = random_tensor({3}, rng);
  op("conv3d s1 p1", {x, k3, b3}, [&] { return probe_sum(ad::conv3d(x, k3, b3, 1, 1)); });
  op("conv3d s2 p1", {x, k3, b3}, [&] { return probe_sum(ad::conv3d(x, k3, b3, 2, 1)); });
  op("conv3d s1 p0", {x, k3, b3}, [&] { return probe_sum(ad::conv3d(x, k3, b3, 1, 0)); });
  op("conv3d 1x1", {x, k1, b3}, [&] { return probe_sum(ad::conv3d(x, k1, b3, 1, 0)); });

  auto in = random_tensor({2, 3, 5}, rng), w = random_tensor({4, 5}, rng), b = random_tensor({4}, rng);
  op("linear", {in, w, b}, [&] { return probe_sum(ad::linear(in, w, b)); });

  auto a = random_tensor({3, 4}, rng, -2, 2), c = random_tensor({3, 4}, rng, -2, 2);
  auto nz = away_from_zero({3, 4});
  op("sigmoid", {a}, [&] { return probe_sum(ad::sigmoid(a)); });
  op("tanh", {a}, [&] { return probe_sum(ad::tanh(a)); });
  op("relu", {nz}, [&] { return probe_sum(ad::relu(nz)); });
  op("sine w=30", {a}, [&] { return probe_sum(ad::sine(a, 30.0)); });
  op("sine w=1", {a}, [&] { return probe_sum(ad::sine(a, 1.0)); });
  op("add", {a, c}, [&] { return probe_sum(ad::add(a, c)); });
  op("sub", {a, c}, [&] { return probe_sum(ad::sub(a, c)); });
  op("mul", {a, c}, [&] { return probe_sum(ad::mul(a, c)); });
  op("scale", {a}, [&] { return probe_sum(ad::scale(a, -1.7)); });
  op("dropout", {a}, [&] {
    std::mt19937_64 r(3);
    return probe_sum(ad::dropout(a, 0.4, true, r));
  });
  op("sum", {a}, [&] { return ad::sum(ad::mul(a, a)); });
  op("mean", {a}, [&] { return ad::mean(ad::mul(a, c)); });

  auto g1 = random_tensor({2, 2, 3, 2}, rng), g2 = random_tensor({3, 2, 3, 2}, rng);
  op("concat0", {g1, g2}, [&] { return probe_sum(ad::concat0({g1, g2})); });
  auto p1 = random_tensor({5, 3}, rng), p2 = random_tensor({5, 2}, rng);
  op("concat_last", {p1, p2}, [&] { return probe_sum(ad::concat_last(p1, p2)); });
  op("slice0", {g2}, [&] { return probe_sum(ad::slice0(g2, 1, 2)); });
  auto code = random_tensor({4}, rng);
  op("broadcast_to_grid", {code}, [&] { return probe_sum(ad::broadcast_to_grid(code, 2, 3, 2)); });
  op("upsample2", {g1}, [&] { return probe_sum(ad::upsample2(g1)); });

  auto grid = random_tensor({3, 3, 4, 5}, rng), pts = random_tensor({12, 3}, rng, -0.95, 0.95);
  op("grid_sample_trilinear", {grid, pts}, [&] { return probe_sum(ad::grid_sample_trilinear(grid, pts)); });

  auto t1 = random_tensor({4, 3}, rng), t2 = random_tensor({4, 3}, rng);
  op("l1_mean", {t1, t2}, [&] { return ad::l1_mean(t1, t2); });
  auto l2a = random_tensor({2, 3}, rng), l2b = random_tensor({4}, rng);
  op("l2_norm_mean", {l2a, l2b}, [&] { return ad::l2_norm_mean({l2a, l2b}); });
  auto s1 = random_tensor({1}, rng), s2 = random_tensor({1}, rng);
  op("weighted_sum", {s1, s2}, [&] { return ad::weighted_sum({ad::sum(s1), ad::sum(ad::mul(s2, s2))}, {0.3, 1.2}); });

  auto z = random_tensor({3, 2, 2, 2}, rng);
  const auto tcode = temporal_encode(0.41, 2);
  op("concat_code_to_grid", {z}, [&] {
    std::mt19937_64 r(5);
    return probe_sum(concat_code_to_grid(z, tcode, 0.3, true, r));
  });

  {
    ad::ParameterSet ps;
    std::mt19937_64 init(9);
    DecoderConfig dc;
    dc.latent_channels = 3;
    dc.width = 8;
    dc.hidden_layers = 3;
    DecoderMlp mlp(dc, ps, init);
    auto lat = random_tensor({3, 3, 3, 3}, rng), q = random_tensor({6, 3}, rng, -0.9, 0.9);
    std::vector<ad::Tensor> ins{lat, q};
    for (auto& t : ps.tensors()) ins.push_back(t);
    op("decode_sdf", ins, [&] { return probe_sum(decode_sdf(mlp, LatentGrid{lat}, q)); });
  }

  // End to end: encoder, recurrent module and decoder under the training loss.
  GrowthNet net(tiny_model());
  std::uniform_real_distribution<double> nudge(-0.05, 0.05);
  for (auto& t : net.parameters().tensors())
    if (t.shape().size() == 1)
      for (auto& v : t.mutable_values()) v += nudge(rng);
  TrainingCase tc;
  tc.tensors.case_id = "fd";
  for (int s = 0; s < 3; ++s) {
    const auto mask = voxelize(analytic_sdf_sphere({3.5, 3.4, 3.6}, 1.8 + 0.6 * s), {8, 8, 8});
    std::vector<double> m(mask.occupancy.begin(), mask.occupancy.end()), img(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) img[i] = 1.6 * m[i] - 0.8 + 0.1 * std::sin(3.0 * i);
    tc.tensors.images.push_back(ad::Tensor::from({8, 8, 8}, img));
    tc.tensors.masks.push_back(ad::Tensor::from({8, 8, 8}, m));
    tc.tensors.normalized_dates.push_back(0.3 * s);
    tc.targets.push_back(mask_to_sdf(mask));
  }
  LossConfig lc;
  lc.n_points = 48;
  lc.clamp_dist = 3.0;
  auto loss = [&] {
    std::mt19937_64 r(17);
    const auto out = forward_latents(net, tc.tensors, false, r);
    return compute_loss(net, out, tc.targets, lc, r).total;
  };
  const auto params = net.parameters().tensors();
  const auto e2e = check_gradients(params, loss, 1e-6, 3);
  const double t = seconds_since(t0);
  return {worst_op < 1e-4 && e2e.max_rel < 1e-3 && t < 300.0,
          fmt("ops: %zu entries, max rel err %.2e (%s); end-to-end 8^3 C=4: %zu entries over %zu tensors, max rel "
              "err %.2e; %.1f s",
              checked, worst_op, worst_name.c_str(), e2e.checked, params.size(), e2e.max_rel, t)};
}

// --- 4: temporal encoding ------------------------------------------------------

Outcome temporal(const fs::path&) {
  double worst = 0.0, min_gap = 1e300;
  bool in_range = true;
  for (int l : {1, 2, 4, 6, 8}) {
    std::vector<std::vector<double>> codes;
    for (int i = 0; i <= 1000; ++i) {
      const double tau = i / 1000.0;
      const auto c = temporal_encode(tau, l).code;
      if (c.size() != static_cast<std::size_t>(2 * l)) return {false, fmt("l=%d: code length %zu", l, c.size())};
      for (int k = 0; k < l; ++k) {
        const double arg = std::pow(2.0, k) * std::numbers::pi * tau;
        worst = std::max({worst, std::abs(c[2 * k] - std::sin(arg)), std::abs(c[2 * k + 1] - std::cos(arg))});
      }
      for (double v : c) in_range &= std::abs(v) <= 1.0;
      codes.push_back(c);
    }
    for (std::size_t i = 0; i < codes.size(); ++i)
      for (std::size_t j = i + 1; j < codes.size(); ++j) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < codes[i].size(); ++k) d2 += (codes[i][k] - codes[j][k]) * (codes[i][k] - codes[j][k]);
        min_gap = std::min(min_gap, std::sqrt(d2));
      }
  }
  return {worst < 1e-6 && in_range && min_gap > 0.0,
          fmt("l in {1,2,4,6,8}, 1001 taus in [0,1]: max |err| %.2e, in [-1,1]: %s, min pairwise distance %.3g", worst,
              in_range ? "yes" : "no", min_gap)};
}

// --- 5: metric oracles ---------------------------------------------------------

Outcome metric_oracles(const fs::path&) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(55);
  int pairs = 0, dice_exact = 0, rvd_exact = 0;
  double hd_worst = 0.0;
  while (pairs < 240) {
    const Dims d{12, 10 + static_cast<std::size_t>(pairs % 3), 11};
    const VoxelMask a = pairs % 3 ? dg::testing::random_blob_mask(d, rng) : dg::testing::random_two_phase_mask(d, rng);
    const VoxelMask b = pairs % 5 ? dg::testing::random_blob_mask(d, rng) : dg::testing::random_two_phase_mask(d, rng);
    if (a.count() == 0 || b.count() == 0) continue;
    const double spacing = pairs % 2 ? 1.0 : 0.8;
    dice_exact += dice(a, b) == reference::dice(a, b);
    rvd_exact += rvd(a, b) == reference::rvd(a, b);
    hd_worst = std::max(hd_worst, std::abs(hd95(a, b, spacing).value() - reference::hd95(a, b, spacing)));
    ++pairs;
  }
  const double t = seconds_since(t0);
  return {dice_exact == pairs && rvd_exact == pairs && hd_worst < 1e-9 && t < 120.0,
          fmt("%d pairs: dice exact %d, rvd exact %d, hd95 max |err| %.2e mm, %.1f s", pairs, dice_exact, rvd_exact,
              hd_worst, t)};
}

// --- 6: single-case overfit ----------------------------------------------------

Outcome single_case_overfit(const fs::path&) {
  const auto t0 = Clock::now();
  CohortSpec spec;
  spec.n_cases = 4;
  spec.n_train = 3;
  spec.n_test = 1;
  const auto cohort = generate_cohort(spec);
  const LongitudinalCase* pick = nullptr;
  for (const auto& c : cohort.cases)
    if (c.scenario.group == "fast") pick = &c;
  if (!pick) return {false, "no fast-growing case generated"};
  const int horizon = cohort.manifest.horizon_days;

  const ModelConfig mc;
  const TrainConfig tc;
  GrowthNet net(mc);
  const std::vector<TrainingCase> cases{make_training_case(*pick, horizon)};
  TrainState state;
  TrainHooks hooks;
  hooks.on_epoch = [&](const LossLogEntry& e) {
    if (e.epoch % 50 == 0 || e.epoch + 1 == tc.epochs)
      progress(fmt("epoch %zu loss %.4f (%.0f s)", e.epoch, e.total, seconds_since(t0)));
  };
  train(net, cases, tc, state, hooks);

  // The loss reconstructs the inputs from their encoder latents and the third
  // tumor from the predicted latent; score the same three decodings.
  std::vector<double> rec;
  {
    ad::NoGradGuard g;
    std::mt19937_64 r(0);
    const auto out = forward_latents(net, cases[0].tensors, false, r);
    auto grids = reconstruct_inputs(net, out);
    grids.push_back(decode_full_grid(net.decoder(), out.predicted, mc.volume));
    for (std::size_t t = 0; t < grids.size(); ++t)
      rec.push_back(dice(sdf_to_mask(grids[t], mc.volume), pick->scans[t].mask));
  }
  const auto p = predict(net, cases[0].tensors, cases[0].tensors.normalized_dates.back());
  const double pred = dice(p.mask(), pick->scans.back().mask);
  const double t = seconds_since(t0);
  const bool ok = std::all_of(rec.begin(), rec.end(), [](double v) { return v >= 0.95; }) && pred >= 0.90 && t < 1800.0;
  return {ok, fmt("%s (%s): reconstruction Dice %.3f / %.3f / %.3f, predicted Dice %.3f, %.0f s",
                  pick->case_id.c_str(), pick->scenario.group.c_str(), rec[0], rec[1], rec[2], pred, t)};
}

// --- 7 / 8: cohort ---------------------------------------------------------------

struct CohortRun {
  fs::path data, encoded, raw;
};

CohortRun cohort_paths(const fs::path& work) {
  return {work / "cohort" / "data", work / "cohort" / "encoded.dgc", work / "cohort" / "raw_tau.dgc"};
}

void ensure_cohort(const CohortRun& run) {
  if (fs::exists(run.data / "manifest.json")) return;
  auto cohort = generate_cohort(CohortSpec{});
  write_cohort(cohort, run.data);
}

std::unique_ptr<GrowthNet> train_cohort_model(const CohortRun& run, const ModelConfig& mc, const fs::path& out) {
  const auto t0 = Clock::now();
  const Cohort cohort = load_cohort(run.data);
  const int horizon = cohort.manifest.horizon_days;
  std::vector<TrainingCase> cases;
  for (const auto* c : cohort.split("train")) cases.push_back(make_training_case(*c, horizon));
  const TrainConfig tc;
  auto net = std::make_unique<GrowthNet>(mc);
  TrainState state;
  TrainHooks hooks;
  hooks.on_epoch = [&](const LossLogEntry& e) {
    if (e.epoch % 25 == 0 || e.epoch + 1 == tc.epochs)
      progress(fmt("[%s] epoch %zu loss %.4f (%.0f s)", to_string(mc.time_mode).c_str(), e.epoch, e.total,
                   seconds_since(t0)));
  };
  train(*net, cases, tc, state, hooks);
  save_checkpoint(out, *net, tc, state, horizon);
  return net;
}

Outcome cohort_generalization(const fs::path& work) {
  const auto t0 = Clock::now();
  const CohortRun run = cohort_paths(work);
  ensure_cohort(run);
  fs::remove(run.encoded);
  const auto net = train_cohort_model(run, ModelConfig{}, run.encoded);
  const Cohort cohort = load_cohort(run.data);
  const auto report = evaluate(*net, cohort, "test", cohort.manifest.horizon_days, 0.2, file_crc32(run.encoded));
  write_report(report, work / "cohort");
  const auto& model = report.methods[0].top;
  const auto& base = report.methods[1].top;
  std::string ids;
  for (const auto& id : report.top_case_ids) ids += (ids.empty() ? "" : ",") + id;
  const double t = seconds_since(t0);
  return {model.dice.mean > base.dice.mean && t < 4 * 3600.0,
          fmt("top-20%% growers [%s]: model Dice %.4f vs stable baseline %.4f; all test cases: model %.4f vs %.4f; "
              "%.0f s",
              ids.c_str(), model.dice.mean, base.dice.mean, report.methods[0].overall.dice.mean,
              report.methods[1].overall.dice.mean, t)};
}

struct Curve {
  std::vector<double> volumes;
};

Curve sweep_via_cli(const fs::path& checkpoint, const fs::path& data, const std::string& id, int start, int step,
                    int count, const fs::path& out) {
  const std::vector<std::string> args{"deepgrowth",   "sweep-time",        "--checkpoint",
                                      checkpoint.string(), "--data",       data.string(),
                                      "--case",       id,                  "--start-days",
                                      std::to_string(start), "--step-days", std::to_string(step),
                                      "--count",      std::to_string(count), "--out",
                                      out.string()};
  std::ostringstream o, e;
  if (run_cli(args, o, e) != 0) throw std::runtime_error("sweep-time failed for " + id + ": " + e.str());
  std::ifstream is(out / "volume_curve.csv");
  std::string line;
  std::getline(is, line);
  Curve c;
  while (std::getline(is, line)) c.volumes.push_back(std::stod(line.substr(line.find(',') + 1)));
  return c;
}

Outcome time_query(const fs::path& work) {
  const auto t0 = Clock::now();
  const CohortRun run = cohort_paths(work);
  ensure_cohort(run);
  if (!fs::exists(run.encoded)) {
    progress("no encoded-time model from the cohort criterion; training one");
    train_cohort_model(run, ModelConfig{}, run.encoded);
  }
  {
    const auto ck = load_checkpoint(run.encoded, ModelConfig{});
    if (ck.state.epochs_completed != TrainConfig{}.epochs) throw std::runtime_error("encoded model is incomplete");
  }
  ModelConfig raw_cfg;
  raw_cfg.time_mode = TimeMode::Raw;
  fs::remove(run.raw);
  train_cohort_model(run, raw_cfg, run.raw);

  const auto manifest = load_manifest(run.data);
  const int step = 180, count = 4;
  double spread = 0.0, dv_encoded = 0.0, dv_raw = 0.0;
  std::size_t n = 0;
  for (const auto& id : manifest.splits.at("test")) {
    const auto c = load_case(run.data, manifest, id);
    const int start = c.scans[c.scans.size() - 2].date_days - c.scans.front().date_days;
    const auto enc = sweep_via_cli(run.encoded, run.data, id, start, step, count, work / "sweep" / "encoded" / id);
    const auto raw = sweep_via_cli(run.raw, run.data, id, start, step, count, work / "sweep" / "raw" / id);
    const auto [lo, hi] = std::minmax_element(enc.volumes.begin(), enc.volumes.end());
    double mean = 0.0;
    for (double v : enc.volumes) mean += v / static_cast<double>(enc.volumes.size());
    spread += mean > 0.0 ? (*hi - *lo) / mean : 0.0;
    auto mean_dv = [](const Curve& cv) {
      double s = 0.0;
      for (std::size_t k = 1; k < cv.volumes.size(); ++k) s += std::abs(cv.volumes[k] - cv.volumes[k - 1]);
      return s / static_cast<double>(cv.volumes.size() - 1);
    };
    dv_encoded += mean_dv(enc);
    dv_raw += mean_dv(raw);
    progress(fmt("%s: encoded volumes %.0f..%.0f mm3, mean |dV| %.1f (encoded) vs %.1f (raw tau)", id.c_str(), *lo, *hi,
                 mean_dv(enc), mean_dv(raw)));
    ++n;
  }
  spread /= static_cast<double>(n);
  dv_encoded /= static_cast<double>(n);
  dv_raw /= static_cast<double>(n);
  const double t = seconds_since(t0);
  return {spread > 0.02 && dv_encoded > dv_raw,
          fmt("%zu test cases, %d queries every %d days from the last input: mean (max-min)/mean volume %.2f%%; mean "
              "|dV| %.2f mm3 (encoded) vs %.2f mm3 (raw tau); %.0f s",
              n, count, step, 100.0 * spread, dv_encoded, dv_raw, t)};
}

// --- 9: determinism and persistence -----------------------------------------------

Outcome determinism(const fs::path& work) {
  const auto t0 = Clock::now();
  CohortSpec spec;
  spec.n_cases = 4;
  spec.n_train = 2;
  spec.n_test = 2;
  spec.seed = 77;
  const auto cohort = generate_cohort(spec);
  const int horizon = cohort.manifest.horizon_days;
  std::vector<TrainingCase> cases;
  for (const auto* c : cohort.split("train")) cases.push_back(make_training_case(*c, horizon));
  TrainConfig tc;
  tc.epochs = 3;
  tc.loss.n_points = 1024;

  auto run = [&] {
    auto net = std::make_unique<GrowthNet>(ModelConfig{});
    TrainState st;
    train(*net, cases, tc, st);
    return std::make_pair(std::move(net), st);
  };
  auto [a, sa] = run();
  auto [b, sb] = run();
  bool log_equal = sa.log.size() == sb.log.size();
  for (std::size_t i = 0; log_equal && i < sa.log.size(); ++i)
    log_equal = std::memcmp(&sa.log[i], &sb.log[i], sizeof(LossLogEntry)) == 0;
  bool params_equal = true;
  const auto pa = a->parameters().tensors(), pb = b->parameters().tensors();
  for (std::size_t i = 0; i < pa.size(); ++i)
    params_equal &= std::equal(pa[i].values().begin(), pa[i].values().end(), pb[i].values().begin());

  const fs::path path = work / "determinism" / "checkpoint.dgc";
  save_checkpoint(path, *a, tc, sa, horizon);
  const auto ck = load_checkpoint(path, ModelConfig{});
  std::ifstream is(path, std::ios::binary);
  const std::string stored((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const bool bytes_equal = serialize_checkpoint(*ck.net, ck.train, ck.state, ck.horizon_days) == stored;
  bool state_equal = ck.state.log == sa.log && ck.state.adam.m == sa.adam.m && ck.state.adam.v == sa.adam.v &&
                     ck.state.adam.step_count == sa.adam.step_count;
  bool predictions_equal = true;
  for (const auto* c : cohort.split("test")) {
    const auto t = make_case_tensors(*c, horizon);
    predictions_equal &= predict(*a, t, t.normalized_dates.back()).sdf == predict(*ck.net, t, t.normalized_dates.back()).sdf;
  }
  const double t = seconds_since(t0);
  return {log_equal && params_equal && bytes_equal && state_equal && predictions_equal,
          fmt("same-seed retraining: loss log bit-exact %s, parameters bit-exact %s; checkpoint re-serialization "
              "identical %s, optimizer state %s, predictions identical %s; %.0f s",
              log_equal ? "yes" : "NO", params_equal ? "yes" : "NO", bytes_equal ? "yes" : "NO",
              state_equal ? "yes" : "NO", predictions_equal ? "yes" : "NO", t)};
}

struct Criterion {
  const char* name;
  Outcome (*run)(const fs::path&);
};

const Criterion kCriteria[] = {
    {"SDF oracle equivalence", sdf_oracle},
    {"analytic-shape fidelity", analytic_spheres},
    {"gradient integrity", gradients},
    {"temporal encoding", temporal},
    {"metric oracles", metric_oracles},
    {"single-case overfit", single_case_overfit},
    {"cohort generalization", cohort_generalization},
    {"time-query responsiveness", time_query},
    {"determinism and persistence", determinism},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deepgrowth acceptance criteria"};
  std::string which = "all";
  std::string work = "acceptance_work";
  app.add_option("--criterion", which, "1-9 or all")->capture_default_str();
  app.add_option("--work", work, "Scratch directory")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  std::vector<int> ids;
  if (which == "all") {
    for (int i = 1; i <= 9; ++i) ids.push_back(i);
  } else {
    int id = 0;
    try {
      id = std::stoi(which);
    } catch (const std::exception&) {
    }
    if (id < 1 || id > 9) {
      std::fprintf(stderr, "unknown criterion '%s'\n", which.c_str());
      return 2;
    }
    ids.push_back(id);
  }
  fs::create_directories(work);
  bool all = true;
  for (int id : ids) {
    const Criterion& c = kCriteria[id - 1];
    Outcome o;
    try {
      o = c.run(work);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %d (%s): %s - %s\n", id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    all &= o.pass;
  }
  return all ? 0 : 1;
}
