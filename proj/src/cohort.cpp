#include "deepgrowth/cohort.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "deepgrowth/sdf.hpp"
#include "deepgrowth/seeding.hpp"

namespace dg {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "volume I/O assumes a little-endian host");

std::vector<int> LongitudinalCase::dates() const {
  std::vector<int> d;
  for (const auto& s : scans) d.push_back(s.date_days);
  return d;
}

double scenario_sdf(const GrowthScenario& s, const Vec3& center, double years, const Vec3& p) {
  Vec3 radii;
  for (int a = 0; a < 3; ++a) radii[a] = s.radii[a] * (1.0 + s.rates[a] * years);
  double value = analytic_sdf_ellipsoid(center, radii)(p);
  const double mean_r = (radii[0] + radii[1] + radii[2]) / 3.0;
  for (const auto& lobe : s.lobes) {
    Vec3 c;
    for (int a = 0; a < 3; ++a) c[a] = center[a] + lobe.direction[a] * radii[a];
    value = std::max(value, analytic_sdf_sphere(c, lobe.radius_fraction * mean_r)(p));
  }
  return value;
}

namespace {

VoxelMask voxelize_at(const GrowthScenario& s, const Vec3& center, double years) {
  return voxelize([&](const Vec3& p) { return scenario_sdf(s, center, years, p); }, s.shape, s.spacing_mm);
}

Vec3 centroid(const VoxelMask& m) {
  Vec3 c{0, 0, 0};
  std::size_t n = 0;
  for (std::size_t z = 0; z < m.dims[0]; ++z)
    for (std::size_t y = 0; y < m.dims[1]; ++y)
      for (std::size_t x = 0; x < m.dims[2]; ++x)
        if (m.at(z, y, x)) {
          c[0] += double(z);
          c[1] += double(y);
          c[2] += double(x);
          ++n;
        }
  for (auto& v : c) v /= static_cast<double>(std::max<std::size_t>(n, 1));
  return c;
}

bool touches_border(const VoxelMask& m) {
  const auto [D, H, W] = m.dims;
  for (std::size_t z = 0; z < D; ++z)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        if (m.at(z, y, x) && (z == 0 || y == 0 || x == 0 || z == D - 1 || y == H - 1 || x == W - 1))
          return true;
  return false;
}

}  // namespace

LongitudinalCase generate_case(const GrowthScenario& s, std::uint64_t seed) {
  if (s.n_scans < 2) throw std::invalid_argument("generate_case: at least two scans are required");
  if (s.interval_days[0] < 1 || s.interval_days[1] < s.interval_days[0])
    throw std::invalid_argument("generate_case: invalid interval range");
  for (double r : s.radii)
    if (!(r > 0.0)) throw std::invalid_argument("generate_case: radii must be positive");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> interval(s.interval_days[0], s.interval_days[1]);
  std::vector<int> dates{0};
  for (std::size_t t = 1; t < s.n_scans; ++t) dates.push_back(dates.back() + interval(rng));

  const double last_years = dates.back() / kDaysPerYear;
  for (int a = 0; a < 3; ++a)
    if (1.0 + s.rates[a] * last_years <= 0.0)
      throw DataError("generate_case: radius collapses before day " + std::to_string(dates.back()));

  // Place the first scan's centroid at the crop center.
  Vec3 crop_center;
  for (int a = 0; a < 3; ++a) crop_center[a] = 0.5 * static_cast<double>(s.shape[a] - 1);
  Vec3 center = crop_center;
  {
    const Vec3 c = centroid(voxelize_at(s, center, 0.0));
    for (int a = 0; a < 3; ++a) center[a] += crop_center[a] - c[a];
  }

  LongitudinalCase out;
  out.spacing_mm = s.spacing_mm;
  out.seed = seed;
  out.scenario = s;
  out.center = center;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int date : dates) {
    const double years = date / kDaysPerYear;
    Scan scan;
    scan.date_days = date;
    scan.mask = voxelize_at(s, center, years);
    if (scan.mask.count() == 0)
      throw DataError("generate_case: tumor vanished at day " + std::to_string(date));
    if (touches_border(scan.mask))
      throw DataError("generate_case: tumor exits the crop at day " + std::to_string(date));
    scan.image.dims = s.shape;
    scan.image.values.resize(voxel_count(s.shape));
    std::size_t i = 0;
    for (std::size_t z = 0; z < s.shape[0]; ++z)
      for (std::size_t y = 0; y < s.shape[1]; ++y)
        for (std::size_t x = 0; x < s.shape[2]; ++x, ++i) {
          const double d = scenario_sdf(s, center, years, {double(z), double(y), double(x)});
          const double ramp = 1.0 / (1.0 + std::exp(-d / s.ramp_width));
          const double v = -0.6 + 1.2 * ramp + s.noise_sigma * noise(rng);
          scan.image.values[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
        }
    out.scans.push_back(std::move(scan));
  }
  return out;
}

// --- cohort spec -------------------------------------------------------------

namespace {

const std::set<std::string> kGroups = {"stable", "slow", "fast", "shrinking"};

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) throw std::invalid_argument(where + ": unknown key '" + k + "'");
}

Dims dims_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("shape must be a 3-element array");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

}  // namespace

CohortSpec cohort_spec_from_json(const json& j) {
  reject_unknown_keys(j, {"n_cases", "proportions", "splits", "shape", "spacing_mm", "n_scans",
                          "interval_days", "noise_sigma", "seed"},
                      "cohort spec");
  CohortSpec s;
  if (j.contains("n_cases")) s.n_cases = j["n_cases"].get<std::size_t>();
  if (j.contains("proportions")) {
    s.proportions.clear();
    for (const auto& [k, v] : j["proportions"].items()) {
      if (!kGroups.count(k)) throw std::invalid_argument("cohort spec: unknown group '" + k + "'");
      s.proportions[k] = v.get<double>();
    }
  }
  if (j.contains("splits")) {
    const auto& sp = j["splits"];
    reject_unknown_keys(sp, {"train", "val", "test"}, "cohort spec splits");
    s.n_train = sp.value("train", std::size_t{0});
    s.n_val = sp.value("val", std::size_t{0});
    s.n_test = sp.value("test", std::size_t{0});
  }
  if (j.contains("shape")) s.shape = dims_from_json(j["shape"]);
  if (j.contains("spacing_mm")) s.spacing_mm = j["spacing_mm"].get<double>();
  if (j.contains("n_scans")) s.n_scans = j["n_scans"].get<std::size_t>();
  if (j.contains("interval_days")) {
    const auto& iv = j["interval_days"];
    if (!iv.is_array() || iv.size() != 2) throw std::invalid_argument("interval_days must be [min, max]");
    s.interval_days = {iv[0].get<int>(), iv[1].get<int>()};
  }
  if (j.contains("noise_sigma")) s.noise_sigma = j["noise_sigma"].get<double>();
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();

  if (s.n_cases < 1) throw std::invalid_argument("cohort spec: n_cases must be >= 1");
  double total = 0.0;
  for (const auto& [k, v] : s.proportions) {
    if (v < 0.0) throw std::invalid_argument("cohort spec: negative proportion for " + k);
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("cohort spec: proportions sum to " + std::to_string(total) + ", expected 1");
  if (s.n_train + s.n_val + s.n_test != s.n_cases)
    throw std::invalid_argument("cohort spec: splits do not add up to n_cases");
  if (s.n_scans < 2) throw std::invalid_argument("cohort spec: n_scans must be >= 2");
  if (s.interval_days[0] < 1 || s.interval_days[1] < s.interval_days[0])
    throw std::invalid_argument("cohort spec: invalid interval_days");
  for (auto d : s.shape)
    if (d < 8) throw std::invalid_argument("cohort spec: shape must be at least 8 per axis");
  if (!(s.spacing_mm > 0.0)) throw std::invalid_argument("cohort spec: spacing_mm must be positive");
  return s;
}

json to_json(const CohortSpec& s) {
  return json{{"n_cases", s.n_cases},
              {"proportions", s.proportions},
              {"splits", {{"train", s.n_train}, {"val", s.n_val}, {"test", s.n_test}}},
              {"shape", {s.shape[0], s.shape[1], s.shape[2]}},
              {"spacing_mm", s.spacing_mm},
              {"n_scans", s.n_scans},
              {"interval_days", {s.interval_days[0], s.interval_days[1]}},
              {"noise_sigma", s.noise_sigma},
              {"seed", s.seed}};
}

GrowthScenario draw_scenario(const CohortSpec& spec, const std::string& group, std::mt19937_64& rng) {
  if (!kGroups.count(group)) throw std::invalid_argument("unknown growth group '" + group + "'");
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  GrowthScenario s;
  s.group = group;
  s.shape = spec.shape;
  s.spacing_mm = spec.spacing_mm;
  s.n_scans = spec.n_scans;
  s.interval_days = spec.interval_days;
  s.noise_sigma = spec.noise_sigma;

  // Sizes scale with the crop so 64^3 cohorts stay proportionate.
  const double unit = static_cast<double>(std::min({spec.shape[0], spec.shape[1], spec.shape[2]})) / 32.0;
  const double base = uni(3.5, 4.5) * unit;
  for (auto& r : s.radii) r = base * uni(0.85, 1.15);

  double rate = 0.0;
  if (group == "slow") rate = uni(0.05, 0.12);
  if (group == "fast") rate = uni(0.15, 0.30);
  if (group == "shrinking") rate = -uni(0.08, 0.15);
  for (auto& g : s.rates) g = rate == 0.0 ? 0.0 : rate * uni(0.8, 1.2);

  const int n_lobes = std::uniform_int_distribution<int>(0, 2)(rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < n_lobes; ++i) {
    Lobe lobe;
    double norm = 0.0;
    do {
      for (auto& d : lobe.direction) d = gauss(rng);
      norm = std::sqrt(lobe.direction[0] * lobe.direction[0] + lobe.direction[1] * lobe.direction[1] +
                       lobe.direction[2] * lobe.direction[2]);
    } while (norm < 1e-6);
    for (auto& d : lobe.direction) d /= norm;
    lobe.radius_fraction = uni(0.25, 0.4);
    s.lobes.push_back(lobe);
  }
  return s;
}

// --- manifest / cohort ----------------------------------------------------------

std::vector<std::string> CohortManifest::case_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : seeds) ids.push_back(id);
  return ids;
}

const LongitudinalCase& Cohort::find(const std::string& id) const {
  for (const auto& c : cases)
    if (c.case_id == id) return c;
  throw DataError("cohort has no case '" + id + "'");
}

std::vector<const LongitudinalCase*> Cohort::split(const std::string& name) const {
  auto it = manifest.splits.find(name);
  if (it == manifest.splits.end()) throw DataError("cohort has no split '" + name + "'");
  std::vector<const LongitudinalCase*> out;
  for (const auto& id : it->second) out.push_back(&find(id));
  return out;
}

namespace {

// Largest-remainder apportionment of `total` over weights (ties by key order).
std::map<std::string, std::size_t> apportion(std::size_t total, const std::map<std::string, double>& weights) {
  std::map<std::string, std::size_t> out;
  std::vector<std::pair<double, std::string>> remainders;
  std::size_t assigned = 0;
  double wsum = 0.0;
  for (const auto& [k, w] : weights) wsum += w;
  for (const auto& [k, w] : weights) {
    const double exact = wsum > 0.0 ? total * w / wsum : 0.0;
    out[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += out[k];
    remainders.emplace_back(exact - out[k], k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) out[remainders[i % remainders.size()].second] += 1;
  return out;
}

std::string case_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "case_%03zu", i);
  return buf;
}

}  // namespace

Cohort generate_cohort(const CohortSpec& spec) {
  Cohort cohort;
  auto& m = cohort.manifest;
  m.shape = spec.shape;
  m.spacing_mm = spec.spacing_mm;
  m.spec = to_json(spec);

  const auto counts = apportion(spec.n_cases, spec.proportions);
  std::vector<std::string> group_of;
  for (const auto& [g, n] : counts) group_of.insert(group_of.end(), n, g);
  std::mt19937_64 shuffle_rng(derive_seed(spec.seed, 0x5eed));
  std::shuffle(group_of.begin(), group_of.end(), shuffle_rng);

  for (std::size_t i = 0; i < spec.n_cases; ++i) {
    const std::string id = case_name(i);
    std::uint64_t seed = derive_seed(spec.seed, i);
    LongitudinalCase c;
    for (int attempt = 0;; ++attempt) {
      std::mt19937_64 rng(seed);
      const GrowthScenario s = draw_scenario(spec, group_of[i], rng);
      try {
        c = generate_case(s, splitmix64(seed));
        break;
      } catch (const DataError&) {
        if (attempt > 100) throw;
        seed = splitmix64(seed);
      }
    }
    c.case_id = id;
    m.seeds[id] = seed;
    m.groups[group_of[i]].push_back(id);
    m.horizon_days = std::max(m.horizon_days, c.scans.back().date_days - c.scans.front().date_days);
    cohort.cases.push_back(std::move(c));
  }

  // Stratified split: test and val quotas are apportioned over the groups,
  // the rest of each group trains.
  for (const auto& name : {"train", "val", "test"}) m.splits[name] = {};
  std::map<std::string, std::size_t> taken;
  for (const auto& [name, quota] : {std::pair<const char*, std::size_t>{"test", spec.n_test}, {"val", spec.n_val}}) {
    std::map<std::string, double> left;
    for (const auto& [g, ids] : m.groups) left[g] = static_cast<double>(ids.size() - taken[g]);
    for (const auto& [g, k] : apportion(quota, left)) {
      const auto& ids = m.groups[g];
      for (std::size_t j = 0; j < k; ++j) m.splits[name].push_back(ids[taken[g]++]);
    }
  }
  for (const auto& [g, ids] : m.groups)
    m.splits["train"].insert(m.splits["train"].end(), ids.begin() + static_cast<std::ptrdiff_t>(taken[g]), ids.end());
  for (auto& [_, ids] : m.splits) std::sort(ids.begin(), ids.end());
  return cohort;
}

// --- volume records -------------------------------------------------------------

namespace {

constexpr char kVolumeMagic[6] = {'D', 'G', 'V', 'O', 'L', '\0'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& context) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError(context + ": truncated volume header");
  return v;
}

void write_header(std::ostream& os, VolumeDtype dtype, const Dims& dims) {
  os.write(kVolumeMagic, sizeof(kVolumeMagic));
  put<std::uint16_t>(os, static_cast<std::uint16_t>(dtype));
  for (auto d : dims) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + p.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("write failed for " + p.string());
}

}  // namespace

void write_volume(std::ostream& os, const Dims& dims, const std::vector<std::uint8_t>& data) {
  write_header(os, VolumeDtype::U8, dims);
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

void write_volume(std::ostream& os, const Dims& dims, const std::vector<float>& data) {
  write_header(os, VolumeDtype::F32, dims);
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
}

VolumeRecord read_volume(std::istream& is, const std::string& context) {
  char magic[6];
  if (!is.read(magic, sizeof(magic))) throw DataError(context + ": truncated volume header");
  if (std::memcmp(magic, kVolumeMagic, sizeof(magic)) != 0) throw DataError(context + ": bad volume magic");
  VolumeRecord r;
  const auto code = get<std::uint16_t>(is, context);
  if (code != 1 && code != 2) throw DataError(context + ": unknown dtype code " + std::to_string(code));
  r.dtype = static_cast<VolumeDtype>(code);
  for (auto& d : r.dims) d = get<std::uint32_t>(is, context);
  const std::size_t n = voxel_count(r.dims);
  if (r.dtype == VolumeDtype::U8) {
    r.u8.resize(n);
    if (!is.read(reinterpret_cast<char*>(r.u8.data()), static_cast<std::streamsize>(n)))
      throw DataError(context + ": truncated volume payload");
  } else {
    r.f32.resize(n);
    if (!is.read(reinterpret_cast<char*>(r.f32.data()), static_cast<std::streamsize>(n * sizeof(float))))
      throw DataError(context + ": truncated volume payload");
  }
  return r;
}

void save_mask_file(const fs::path& path, const VoxelMask& mask) {
  std::ostringstream os;
  write_volume(os, mask.dims, mask.occupancy);
  write_file(path, os.str());
}

void save_float_volume_file(const fs::path& path, const Dims& dims, const std::vector<float>& values) {
  std::ostringstream os;
  write_volume(os, dims, values);
  write_file(path, os.str());
}

VolumeRecord load_volume_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return read_volume(is, path.string());
}

std::string crc32_hex(const std::string& bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

std::string file_crc32(const fs::path& path) { return crc32_hex(read_file(path)); }

// --- case / manifest serialization ------------------------------------------

namespace {

json scenario_to_json(const GrowthScenario& s) {
  json lobes = json::array();
  for (const auto& l : s.lobes) lobes.push_back({{"direction", l.direction}, {"radius_fraction", l.radius_fraction}});
  return json{{"group", s.group},
              {"shape", {s.shape[0], s.shape[1], s.shape[2]}},
              {"spacing_mm", s.spacing_mm},
              {"radii", s.radii},
              {"rates", s.rates},
              {"lobes", lobes},
              {"n_scans", s.n_scans},
              {"interval_days", s.interval_days},
              {"noise_sigma", s.noise_sigma},
              {"ramp_width", s.ramp_width}};
}

GrowthScenario scenario_from_json(const json& j) {
  GrowthScenario s;
  s.group = j.at("group").get<std::string>();
  s.shape = dims_from_json(j.at("shape"));
  s.spacing_mm = j.at("spacing_mm").get<double>();
  s.radii = j.at("radii").get<Vec3>();
  s.rates = j.at("rates").get<Vec3>();
  for (const auto& l : j.at("lobes"))
    s.lobes.push_back({l.at("direction").get<Vec3>(), l.at("radius_fraction").get<double>()});
  s.n_scans = j.at("n_scans").get<std::size_t>();
  s.interval_days = j.at("interval_days").get<std::array<int, 2>>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.ramp_width = j.at("ramp_width").get<double>();
  return s;
}

std::string scan_file(std::size_t t) { return "scan_" + std::to_string(t + 1) + ".bin"; }

}  // namespace

void write_cohort(Cohort& cohort, const fs::path& root) {
  auto& m = cohort.manifest;
  std::error_code ec;
  fs::create_directories(root / "cases", ec);
  if (ec) throw DataError("cannot create " + (root / "cases").string() + ": " + ec.message());
  m.checksums.clear();
  for (const auto& c : cohort.cases) {
    const fs::path dir = root / "cases" / c.case_id;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    const json meta{{"case_id", c.case_id},
                    {"dates_days", c.dates()},
                    {"spacing_mm", c.spacing_mm},
                    {"seed", c.seed},
                    {"center", c.center},
                    {"scenario", scenario_to_json(c.scenario)}};
    const std::string meta_bytes = meta.dump(2) + "\n";
    write_file(dir / "meta.json", meta_bytes);
    m.checksums[c.case_id]["meta.json"] = crc32_hex(meta_bytes);
    for (std::size_t t = 0; t < c.scans.size(); ++t) {
      std::ostringstream os;
      write_volume(os, c.scans[t].image.dims, c.scans[t].image.values);
      write_volume(os, c.scans[t].mask.dims, c.scans[t].mask.occupancy);
      write_file(dir / scan_file(t), os.str());
      m.checksums[c.case_id][scan_file(t)] = crc32_hex(os.str());
    }
  }
  const json manifest{{"version", m.version},
                      {"horizon_days", m.horizon_days},
                      {"spacing_mm", m.spacing_mm},
                      {"shape", {m.shape[0], m.shape[1], m.shape[2]}},
                      {"splits", m.splits},
                      {"groups", m.groups},
                      {"seeds", m.seeds},
                      {"checksums", m.checksums},
                      {"spec", m.spec}};
  write_file(root / "manifest.json", manifest.dump(2) + "\n");
}

CohortManifest load_manifest(const fs::path& root) {
  const fs::path p = root / "manifest.json";
  if (!fs::exists(p)) throw DataError("missing manifest: " + p.string());
  json j;
  try {
    j = json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
  CohortManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != 1) throw DataError(p.string() + ": unsupported manifest version " + std::to_string(m.version));
    m.horizon_days = j.at("horizon_days").get<int>();
    m.spacing_mm = j.at("spacing_mm").get<double>();
    m.shape = dims_from_json(j.at("shape"));
    m.splits = j.at("splits").get<decltype(m.splits)>();
    m.groups = j.at("groups").get<decltype(m.groups)>();
    m.seeds = j.at("seeds").get<decltype(m.seeds)>();
    m.checksums = j.at("checksums").get<decltype(m.checksums)>();
    m.spec = j.value("spec", json::object());
  } catch (const json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
  return m;
}

LongitudinalCase load_case(const fs::path& root, const CohortManifest& manifest, const std::string& case_id) {
  const fs::path dir = root / "cases" / case_id;
  auto sums = manifest.checksums.find(case_id);
  if (sums == manifest.checksums.end()) throw DataError("manifest has no checksums for " + case_id);
  auto checked = [&](const std::string& file) {
    const fs::path p = dir / file;
    if (!fs::exists(p)) throw DataError(case_id + ": missing file " + p.string());
    std::string bytes = read_file(p);
    auto it = sums->second.find(file);
    if (it == sums->second.end()) throw DataError(case_id + ": no checksum recorded for " + file);
    if (crc32_hex(bytes) != it->second)
      throw DataError(case_id + ": checksum mismatch for " + p.string());
    return bytes;
  };

  LongitudinalCase c;
  json meta;
  try {
    meta = json::parse(checked("meta.json"));
    c.case_id = meta.at("case_id").get<std::string>();
    c.spacing_mm = meta.at("spacing_mm").get<double>();
    c.seed = meta.at("seed").get<std::uint64_t>();
    c.center = meta.at("center").get<Vec3>();
    c.scenario = scenario_from_json(meta.at("scenario"));
  } catch (const json::exception& e) {
    throw DataError(case_id + ": malformed meta.json: " + e.what());
  }
  const auto dates = meta.at("dates_days").get<std::vector<int>>();
  if (dates.size() < 2) throw DataError(case_id + ": fewer than two scans listed");
  for (std::size_t t = 0; t < dates.size(); ++t) {
    if (t > 0 && dates[t] <= dates[t - 1]) throw DataError(case_id + ": scan dates not strictly increasing");
    const std::string file = scan_file(t);
    if (!fs::exists(dir / file)) throw DataError(case_id + ": missing scan " + std::to_string(t + 1) + " (" + file + ")");
    std::istringstream is(checked(file));
    const VolumeRecord img = read_volume(is, (dir / file).string());
    const VolumeRecord msk = read_volume(is, (dir / file).string());
    if (img.dtype != VolumeDtype::F32 || msk.dtype != VolumeDtype::U8)
      throw DataError(case_id + ": " + file + " must hold an f32 image then a u8 mask");
    if (img.dims != manifest.shape || msk.dims != manifest.shape)
      throw DataError(case_id + ": " + file + " shape does not match the manifest");
    Scan s;
    s.date_days = dates[t];
    s.image.dims = img.dims;
    s.image.values = img.f32;
    s.mask = VoxelMask(msk.dims, c.spacing_mm);
    s.mask.occupancy = msk.u8;
    for (auto v : s.mask.occupancy)
      if (v > 1) throw DataError(case_id + ": mask values must be 0 or 1");
    if (s.mask.count() == 0) throw DataError(case_id + ": empty mask in " + file);
    for (float v : s.image.values)
      if (!(v >= -1.0f && v <= 1.0f)) throw DataError(case_id + ": intensity outside [-1, 1] in " + file);
    c.scans.push_back(std::move(s));
  }
  return c;
}

Cohort load_cohort(const fs::path& root) {
  Cohort cohort;
  cohort.manifest = load_manifest(root);
  for (const auto& id : cohort.manifest.case_ids()) cohort.cases.push_back(load_case(root, cohort.manifest, id));
  return cohort;
}

}  // namespace dg
