#include "deepgrowth/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace dg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'G', 'R', 'O', 'W', 'T', 'H', '1'};

void append_doubles(std::string& out, std::span<const double> v) {
  const std::size_t at = out.size();
  out.resize(at + v.size() * sizeof(double));
  std::memcpy(out.data() + at, v.data(), v.size() * sizeof(double));
}

json tensor_entry(const std::string& name, const ad::Shape& shape, std::size_t offset) {
  return json{{"name", name}, {"shape", shape}, {"dtype", "f64"}, {"offset", offset}};
}

}  // namespace

std::vector<std::string> config_differences(const ModelConfig& a, const ModelConfig& b) {
  std::vector<std::string> keys;
  const json ja = to_json(a), jb = to_json(b);
  for (const auto& [k, v] : ja.items())
    if (!jb.contains(k) || jb[k] != v) keys.push_back(k);
  return keys;
}

std::string serialize_checkpoint(const GrowthNet& net, const TrainConfig& train, const TrainState& state,
                                 int horizon_days) {
  const auto& entries = net.parameters().entries();
  const bool has_moments = !state.adam.m.empty();
  if (has_moments && (state.adam.m.size() != entries.size() || state.adam.v.size() != entries.size()))
    throw CheckpointError("optimizer state does not match the parameter set");

  std::string payload;
  json tensors = json::array();
  for (const auto& [name, t] : entries) {
    tensors.push_back(tensor_entry(name, t.shape(), payload.size()));
    append_doubles(payload, t.values());
  }
  if (has_moments) {
    for (std::size_t k = 0; k < entries.size(); ++k) {
      tensors.push_back(tensor_entry("adam.m." + entries[k].first, entries[k].second.shape(), payload.size()));
      append_doubles(payload, state.adam.m[k]);
    }
    for (std::size_t k = 0; k < entries.size(); ++k) {
      tensors.push_back(tensor_entry("adam.v." + entries[k].first, entries[k].second.shape(), payload.size()));
      append_doubles(payload, state.adam.v[k]);
    }
  }

  json log = json::array();
  for (const auto& e : state.log) log.push_back({e.epoch, e.rec, e.reg, e.total});

  const json header{{"format_version", kCheckpointVersion},
                    {"model", to_json(net.config())},
                    {"train", to_json(train)},
                    {"horizon_days", horizon_days},
                    {"epochs_completed", state.epochs_completed},
                    {"adam",
                     {{"step_count", state.adam.step_count},
                      {"lr", state.adam.lr},
                      {"beta1", state.adam.beta1},
                      {"beta2", state.adam.beta2},
                      {"eps", state.adam.eps},
                      {"has_moments", has_moments}}},
                    {"loss_log", log},
                    {"tensors", tensors},
                    {"payload_bytes", payload.size()}};
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += text;
  out += payload;
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& context) {
  auto fail = [&](const std::string& msg) { throw CheckpointError(context + ": " + msg); };
  if (bytes.size() < sizeof(kMagic) + 8) fail("truncated checkpoint (no header)");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) fail("not a checkpoint (bad magic)");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + sizeof(kMagic), sizeof(len));
  const std::size_t header_at = sizeof(kMagic) + sizeof(len);
  if (len > bytes.size() - header_at) fail("truncated checkpoint header");

  json h;
  try {
    h = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(header_at),
                    bytes.begin() + static_cast<std::ptrdiff_t>(header_at + len));
  } catch (const json::exception& e) {
    fail(std::string("corrupt header: ") + e.what());
  }
  const std::size_t payload_at = header_at + len;
  const std::string_view payload(bytes.data() + payload_at, bytes.size() - payload_at);

  Checkpoint ck;
  try {
    const int version = h.at("format_version").get<int>();
    if (version != kCheckpointVersion)
      fail("format version " + std::to_string(version) + " is not supported (expected " +
           std::to_string(kCheckpointVersion) + ")");
    if (h.at("payload_bytes").get<std::size_t>() != payload.size())
      fail("payload is " + std::to_string(payload.size()) + " bytes, header declares " +
           std::to_string(h.at("payload_bytes").get<std::size_t>()) + " (truncated or padded file)");
    ck.model = model_config_from_json(h.at("model"));
    ck.train = train_config_from_json(h.at("train"));
    ck.horizon_days = h.at("horizon_days").get<int>();
    ck.state.epochs_completed = h.at("epochs_completed").get<std::size_t>();
    const json& adam = h.at("adam");
    ck.state.adam.step_count = adam.at("step_count").get<std::uint64_t>();
    ck.state.adam.lr = adam.at("lr").get<double>();
    ck.state.adam.beta1 = adam.at("beta1").get<double>();
    ck.state.adam.beta2 = adam.at("beta2").get<double>();
    ck.state.adam.eps = adam.at("eps").get<double>();
    const bool has_moments = adam.at("has_moments").get<bool>();
    for (const auto& e : h.at("loss_log"))
      ck.state.log.push_back({e.at(0).get<std::size_t>(), e.at(1).get<double>(), e.at(2).get<double>(),
                              e.at(3).get<double>()});

    ck.net = std::make_unique<GrowthNet>(ck.model);
    const auto& entries = ck.net->parameters().entries();
    const json& tensors = h.at("tensors");
    const std::size_t expected = entries.size() * (has_moments ? 3 : 1);
    if (tensors.size() != expected)
      fail("tensor manifest lists " + std::to_string(tensors.size()) + " tensors, model needs " +
           std::to_string(expected));

    auto read_into = [&](const json& entry, const std::string& name, const ad::Shape& shape, std::span<double> dst) {
      if (entry.at("name").get<std::string>() != name)
        fail("tensor '" + entry.at("name").get<std::string>() + "' found where '" + name + "' was expected");
      if (entry.at("dtype").get<std::string>() != "f64") fail("tensor '" + name + "' has unsupported dtype");
      if (entry.at("shape").get<ad::Shape>() != shape)
        fail("shape mismatch for '" + name + "': stored " + ad::shape_string(entry.at("shape").get<ad::Shape>()) +
             ", model " + ad::shape_string(shape));
      const auto offset = entry.at("offset").get<std::size_t>();
      const std::size_t n = dst.size() * sizeof(double);
      if (offset > payload.size() || n > payload.size() - offset) fail("tensor '" + name + "' runs past the payload");
      std::memcpy(dst.data(), payload.data() + offset, n);
    };

    std::size_t idx = 0;
    for (const auto& [name, t] : entries) {
      ad::Tensor param = t;
      read_into(tensors.at(idx++), name, param.shape(), param.mutable_values());
    }
    if (has_moments) {
      for (const char* prefix : {"adam.m.", "adam.v."}) {
        auto& moments = prefix[5] == 'm' ? ck.state.adam.m : ck.state.adam.v;
        for (const auto& [name, t] : entries) {
          moments.emplace_back(t.numel());
          read_into(tensors.at(idx++), prefix + name, t.shape(), moments.back());
        }
      }
    }
  } catch (const json::exception& e) {
    fail(std::string("malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    fail(std::string("invalid stored configuration: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const fs::path& path, const GrowthNet& net, const TrainConfig& train, const TrainState& state,
                     int horizon_days) {
  const std::string bytes = serialize_checkpoint(net, train, state, horizon_days);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw CheckpointError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize_checkpoint(ss.str(), path.string());
}

Checkpoint load_checkpoint(const fs::path& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  const auto diff = config_differences(ck.model, expected);
  if (!diff.empty()) {
    std::string keys;
    for (const auto& k : diff) keys += (keys.empty() ? "" : ", ") + k;
    throw ConfigMismatchError(path.string() + ": model configuration mismatch (" + keys + ")");
  }
  return ck;
}

}  // namespace dg
