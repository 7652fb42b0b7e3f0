#include "doctest.h"

#include <cmath>
#include <random>

#include "deepgrowth/growth_net.hpp"
#include "deepgrowth/sdf.hpp"
#include "test_util.hpp"

using namespace dg;
using dg::testing::random_tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.volume = {8, 8, 8};
  c.latent_channels = 4;
  c.downsample = 2;
  c.encoding_order = 2;
  c.encoder_width = 2;
  c.lstm_layers = 1;
  c.lstm_hidden = 3;
  c.decoder_width = 8;
  c.decoder_layers = 2;
  c.init_seed = 3;
  return c;
}

CaseTensors random_case(const Dims& d, std::size_t scans, std::mt19937_64& rng) {
  CaseTensors c;
  c.case_id = "toy";
  std::bernoulli_distribution b(0.3);
  for (std::size_t t = 0; t < scans; ++t) {
    c.images.push_back(random_tensor({d[0], d[1], d[2]}, rng, -1, 1, false));
    std::vector<double> m(voxel_count(d));
    for (auto& v : m) v = b(rng);
    c.masks.push_back(ad::Tensor::from({d[0], d[1], d[2]}, std::move(m)));
    c.normalized_dates.push_back(0.3 * static_cast<double>(t));
  }
  return c;
}

}  // namespace

TEST_CASE("model config validation and json") {
  ModelConfig c;
  c.validate();
  CHECK(model_config_from_json(to_json(c)) == c);
  const auto tiny = tiny_config();
  CHECK(model_config_from_json(to_json(tiny)) == tiny);
  CHECK(model_config_from_json(nlohmann::json{{"encoding_order", 4}}).encoding_order == 4);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"bogus", 1}}), std::invalid_argument);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"downsample", 3}}), std::invalid_argument);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"volume", {30, 32, 32}}}), std::invalid_argument);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"encoding_order", 0}}), std::invalid_argument);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"time_mode", "later"}}), std::invalid_argument);
  CHECK(c.latent_dims() == Dims{8, 8, 8});
}

TEST_CASE("encoder output shape and determinism") {
  ModelConfig cfg;
  GrowthNet a(cfg), b(cfg);
  std::mt19937_64 rng(1);
  const auto img = random_tensor({32, 32, 32}, rng, -1, 1, false);
  const auto mask = ad::Tensor::full({32, 32, 32}, 0.0);
  ad::NoGradGuard g;
  const auto za = a.encode(img, mask), zb = b.encode(img, mask);
  CHECK(za.data.shape() == ad::Shape{32, 8, 8, 8});
  CHECK(za.channels() == 32);
  for (std::size_t i = 0; i < za.data.numel(); ++i) REQUIRE(za.data[i] == zb.data[i]);
  CHECK_THROWS_AS(a.encode(random_tensor({16, 32, 32}, rng, -1, 1, false), mask), ad::ShapeError);
  CHECK_THROWS_AS(a.encode(random_tensor({32, 32, 32}, rng, -1, 1, true), mask), std::invalid_argument);

  ModelConfig other = cfg;
  other.init_seed = 2;
  GrowthNet c(other);
  bool differs = false;
  const auto zc = c.encode(img, mask);
  for (std::size_t i = 0; i < zc.data.numel(); ++i) differs |= zc.data[i] != za.data[i];
  CHECK(differs);
}

TEST_CASE("encoder parameters receive gradient") {
  GrowthNet net(tiny_config());
  std::mt19937_64 rng(2);
  const auto img = random_tensor({8, 8, 8}, rng, -1, 1, false);
  const auto z = net.encode(img, ad::Tensor::full({8, 8, 8}, 1.0));
  ad::backward(dg::testing::probe_sum(z.data));
  const auto w = net.parameters().find("encoder.stem.weight");
  double norm = 0.0;
  for (double g : w.grad()) norm += g * g;
  CHECK(norm > 0.0);
}

TEST_CASE("predict_latent") {
  const auto cfg = tiny_config();
  GrowthNet net(cfg);
  std::mt19937_64 rng(3);
  ad::NoGradGuard g;
  std::vector<LatentGrid> latents{{random_tensor({4, 4, 4, 4}, rng, -1, 1, false)},
                                  {random_tensor({4, 4, 4, 4}, rng, -1, 1, false)}};
  const std::vector<double> dates{0.0, 0.2, 0.5};
  const auto out = net.predict_latent(latents, dates, false, rng);
  CHECK(out.data.shape() == ad::Shape{4, 4, 4, 4});

  SUBCASE("inference is deterministic and depends on the interval") {
    const auto again = net.predict_latent(latents, dates, false, rng);
    for (std::size_t i = 0; i < out.data.numel(); ++i) REQUIRE(again.data[i] == out.data[i]);
    const std::vector<double> later{0.0, 0.2, 0.9};
    const auto moved = net.predict_latent(latents, later, false, rng);
    bool differs = false;
    for (std::size_t i = 0; i < out.data.numel(); ++i) differs |= moved.data[i] != out.data[i];
    CHECK(differs);
  }
  SUBCASE("without time features the interval is ignored") {
    auto c = cfg;
    c.time_mode = TimeMode::None;
    GrowthNet blind(c);
    const auto x = blind.predict_latent(latents, dates, false, rng);
    const auto y = blind.predict_latent(latents, std::vector<double>{0.0, 0.1, 0.95}, false, rng);
    for (std::size_t i = 0; i < x.data.numel(); ++i) REQUIRE(x.data[i] == y.data[i]);
  }
  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(net.predict_latent({}, std::vector<double>{0.0}, false, rng), std::invalid_argument);
    CHECK_THROWS_AS(net.predict_latent(latents, std::vector<double>{0.0, 0.2}, false, rng), std::invalid_argument);
    std::vector<LatentGrid> bad{latents[0], {random_tensor({3, 4, 4, 4}, rng, -1, 1, false)}};
    CHECK_THROWS_AS(net.predict_latent(bad, dates, false, rng), ad::ShapeError);
  }
  SUBCASE("zero parameters give a zero latent") {
    for (auto& t : net.parameters().tensors()) {
      auto v = t.mutable_values();
      std::fill(v.begin(), v.end(), 0.0);
    }
    const auto z = net.predict_latent(latents, dates, false, rng);
    for (double v : z.data.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("predict and reconstruct") {
  const auto cfg = tiny_config();
  GrowthNet net(cfg);
  std::mt19937_64 rng(4);
  const auto c = random_case(cfg.volume, 3, rng);
  const auto p = predict(net, c, 0.75);
  CHECK(p.sdf.size() == 512);
  CHECK(p.dims == cfg.volume);
  CHECK(p.outputs.latents.size() == 2);
  CHECK(p.mask() == sdf_to_mask(p.sdf, p.dims));
  const auto one = predict(net, c, 0.75, 1);
  CHECK(one.outputs.latents.size() == 1);
  CHECK_THROWS_AS(predict(net, c, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(predict(net, c, 0.9, 4), std::invalid_argument);
  const auto rec = reconstruct_inputs(net, p.outputs);
  REQUIRE(rec.size() == 2);
  CHECK(rec[0] == decode_full_grid(net.decoder(), p.outputs.latents[0], cfg.volume));
}

TEST_CASE("end-to-end gradients match central differences") {
  GrowthNet net(tiny_config());
  std::mt19937_64 rng(5);
  auto c = random_case({8, 8, 8}, 3, rng);
  const auto pts = random_tensor({16, 3}, rng, -0.95, 0.95, false);
  auto loss = [&] {
    std::mt19937_64 r(0);
    const auto out = forward_latents(net, c, false, r);
    return ad::add(dg::testing::probe_sum(decode_sdf(net.decoder(), out.predicted, pts)),
                   dg::testing::probe_sum(decode_sdf(net.decoder(), out.latents[0], pts), 7));
  };
  // Biases start at zero; nudge them so no ReLU sits on its kink.
  std::mt19937_64 init(6);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& t : net.parameters().tensors()) {
    if (t.shape().size() != 1) continue;
    for (auto& v : t.mutable_values()) v += u(init);
  }
  const auto params = net.parameters().tensors();
  const auto r = dg::testing::check_gradients(params, loss, 1e-6, 2);
  CHECK(r.checked >= 20);
  CHECK(r.max_rel < 1e-3);
}
