#include "doctest.h"

#include <cmath>
#include <random>

#include "deepgrowth/neural_field.hpp"
#include "deepgrowth/optim.hpp"
#include "test_util.hpp"

using namespace dg;
using dg::testing::random_tensor;

namespace {

struct Field {
  ad::ParameterSet params;
  DecoderMlp mlp;
  LatentGrid z;
};

Field make_field(std::size_t channels, const Dims& latent, std::uint64_t seed) {
  Field f;
  std::mt19937_64 rng(seed);
  DecoderConfig cfg;
  cfg.latent_channels = channels;
  f.mlp = DecoderMlp(cfg, f.params, rng);
  f.z.data = random_tensor({channels, latent[0], latent[1], latent[2]}, rng, -1, 1, false);
  return f;
}

void make_constant(DecoderMlp& mlp, double b) {
  auto& w = mlp.weights().back();
  for (auto& v : w.mutable_values()) v = 0.0;
  mlp.biases().back().mutable_values()[0] = b;
}

}  // namespace

TEST_CASE("decoder layout") {
  Field f = make_field(32, {8, 8, 8}, 1);
  // 5 sine layers of width 64 plus the linear head.
  REQUIRE(f.mlp.weights().size() == 6);
  CHECK(f.mlp.weights()[0].shape() == ad::Shape{64, 35});
  for (std::size_t l = 1; l < 5; ++l) CHECK(f.mlp.weights()[l].shape() == ad::Shape{64, 64});
  CHECK(f.mlp.weights()[5].shape() == ad::Shape{1, 64});
  CHECK(f.params.scalar_count() == 35 * 64 + 64 + 4 * (64 * 64 + 64) + 64 + 1);
  // Sine-network initialization bounds.
  for (double v : f.mlp.weights()[0].values()) CHECK(std::abs(v) <= 1.0 / 35.0);
  for (double v : f.mlp.weights()[1].values()) CHECK(std::abs(v) <= std::sqrt(6.0 / 64.0));
}

TEST_CASE("query_latent") {
  std::mt19937_64 rng(2);
  LatentGrid z{random_tensor({3, 4, 4, 4}, rng, -1, 1, false)};
  const double node = -1.0 + 2.0 * 2.0 / 3.0;
  auto at = query_latent(z, ad::Tensor::from({1, 3}, {node, -1.0, 1.0}));
  for (std::size_t c = 0; c < 3; ++c) CHECK(at[c] == doctest::Approx(z.data[((c * 4 + 2) * 4 + 0) * 4 + 3]).epsilon(1e-15));

  LatentGrid constant{ad::Tensor::full({2, 3, 3, 3}, 0.7)};
  auto pts = random_tensor({50, 3}, rng, -1, 1, false);
  auto q = query_latent(constant, pts);
  for (double v : q.values()) CHECK(v == doctest::Approx(0.7).epsilon(1e-14));

  const double mid = -1.0 + 2.0 * 1.5 / 3.0;
  auto cell = query_latent(z, ad::Tensor::from({1, 3}, {mid, mid, mid}));
  double mean = 0.0;
  for (std::size_t a : {1, 2})
    for (std::size_t b : {1, 2})
      for (std::size_t c : {1, 2}) mean += z.data[((0 * 4 + a) * 4 + b) * 4 + c] / 8.0;
  CHECK(cell[0] == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("decode_sdf") {
  Field f = make_field(4, {3, 3, 3}, 3);
  std::mt19937_64 rng(4);
  auto pts = random_tensor({20, 3}, rng, -1, 1, false);

  SUBCASE("permuting points permutes outputs") {
    const auto out = decode_sdf(f.mlp, f.z, pts);
    REQUIRE(out.shape() == ad::Shape{20, 1});
    std::vector<double> rev;
    for (std::size_t p = 20; p-- > 0;)
      for (int a = 0; a < 3; ++a) rev.push_back(pts[p * 3 + a]);
    const auto out_rev = decode_sdf(f.mlp, f.z, ad::Tensor::from({20, 3}, rev));
    for (std::size_t p = 0; p < 20; ++p) CHECK(out_rev[19 - p] == out[p]);
  }
  SUBCASE("zero head weights give the head bias") {
    make_constant(f.mlp, 0.3);
    const auto out = decode_sdf(f.mlp, f.z, pts);
    for (double v : out.values()) CHECK(v == 0.3);
    for (double v : decode_full_grid(f.mlp, f.z, {5, 5, 5})) CHECK(v == 0.3);
  }
  SUBCASE("NaN inputs are rejected") {
    LatentGrid bad{ad::Tensor::full({4, 3, 3, 3}, std::nan(""))};
    CHECK_THROWS_AS(decode_sdf(f.mlp, bad, pts), std::invalid_argument);
    CHECK_THROWS_AS(decode_sdf(f.mlp, f.z, ad::Tensor::from({1, 3}, {0.0, std::nan(""), 0.0})), std::invalid_argument);
  }
  SUBCASE("gradients w.r.t. latent, points and weights match central differences") {
    LatentGrid zg{random_tensor({4, 3, 3, 3}, rng)};
    auto pg = random_tensor({8, 3}, rng, -0.9, 0.9);
    std::vector<ad::Tensor> inputs{zg.data, pg};
    for (auto& w : f.mlp.weights()) inputs.push_back(w);
    for (auto& b : f.mlp.biases()) inputs.push_back(b);
    auto r = dg::testing::check_gradients(inputs, [&] { return dg::testing::probe_sum(decode_sdf(f.mlp, zg, pg)); },
                                          1e-6, 40);
    CHECK(r.max_rel < 1e-4);
  }
}

TEST_CASE("decode_full_grid equals per-voxel decoding") {
  Field f = make_field(4, {2, 2, 2}, 5);
  const Dims out{8, 8, 8};
  const auto grid = decode_full_grid(f.mlp, f.z, out);
  REQUIRE(grid.size() == 512);
  ad::NoGradGuard g;
  for (std::size_t i = 0; i < 512; ++i) {
    const auto p = voxel_center_points(out, i, 1);
    CHECK(decode_sdf(f.mlp, f.z, p)[0] == grid[i]);
  }
}

TEST_CASE("decode_full_grid at 32^3: shape, finiteness and chunk independence") {
  Field f = make_field(32, {8, 8, 8}, 6);
  const auto grid = decode_full_grid(f.mlp, f.z, {32, 32, 32});
  REQUIRE(grid.size() == 32768);
  for (double v : grid) CHECK(std::isfinite(v));
  ad::NoGradGuard g;
  const auto tail = decode_sdf(f.mlp, f.z, voxel_center_points({32, 32, 32}, 30000, 2768));
  for (std::size_t i = 0; i < 2768; ++i) CHECK(tail[i] == grid[30000 + i]);
}

TEST_CASE("voxel_center_points use corner-aligned coordinates") {
  const auto p = voxel_center_points({3, 5, 2}, 0, 30);
  CHECK(p.shape() == ad::Shape{30, 3});
  CHECK(p[0] == -1.0);
  CHECK(p[1] == -1.0);
  CHECK(p[2] == -1.0);
  CHECK(p[29 * 3 + 0] == 1.0);
  CHECK(p[29 * 3 + 1] == 1.0);
  CHECK(p[29 * 3 + 2] == 1.0);
  CHECK(p[1 * 3 + 2] == 1.0);
}

TEST_CASE("changing one latent node only affects its trilinear support") {
  Field f = make_field(4, {4, 4, 4}, 7);
  const Dims out{16, 16, 16};
  const auto before = decode_full_grid(f.mlp, f.z, out);
  const std::size_t nz = 1, ny = 2, nx = 1;
  for (std::size_t c = 0; c < 4; ++c) f.z.data.mutable_values()[((c * 4 + nz) * 4 + ny) * 4 + nx] += 0.5;
  const auto after = decode_full_grid(f.mlp, f.z, out);
  std::size_t changed = 0;
  for (std::size_t z = 0; z < 16; ++z)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) {
        const std::size_t i = flat_index(out, z, y, x);
        // Latent coordinate of this voxel center.
        const double lz = z * 3.0 / 15.0, ly = y * 3.0 / 15.0, lx = x * 3.0 / 15.0;
        const bool inside = std::abs(lz - nz) < 1.0 && std::abs(ly - ny) < 1.0 && std::abs(lx - nx) < 1.0;
        if (!inside) CHECK(after[i] == before[i]);
        changed += after[i] != before[i];
      }
  CHECK(changed > 0);
}

TEST_CASE("identical coordinates and latent vectors decode identically") {
  Field f = make_field(2, {3, 3, 3}, 8);
  LatentGrid other{ad::Tensor::full({2, 3, 3, 3}, 0.0)};
  // Same interpolated vector at the queried point, different elsewhere.
  const double node = 0.0;
  for (std::size_t c = 0; c < 2; ++c) other.data.mutable_values()[((c * 3 + 1) * 3 + 1) * 3 + 1] = f.z.data[((c * 3 + 1) * 3 + 1) * 3 + 1];
  const auto p = ad::Tensor::from({1, 3}, {node, node, node});
  CHECK(decode_sdf(f.mlp, f.z, p)[0] == decode_sdf(f.mlp, other, p)[0]);
}
