#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "miassr/critic.hpp"
#include "miassr/rng.hpp"

using namespace miassr;

namespace {

Tensor random_image(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform();
  return t;
}

model::CriticState small_critic(uint64_t seed, int64_t blocks = 3, int64_t base = 8, int64_t channels = 1,
                                const std::string& mode = "critic") {
  model::CriticConfig cfg;
  cfg.blocks = blocks;
  cfg.base_channels = base;
  cfg.channels = channels;
  cfg.mode = mode;
  Rng rng(seed);
  return model::init_critic(cfg, rng);
}

}  // namespace

TEST_CASE("channel widths double every second block") {
  model::CriticConfig cfg;  // 7 blocks, base 64
  const int64_t want[] = {64, 64, 128, 128, 256, 256, 512};
  for (int64_t i = 0; i < 7; ++i) CHECK(cfg.block_channels(i) == want[i]);
}

TEST_CASE("spatial trace halves with ceil and rejects exhausted inputs") {
  model::CriticConfig cfg;
  const auto trace = model::critic_spatial_trace(cfg, 96, 96);
  REQUIRE(trace.size() == 7);
  const int64_t want[] = {48, 24, 12, 6, 3, 2, 1};
  for (size_t i = 0; i < 7; ++i) {
    CHECK(trace[i].first == want[i]);
    CHECK(trace[i].second == want[i]);
  }
  CHECK_THROWS(model::critic_spatial_trace(cfg, 24, 24));  // 12,6,3,2,1 then a 1 enters block 6
  model::CriticConfig small;
  small.blocks = 4;
  CHECK(model::critic_spatial_trace(small, 24, 24).size() == 4);
}

TEST_CASE("parameter names and counts are consistent") {
  model::CriticConfig cfg;
  cfg.blocks = 3;
  cfg.base_channels = 8;
  int64_t total = 0;
  for (const auto& [name, shape] : model::critic_param_shapes(cfg)) total += shape_numel(shape);
  CHECK(total == model::count_critic_params(cfg));
  Rng rng(1);
  const auto st = model::init_critic(cfg, rng);
  CHECK(st.params.size() == model::critic_param_shapes(cfg).size());
}

TEST_CASE("one scalar score per batch sample") {
  const auto st = small_critic(2);
  Rng rng(41);
  const Tensor batch = random_image(rng, {5, 1, 16, 16});
  const Tensor s = model::run_critic(st, batch);
  CHECK(s.ndim() == 1);
  CHECK(s.dim(0) == 5);
  CHECK(s.all_finite());
  // single image convenience: [C,H,W] -> [1]
  const Tensor one = model::run_critic(st, random_image(rng, {1, 16, 16}));
  CHECK(one.dim(0) == 1);
}

TEST_CASE("scores are permutation-equivariant across the batch") {
  const auto st = small_critic(3);
  Rng rng(42);
  const Tensor a = random_image(rng, {1, 1, 12, 12});
  const Tensor b = random_image(rng, {1, 1, 12, 12});
  Tensor ab({2, 1, 12, 12}), ba({2, 1, 12, 12});
  std::copy(a.data(), a.data() + a.numel(), ab.data());
  std::copy(b.data(), b.data() + b.numel(), ab.data() + a.numel());
  std::copy(b.data(), b.data() + b.numel(), ba.data());
  std::copy(a.data(), a.data() + a.numel(), ba.data() + b.numel());
  const Tensor sab = model::run_critic(st, ab), sba = model::run_critic(st, ba);
  CHECK(sab.data()[0] == sba.data()[1]);
  CHECK(sab.data()[1] == sba.data()[0]);
}

TEST_CASE("classifier mode squashes scores into (0,1), critic mode does not") {
  Rng rng(43);
  const Tensor x = random_image(rng, {3, 1, 12, 12});
  const auto cls = small_critic(4, 3, 8, 1, "classifier");
  const Tensor p = model::run_critic(cls, x);
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(p.data()[i] > 0.0);
    CHECK(p.data()[i] < 1.0);
  }
  // same weights, critic mode: the raw logits
  auto raw = cls;
  raw.cfg.mode = "critic";
  const Tensor z = model::run_critic(raw, x);
  for (int64_t i = 0; i < 3; ++i)
    CHECK(p.data()[i] == doctest::Approx(1.0 / (1.0 + std::exp(-z.data()[i]))).epsilon(1e-12));
}

TEST_CASE("input gradient norm matches a finite-difference probe") {
  const auto st = small_critic(5, 2, 6);
  Rng rng(44);
  Tensor x = random_image(rng, {1, 1, 8, 8});
  const Tensor norm = model::critic_gradient_norm(st, x);
  REQUIRE(norm.dim(0) == 1);
  // FD: sum of squared directional derivatives over all pixels
  const double h = 1e-6;
  double sq = 0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    Tensor xp = x, xm = x;
    xp.data()[i] += h;
    xm.data()[i] -= h;
    const double d = (model::run_critic(st, xp).data()[0] - model::run_critic(st, xm).data()[0]) / (2 * h);
    sq += d * d;
  }
  CHECK(norm.data()[0] == doctest::Approx(std::sqrt(sq)).epsilon(1e-5));
}

TEST_CASE("graph logits equal the eager pass") {
  const auto st = small_critic(6);
  Rng rng(45);
  const Tensor x = random_image(rng, {2, 1, 16, 16});
  ad::Tape t;
  model::CriticGraph cg(t, st, false);
  const Tensor viaGraph = t.val(cg.logits(t.leaf(x, false)));
  auto raw = st;
  raw.cfg.mode = "critic";
  const Tensor eager = model::run_critic(raw, x);
  CHECK(max_abs_diff(viaGraph, eager) == 0.0);
}

TEST_CASE("too-small inputs are rejected up front") {
  const auto st = small_critic(7, 5, 8);  // 5 stride-2 stages
  Rng rng(46);
  CHECK_THROWS(model::run_critic(st, random_image(rng, {1, 1, 8, 8})));
}
