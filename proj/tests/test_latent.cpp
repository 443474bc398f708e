#include <doctest.h>

#include <cmath>

#include "livepipe/denoiser.hpp"
#include "livepipe/latent.hpp"

using namespace livepipe;

namespace {

LatentFrame frame(std::uint64_t seed, std::size_t dim) {
  Prng p(seed, 5);
  return {gaussian(p, dim)};
}

float max_abs_diff(const Vec& a, const Vec& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.dim(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("interpolate endpoints") {
  const LatentFrame x0{{1.0f, 0.0f}};
  const LatentFrame xT{{0.0f, 2.0f}};
  CHECK(interpolate(x0, xT, 0.0f) == x0);
  CHECK(interpolate(x0, xT, 1.0f) == xT);
  CHECK(interpolate(x0, xT, 0.5f).values == Vec{0.5f, 1.0f});
  CHECK_THROWS(interpolate(x0, LatentFrame{{1.0f}}, 0.5f));
  CHECK_THROWS(interpolate(x0, xT, 1.5f));
}

TEST_CASE("true velocity") {
  const LatentFrame a{{1.0f, 1.0f}};
  CHECK(true_velocity(a, a) == Vec{0.0f, 0.0f});
  CHECK(true_velocity(a, LatentFrame{{3.0f, 0.0f}}) == Vec{2.0f, -1.0f});

  const LatentFrame x0 = frame(1, 16);
  const LatentFrame xT = frame(2, 16);
  for (float s : {0.1f, 0.25f, 0.6f, 0.9f}) {
    const LatentFrame xs = interpolate(x0, xT, s);
    const Vec v = true_velocity(x0, xT);
    Vec back(16);
    for (std::size_t i = 0; i < 16; ++i) back[i] = xs.values[i] + (1.0f - s) * v[i];
    CHECK(max_abs_diff(back, xT.values) < 1e-6f);

    // stepping down by s from the interpolant lands on x0
    const LatentBlock b = flow_step({{xs}, 0}, {v}, -s);
    CHECK(max_abs_diff(b.frames[0].values, x0.values) < 1e-5f);
  }
}

TEST_CASE("flow step") {
  const LatentFrame x0 = frame(3, 8);
  const LatentFrame xT = frame(4, 8);
  const LatentBlock x{{xT}, 5};
  CHECK(flow_step(x, {Vec(8)}, -0.25f) == x);
  CHECK(flow_step(x, {Vec(8)}, -0.25f).block_index == 5);

  // dyadic values: every intermediate is exact, so the paths agree bitwise
  const LatentBlock d{{LatentFrame{{1.0f, -2.0f, 0.5f, 3.0f}}}, 0};
  const Vec v{0.5f, 1.0f, -2.0f, 4.0f};
  LatentBlock four = d;
  for (int i = 0; i < 4; ++i) four = flow_step(four, {v}, -0.25f);
  CHECK(four == flow_step(d, {v}, -1.0f));

  const Vec tv = true_velocity(x0, xT);
  CHECK(max_abs_diff(flow_step(x, {tv}, -1.0f).frames[0].values, x0.values) < 1e-6f);

  LatentBlock stepped = x;
  for (int i = 0; i < 4; ++i) stepped = flow_step(stepped, {tv}, -0.25f);
  CHECK(max_abs_diff(stepped.frames[0].values, x0.values) < 1e-5f);

  CHECK_THROWS(flow_step(x, {Vec(7)}, -0.1f));
  CHECK_THROWS(flow_step(x, {}, -0.1f));
}

TEST_CASE("uniform schedule") {
  const auto s = TimestepSchedule::uniform(4);
  CHECK(s.levels() == std::vector<float>{1.0f, 0.75f, 0.5f, 0.25f});
  for (int j = 1; j <= 4; ++j) CHECK(s.dt(j) == -0.25f);
  CHECK_THROWS(TimestepSchedule::from_levels({0.9f, 0.5f}));
  CHECK_THROWS(TimestepSchedule::from_levels({1.0f, 0.5f, 0.6f}));
}

TEST_CASE("oracle rollout reaches the target") {
  DenoiserConfig cfg;
  const auto w = DenoiserWeights::build(cfg, 1);
  LatentBlock target{{frame(10, 16), frame(11, 16), frame(12, 16)}, 0};
  for (int T : {1, 2, 4, 8}) {
    const auto sched = TimestepSchedule::uniform(T);
    LatentBlock x{{frame(20, 16), frame(21, 16), frame(22, 16)}, 0};
    for (int j = T; j >= 1; --j) {
      x = flow_step(x, oracle_denoise(w, x, sched.level(j), target, j, 0).velocity, sched.dt(j));
    }
    for (std::size_t f = 0; f < 3; ++f) CHECK(max_abs_diff(x.frames[f].values, target.frames[f].values) < 1e-4f);
  }
}

TEST_CASE("toy vae") {
  const ToyVae vae(9, 16, 32, 4);
  const LatentBlock zero{{LatentFrame{Vec(16)}, LatentFrame{Vec(16)}, LatentFrame{Vec(16)}}, 0};
  const auto frames = toy_decode(vae, zero);
  CHECK(frames.size() == 12);
  for (const auto& f : frames) CHECK(f.pixels == Vec(32));
  CHECK(toy_encode(vae, VideoFrame{Vec(32)}).values == Vec(16));

  const LatentBlock z{{frame(30, 16), frame(31, 16), frame(32, 16)}, 0};
  const auto decoded = toy_decode(vae, z);
  CHECK(decoded == toy_decode(vae, z));
  for (std::size_t f = 0; f < 3; ++f) {
    const LatentFrame back = toy_encode(vae, decoded[f * 4]);
    CHECK(max_abs_diff(back.values, z.frames[f].values) < 1e-4f);
  }
  CHECK(toy_encode(vae, decoded[0]) == toy_encode(vae, decoded[0]));
  CHECK_THROWS(toy_encode(vae, VideoFrame{Vec(31)}));

  for (std::size_t r : {1u, 2u, 4u}) {
    const ToyVae v(1, 16, 32, r);
    CHECK(v.decode(z).size() == 3 * r);
  }
}
