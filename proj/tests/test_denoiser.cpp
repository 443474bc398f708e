#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <thread>

#include "livepipe/denoiser.hpp"
#include "livepipe/errors.hpp"
#include "livepipe/kvcache.hpp"

using namespace livepipe;

namespace {

LatentBlock random_block(std::uint64_t seed, std::int64_t index, std::size_t frames = 3,
                         std::size_t dim = 16) {
  Prng p(seed, static_cast<std::uint64_t>(index) + 1000);
  LatentBlock b;
  b.block_index = index;
  for (std::size_t f = 0; f < frames; ++f) b.frames.push_back({gaussian(p, dim)});
  return b;
}

Vec random_vec(std::uint64_t seed, std::size_t dim) {
  Prng p(seed, 77);
  return gaussian(p, dim);
}

float max_diff(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  REQUIRE(a.size() == b.size());
  float m = 0.0f;
  for (std::size_t f = 0; f < a.size(); ++f)
    for (std::size_t i = 0; i < a[f].dim(); ++i) m = std::max(m, std::abs(a[f][i] - b[f][i]));
  return m;
}

struct Fixture {
  DenoiserConfig cfg;
  DenoiserWeights w = DenoiserWeights::build(cfg, 3);
  Vec prompt = random_vec(8, cfg.prompt_dim);
  LatentFrame sink{random_vec(9, cfg.latent_dim)};
  SinkKv sink_kv = make_sink_kv(w, sink);
};

}  // namespace

TEST_CASE("zero output projection gives zero velocity") {
  Fixture fx;
  for (float& x : fx.w.w_out.span()) x = 0.0f;
  const LatentBlock x = random_block(1, 0);
  const RollingKvCache cache(2, 4);
  const auto out = denoise_block(fx.w, x, {2, 0.5f}, cache.view(), fx.sink_kv, {}, fx.prompt, {0, 1});
  for (const auto& v : out.velocity) CHECK(v == Vec(16));
  CHECK(flow_step(x, out.velocity, -0.25f) == x);
}

TEST_CASE("an entry with no attention mass changes nothing") {
  Fixture fx;
  fx.cfg.layers = 1;
  fx.w = DenoiserWeights::build(fx.cfg, 3);
  fx.sink_kv = make_sink_kv(fx.w, fx.sink);
  const auto& cfg = fx.cfg;
  const std::size_t m = cfg.model_dim();
  const LatentBlock x = random_block(2, 5);
  const Vec zero_prompt(cfg.prompt_dim);
  const float level = 1.0f;
  const std::int64_t pos = 5;

  // Queries of the single layer, recomputed here in double.
  Eigen::MatrixXd xin(3, cfg.latent_dim), win(cfg.latent_dim, m), wq(m, m);
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t i = 0; i < cfg.latent_dim; ++i) xin(f, i) = x.frames[f].values[i];
  for (std::size_t i = 0; i < cfg.latent_dim; ++i)
    for (std::size_t c = 0; c < m; ++c) win(i, c) = fx.w.w_in(i, c);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < m; ++c) wq(r, c) = fx.w.layers[0].wq(r, c);
  Eigen::MatrixXd h = xin * win;
  for (std::size_t c = 0; c < m; ++c) h.col(c).array() += level * fx.w.w_time[c];
  const Eigen::MatrixXd q = h * wq;

  // Per head, a key direction every query scores strongly negative against.
  Mat keys(3, m), values(3, m);
  for (std::size_t hh = 0; hh < cfg.heads; ++hh) {
    Eigen::MatrixXd qh(3, cfg.head_dim);
    for (int f = 0; f < 3; ++f) {
      Vec row(cfg.head_dim);
      for (std::size_t d = 0; d < cfg.head_dim; ++d) row[d] = static_cast<float>(q(f, hh * cfg.head_dim + d));
      row = rope_rotate(row, pos, cfg.rope_base);
      for (std::size_t d = 0; d < cfg.head_dim; ++d) qh(f, d) = row[d];
    }
    const Eigen::VectorXd u = -qh.transpose() * (qh * qh.transpose()).inverse() * Eigen::VectorXd::Ones(3);
    for (std::size_t f = 0; f < 3; ++f)
      for (std::size_t d = 0; d < cfg.head_dim; ++d) keys(f, hh * cfg.head_dim + d) = static_cast<float>(1e5 * u(d));
  }
  KvEntry masked{4, 2, 4, {keys}, {values}};
  const std::vector<KvEntry> entries{masked};

  const RollingKvCache empty(2, 4);
  const auto a = denoise_block(fx.w, x, {2, level}, empty.view(), fx.sink_kv, {}, zero_prompt, {pos, pos + 1});
  const auto b = denoise_block(fx.w, x, {2, level}, CacheView{entries, 2, 4}, fx.sink_kv, {}, zero_prompt,
                               {pos, pos + 1});
  CHECK(max_diff(a.velocity, b.velocity) < 1e-6f);

  // sanity: the same entry with live values does move the output
  KvEntry live = masked;
  for (float& k : live.keys[0].span()) k = 0.0f;
  for (float& v : live.values[0].span()) v = 1.0f;
  const std::vector<KvEntry> live_entries{live};
  const auto c = denoise_block(fx.w, x, {2, level}, CacheView{live_entries, 2, 4}, fx.sink_kv, {}, zero_prompt,
                               {pos, pos + 1});
  CHECK(max_diff(a.velocity, c.velocity) > 1e-3f);
}

TEST_CASE("denoise_block is pure") {
  Fixture fx;
  RollingKvCache cache(3, 4);
  for (std::int64_t b = 0; b < 3; ++b) {
    cache.push(denoise_block(fx.w, random_block(4, b), {3, 0.75f}, cache.view(), fx.sink_kv, {}, fx.prompt,
                             {b, b + 1})
                   .kv);
  }
  const LatentBlock x = random_block(4, 3);
  const Vec audio = random_vec(12, fx.cfg.audio_dim);
  const auto a = denoise_block(fx.w, x, {3, 0.75f}, cache.view(), fx.sink_kv, audio, fx.prompt, {3, 4});
  DenoiseOutput b;
  std::thread([&] { b = denoise_block(fx.w, x, {3, 0.75f}, cache.view(), fx.sink_kv, audio, fx.prompt, {3, 4}); })
      .join();
  CHECK(a.velocity == b.velocity);
  CHECK(a.kv == b.kv);
}

TEST_CASE("timestep forcing and capacity are enforced") {
  Fixture fx;
  const LatentBlock x = random_block(5, 1);
  RollingKvCache cache(2, 4);
  cache.push(denoise_block(fx.w, random_block(5, 0), {2, 0.5f}, cache.view(), fx.sink_kv, {}, fx.prompt, {0, 1}).kv);

  CHECK_THROWS_AS(denoise_block(fx.w, x, {3, 0.75f}, cache.view(), fx.sink_kv, {}, fx.prompt, {1, 2}),
                  InvariantError);

  std::vector<KvEntry> mixed = cache.entries();
  mixed.push_back(mixed.front());
  mixed.back().timestep_index = 3;
  mixed.back().block_index = 1;
  CHECK_THROWS_AS(denoise_block(fx.w, x, {2, 0.5f}, CacheView{mixed, 2, 4}, fx.sink_kv, {}, fx.prompt, {1, 2}),
                  InvariantError);

  std::vector<KvEntry> over(2, cache.entries().front());
  CHECK_THROWS_AS(denoise_block(fx.w, x, {2, 0.5f}, CacheView{over, 2, 1}, fx.sink_kv, {}, fx.prompt, {1, 2}),
                  InvariantError);
}

TEST_CASE("oracle denoiser") {
  Fixture fx;
  const LatentBlock target = random_block(6, 0);
  const LatentBlock noise = random_block(7, 0);
  for (float s : {1.0f, 0.75f, 0.3f}) {
    LatentBlock x;
    for (std::size_t f = 0; f < 3; ++f) x.frames.push_back(interpolate(target.frames[f], noise.frames[f], s));
    const auto out = oracle_denoise(fx.w, x, s, target, 1, 0);
    std::vector<Vec> expected;
    for (std::size_t f = 0; f < 3; ++f) expected.push_back(true_velocity(target.frames[f], noise.frames[f]));
    CHECK(max_diff(out.velocity, expected) < 1e-5f);
  }
  CHECK_THROWS(oracle_denoise(fx.w, noise, 0.0f, target, 1, 0));
}

namespace {

// Rolls `blocks` blocks through one step with a rolling cache of length L,
// returning the per-block velocities and the history the brute force needs.
struct WindowRun {
  std::vector<std::vector<Vec>> velocities;
  std::vector<HistoryBlock> history;
};

WindowRun window_rollout(const Fixture& fx, std::size_t L, std::int64_t blocks, std::int64_t shift = 0) {
  WindowRun run;
  RollingKvCache cache(2, L);
  for (std::int64_t b = 0; b < blocks; ++b) {
    const LatentBlock x = random_block(40, b);
    const Vec audio = random_vec(100 + static_cast<std::uint64_t>(b), fx.cfg.audio_dim);
    const RopePositions pos{b + shift, rolling_rope_index(b, 1) + shift};
    const auto out = denoise_block(fx.w, x, {2, 0.5f}, cache.view(), fx.sink_kv, audio, fx.prompt, pos);
    cache.push(out.kv);
    run.velocities.push_back(out.velocity);
    run.history.push_back({x, audio, fx.sink, pos.current, pos.sink});
  }
  return run;
}

}  // namespace

TEST_CASE("rolling cache matches brute-force windowed attention") {
  Fixture fx;
  for (std::size_t L : {1u, 2u, 4u}) {
    CAPTURE(L);
    const auto run = window_rollout(fx, L, 12);
    for (std::size_t n = 1; n <= 12; ++n) {
      CAPTURE(n);
      const std::span<const HistoryBlock> prefix(run.history.data(), n);
      const auto ref = attention_bruteforce(fx.w, prefix, {2, 0.5f}, fx.prompt, L);
      const auto& got = run.velocities[n - 1];
      if (n <= L + 1) {  // nothing evicted yet
        CHECK(ref.back() == got);
      } else {
        CHECK(max_diff(ref.back(), got) < 1e-5f);
        // the window really hides something
        const auto wide = attention_bruteforce(fx.w, prefix, {2, 0.5f}, fx.prompt, 12);
        CHECK(max_diff(wide.back(), got) > 1e-4f);
      }
    }
  }
}

TEST_CASE("single block brute force is plain self-attention") {
  Fixture fx;
  const auto run = window_rollout(fx, 4, 1);
  const auto ref = attention_bruteforce(fx.w, run.history, {2, 0.5f}, fx.prompt, 0);
  CHECK(ref.front() == run.velocities.front());
}

TEST_CASE("shifting every position leaves velocities unchanged") {
  Fixture fx;
  const auto base = window_rollout(fx, 4, 8);
  for (std::int64_t s : {1, 10, 10000, 40000}) {
    CAPTURE(s);
    const auto moved = window_rollout(fx, 4, 8, s);
    for (std::size_t b = 0; b < 8; ++b) CHECK(max_diff(base.velocities[b], moved.velocities[b]) < 1e-5f);
  }
}
