#include <doctest.h>

#include <cmath>

#include "engine_internal.hpp"
#include "livepipe/engine.hpp"
#include "livepipe/errors.hpp"
#include "livepipe/scenario.hpp"

using namespace livepipe;

namespace {

EngineConfig base(EngineMode mode, int T, std::int64_t M, std::size_t L = 4) {
  EngineConfig c;
  c.mode = mode;
  c.steps = T;
  c.blocks = M;
  c.cache_length = L;
  return c;
}

float max_diff(const Vec& a, const Vec& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.dim(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("nfe accounting") {
  CHECK(run_sequential(base(EngineMode::kSequential, 4, 7)).nfe == 28);
  CHECK(run_tpp(base(EngineMode::kTpp, 4, 7)).nfe == 28);
  CHECK(run_clean_kv(base(EngineMode::kCleanKv, 4, 7)).nfe == 35);
  CHECK(count_nfe(run_tpp(base(EngineMode::kTpp, 4, 10))) == 40);
  CHECK(count_nfe(run_clean_kv(base(EngineMode::kCleanKv, 4, 10))) == 50);

  auto oracle = base(EngineMode::kCleanKv, 4, 10);
  oracle.denoiser = DenoiserKind::kOracle;
  CHECK(count_nfe(run_engine(oracle)) == 50);
  oracle.mode = EngineMode::kTpp;
  CHECK(count_nfe(run_engine(oracle)) == 40);
}

TEST_CASE("oracle rollout decodes to the decoded target") {
  auto c = base(EngineMode::kSequential, 4, 1);
  c.denoiser = DenoiserKind::kOracle;
  const auto r = run_sequential(c);
  const detail::RolloutModel model(c);
  const auto expected = model.vae().decode(model.oracle_target(0));
  REQUIRE(r.frames.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(max_diff(r.frames[i].pixels, expected[i].pixels) < 1e-4f);
}

TEST_CASE("oracle with a constant target has constant drift") {
  auto c = base(EngineMode::kTpp, 4, 6);
  c.denoiser = DenoiserKind::kOracle;
  c.constant_target = true;
  const auto r = run_tpp(c);
  REQUIRE(r.metrics.drift.size() == 6 * 3 * 4);
  // sub-frame u of every block decodes the same latent
  for (std::size_t i = 12; i < r.metrics.drift.size(); ++i) {
    CHECK(std::abs(*r.metrics.drift[i] - *r.metrics.drift[i % 12]) < 1e-6);
  }
}

TEST_CASE("runs are deterministic") {
  for (auto mode : {EngineMode::kSequential, EngineMode::kCleanKv, EngineMode::kTpp}) {
    auto c = base(mode, 4, 9);
    c.history_sigma = 0.05f;
    const auto a = run_engine(c);
    const auto b = run_engine(c);
    CHECK(a.latents == b.latents);
    CHECK(a.frames == b.frames);
    CHECK(a.timeline == b.timeline);
  }
}

TEST_CASE("clean kv with one block equals sequential") {
  for (int T : {1, 2, 4}) {
    const auto seq = run_sequential(base(EngineMode::kSequential, T, 1));
    const auto clean = run_clean_kv(base(EngineMode::kCleanKv, T, 1));
    CHECK(seq.latents == clean.latents);
    CHECK(seq.frames == clean.frames);
  }
}

TEST_CASE("tpp equals sequential bitwise") {
  struct Case {
    int T;
    std::size_t L;
    std::int64_t M;
    std::uint64_t seed;
    float sigma;
    std::size_t capacity;
  };
  for (const auto& k : {Case{1, 1, 5, 1, 0.0f, 1}, Case{3, 2, 11, 4, 0.0f, 3}, Case{4, 4, 20, 9, 0.1f, 1},
                        Case{8, 3, 12, 2, 0.05f, 2}}) {
    auto c = base(EngineMode::kSequential, k.T, k.M, k.L);
    c.weight_seed = c.noise_seed = c.cond_seed = k.seed;
    c.history_sigma = k.sigma;
    c.link_capacity = k.capacity;
    const auto seq = run_sequential(c);
    c.mode = EngineMode::kTpp;
    const auto tpp = run_tpp(c);
    CHECK(seq.latents == tpp.latents);
    CHECK(seq.frames == tpp.frames);
    CHECK(seq.final_sink == tpp.final_sink);
  }
  auto oracle = base(EngineMode::kSequential, 4, 6);
  oracle.denoiser = DenoiserKind::kOracle;
  CHECK(verify_equivalence(oracle).equal());
}

TEST_CASE("tpp timeline matches the simulator") {
  auto c = base(EngineMode::kTpp, 4, 10);
  c.latencies = StageLatencies::from_list(std::vector<double>{0.3, 0.2, 0.25, 0.4, 0.35});
  c.latencies.broadcast = 0.05;
  const auto run = run_tpp(c);
  c.mode = EngineMode::kSimulate;
  c.simulate_mode = ScheduleMode::kTpp;
  const auto sim = run_engine(c);
  CHECK(run.timeline == sim.timeline);
  CHECK(run.metrics.steady_fps == sim.metrics.steady_fps);
}

TEST_CASE("steady state keeps every stage busy at once") {
  auto c = base(EngineMode::kTpp, 4, 12);
  const auto r = run_tpp(c);
  bool all_busy = false;
  for (const auto& probe : r.timeline) {
    const double t = 0.5 * (probe.start + probe.end);
    int busy = 0;
    for (const auto& e : r.timeline) {
      if ((e.kind == EventKind::kDenoise || e.kind == EventKind::kDecode) && e.start <= t && t < e.end) ++busy;
    }
    all_busy = all_busy || busy == c.steps + 1;
  }
  CHECK(all_busy);
}

TEST_CASE("sink adapts once and cache never exceeds its length") {
  for (auto mode : {EngineMode::kSequential, EngineMode::kTpp, EngineMode::kCleanKv}) {
    auto c = base(mode, 2, 256, 3);
    const auto r = run_engine(c);
    CHECK(r.aas_updates == 1);
    CHECK(r.max_cache_size <= 3);
    REQUIRE(r.sink_trace.size() == 256);
    const detail::RolloutModel model(c);
    CHECK(r.sink_trace[0] == model.conditions().reference);
    const LatentFrame adapted = aas_sink_latent(model.vae(), r.latents[0]);
    for (std::size_t i = 1; i < r.sink_trace.size(); ++i) CHECK(r.sink_trace[i] == adapted);
    CHECK(r.final_sink == adapted);
  }
}

TEST_CASE("config errors") {
  auto c = base(EngineMode::kTpp, 4, 4);
  c.max_workers = 3;
  CHECK_THROWS_AS(run_tpp(c), ConfigError);
  c.max_workers = 5;
  CHECK_NOTHROW(run_tpp(c));

  auto bad = base(EngineMode::kSequential, 0, 4);
  CHECK_THROWS_AS(run_engine(bad), ConfigError);
  bad = base(EngineMode::kSequential, 4, 0);
  CHECK_THROWS_AS(run_engine(bad), ConfigError);
  bad = base(EngineMode::kSequential, 4, 4, 0);
  CHECK_THROWS_AS(run_engine(bad), ConfigError);
  bad = base(EngineMode::kSequential, 4, 4);
  bad.sink_delta = 0;
  CHECK_THROWS_AS(run_engine(bad), ConfigError);
}
