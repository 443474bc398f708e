#include <optional>
#include <string>

#include "engine_internal.hpp"
#include "livepipe/errors.hpp"

namespace livepipe {

std::string_view to_string(EngineMode mode) {
  switch (mode) {
    case EngineMode::kSequential: return "sequential";
    case EngineMode::kCleanKv: return "clean_kv";
    case EngineMode::kTpp: return "tpp";
    case EngineMode::kSimulate: return "simulate";
  }
  return "unknown";
}

EngineMode parse_engine_mode(std::string_view text) {
  if (text == "sequential") return EngineMode::kSequential;
  if (text == "clean_kv") return EngineMode::kCleanKv;
  if (text == "tpp") return EngineMode::kTpp;
  if (text == "simulate") return EngineMode::kSimulate;
  throw ConfigError("unknown mode '" + std::string(text) +
                    "' (expected sequential, clean_kv, tpp or simulate)");
}

std::string_view to_string(DenoiserKind kind) {
  return kind == DenoiserKind::kToy ? "toy" : "oracle";
}

DenoiserKind parse_denoiser_kind(std::string_view text) {
  if (text == "toy") return DenoiserKind::kToy;
  if (text == "oracle") return DenoiserKind::kOracle;
  throw ConfigError("unknown denoiser kind '" + std::string(text) + "' (expected toy or oracle)");
}

void EngineConfig::validate() const {
  const auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (steps < 1) fail("steps (T) must be >= 1");
  if (cache_length < 1) fail("cache length (L) must be >= 1");
  if (blocks < 1) fail("blocks (M) must be >= 1");
  if (frames_per_block < 1) fail("frames_per_block (F) must be >= 1");
  if (latent_dim < 1) fail("latent_dim (D) must be >= 1");
  if (pixel_dim < latent_dim) fail("pixel_dim (P) must be >= latent_dim (D)");
  if (upsample < 1) fail("upsample (r) must be >= 1");
  if (sink_delta < 1) fail("sink_delta must be >= 1");
  if (!(history_sigma >= 0.0f)) fail("history_sigma must be >= 0");
  if (link_capacity < 1) fail("link_capacity must be >= 1");
  if (network.layers < 1 || network.heads < 1) fail("network needs at least one layer and head");
  if (network.head_dim < 2 || network.head_dim % 2 != 0) fail("head_dim must be even and >= 2");
  if (!levels.empty() && levels.size() != static_cast<std::size_t>(steps)) {
    fail("levels lists " + std::to_string(levels.size()) + " values but steps = " +
         std::to_string(steps));
  }
  if (!latencies.denoise.empty() && latencies.denoise.size() != static_cast<std::size_t>(steps)) {
    fail("stage latencies list " + std::to_string(latencies.denoise.size()) +
         " denoise stages but steps = " + std::to_string(steps));
  }
  try {
    (void)schedule();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

ScheduleMode EngineConfig::schedule_mode() const {
  switch (mode) {
    case EngineMode::kSequential: return ScheduleMode::kSequential;
    case EngineMode::kCleanKv: return ScheduleMode::kCleanKv;
    case EngineMode::kTpp: return ScheduleMode::kTpp;
    case EngineMode::kSimulate: return simulate_mode;
  }
  return ScheduleMode::kTpp;
}

StageLatencies EngineConfig::effective_latencies() const {
  if (latencies.denoise.empty()) {
    StageLatencies s = StageLatencies::uniform(steps, 1.0);
    s.broadcast = latencies.broadcast;
    return s;
  }
  return latencies;
}

TimestepSchedule EngineConfig::schedule() const {
  return levels.empty() ? TimestepSchedule::uniform(steps) : TimestepSchedule::from_levels(levels);
}

DenoiserConfig EngineConfig::network_config() const {
  DenoiserConfig c = network;
  c.latent_dim = latent_dim;
  return c;
}

namespace detail {

RolloutModel::RolloutModel(const EngineConfig& config)
    : config_(config),
      schedule_(config.schedule()),
      weights_(DenoiserWeights::build(config.network_config(), config.weight_seed)),
      vae_(config.weight_seed, config.latent_dim, config.pixel_dim, config.upsample),
      conditions_(Conditions::synthetic(config.cond_seed, static_cast<std::size_t>(config.blocks),
                                        config.network.audio_dim, config.network.prompt_dim,
                                        config.latent_dim)) {}

namespace {

LatentBlock gaussian_block(std::uint64_t seed, std::int64_t key, std::int64_t block_index,
                           std::size_t frames, std::size_t dim) {
  Prng prng(seed, static_cast<std::uint64_t>(key));
  LatentBlock b;
  b.block_index = block_index;
  for (std::size_t f = 0; f < frames; ++f) b.frames.push_back({gaussian(prng, dim)});
  return b;
}

}  // namespace

LatentBlock RolloutModel::initial_noise(std::int64_t block) const {
  return gaussian_block(config_.noise_seed, block, block, config_.frames_per_block,
                        config_.latent_dim);
}

LatentBlock RolloutModel::oracle_target(std::int64_t block) const {
  const std::int64_t key = config_.constant_target ? 0 : block;
  return gaussian_block(config_.target_seed, key, block, config_.frames_per_block,
                        config_.latent_dim);
}

RopePositions RolloutModel::positions(std::int64_t block, const SinkSlot& sink) const {
  return {block + config_.rope_offset, sink.rope_index(block) + config_.rope_offset};
}

SinkKv RolloutModel::sink_kv(const LatentFrame& sink) const { return make_sink_kv(weights_, sink); }

DenoiseOutput RolloutModel::forward(const LatentBlock& x, int t_index, const RollingKvCache& cache,
                                    const SinkKv& sink, RopePositions pos) const {
  ++forwards_;
  const bool clean_pass = t_index == kCleanTimestep;
  const float level = clean_pass ? 0.0f : schedule_.level(t_index);

  const float sigma = history_sigma(config_.history_mode, config_.history_sigma, level);
  const RollingKvCache* view = &cache;
  std::optional<RollingKvCache> corrupted;
  if (sigma > 0.0f && cache.size() > 0) {
    // Keyed by (block, step) so every engine perturbs identically.
    Prng prng(config_.history_seed,
              static_cast<std::uint64_t>(x.block_index) * static_cast<std::uint64_t>(config_.steps + 1) +
                  static_cast<std::uint64_t>(t_index));
    corrupted = corrupt_history(cache, sigma, prng);
    view = &*corrupted;
  }

  if (config_.denoiser == DenoiserKind::kOracle) {
    // The clean pass only needs kv; any positive level yields the same kv.
    return oracle_denoise(weights_, x, clean_pass ? 1.0f : level, oracle_target(x.block_index),
                          t_index, pos.current);
  }
  const auto idx = static_cast<std::size_t>(x.block_index);
  const Vec& audio = idx < conditions_.audio.size() ? conditions_.audio[idx] : Vec{};
  return denoise_block(weights_, x, StepInput{t_index, level}, view->view(), sink, audio,
                       conditions_.prompt, pos);
}

KvEntry RolloutModel::step(LatentBlock& x, int t_index, const RollingKvCache& cache,
                           const SinkKv& sink, RopePositions pos) const {
  DenoiseOutput out = forward(x, t_index, cache, sink, pos);
  x = flow_step(x, out.velocity, schedule_.dt(t_index));
  return std::move(out.kv);
}

SimulationResult simulate_schedule(const EngineConfig& config, ScheduleMode mode) {
  SimulationConfig sc;
  sc.mode = mode;
  sc.latencies = config.effective_latencies();
  sc.blocks = config.blocks;
  sc.frames_per_block = config.frames_per_block * config.upsample;
  sc.arrival_offset = config.arrival_offset;
  return simulate(sc);
}

void finish_metrics(RolloutResult& result, const RolloutModel& model) {
  const auto& cfg = model.config();
  auto& m = result.metrics;
  m.nfe = result.nfe;
  const std::size_t total_frames = result.frames.size();
  const FpsReport fps = compute_fps(result.timeline, total_frames);
  m.fps = fps.whole_run;
  m.steady_fps = fps.steady_state;
  m.ttff = compute_ttff(cfg.arrival_offset, result.timeline);
  const int stages = stage_count(cfg.schedule_mode(), cfg.steps);
  m.utilization = stage_utilization(result.timeline, stages);
  m.steady_utilization = steady_utilization(result.timeline, stages);
  m.drift = drift_metric(result.frames, model.vae().decode_frame(result.final_sink, 0));
}

}  // namespace detail

RolloutResult run_engine(const EngineConfig& config) {
  switch (config.mode) {
    case EngineMode::kSequential: return run_sequential(config);
    case EngineMode::kCleanKv: return run_clean_kv(config);
    case EngineMode::kTpp: return run_tpp(config);
    case EngineMode::kSimulate: {
      config.validate();
      const SimulationResult sim = detail::simulate_schedule(config, config.simulate_mode);
      RolloutResult r;
      r.timeline = sim.timeline;
      r.nfe = 0;
      r.metrics.fps = sim.fps.whole_run;
      r.metrics.steady_fps = sim.fps.steady_state;
      r.metrics.ttff = sim.ttff;
      r.metrics.utilization = sim.utilization;
      r.metrics.steady_utilization = sim.steady_utilization;
      return r;
    }
  }
  throw ConfigError("unknown engine mode");
}

std::int64_t count_nfe(const RolloutResult& result) { return result.nfe; }

}  // namespace livepipe
