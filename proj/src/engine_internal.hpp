#pragma once

#include <atomic>
#include <cstdint>

#include "livepipe/engine.hpp"

namespace livepipe::detail {

// Everything a worker needs to run one step, built identically and
// independently from the config by every engine.
class RolloutModel {
 public:
  explicit RolloutModel(const EngineConfig& config);

  const EngineConfig& config() const { return config_; }
  const TimestepSchedule& schedule() const { return schedule_; }
  const ToyVae& vae() const { return vae_; }
  const Conditions& conditions() const { return conditions_; }
  const DenoiserWeights& weights() const { return weights_; }

  // Noise of block i, keyed by (noise_seed, i).
  LatentBlock initial_noise(std::int64_t block) const;
  LatentBlock oracle_target(std::int64_t block) const;

  RopePositions positions(std::int64_t block, const SinkSlot& sink) const;
  SinkKv sink_kv(const LatentFrame& sink) const;

  // One denoiser forward at step t_index (1..T) or the clean pass
  // (kCleanTimestep). Applies history corruption to a copy of the cache.
  DenoiseOutput forward(const LatentBlock& x, int t_index, const RollingKvCache& cache,
                        const SinkKv& sink, RopePositions pos) const;

  // forward + Euler step. Returns the kv to cache.
  KvEntry step(LatentBlock& x, int t_index, const RollingKvCache& cache, const SinkKv& sink,
               RopePositions pos) const;

  std::int64_t forward_count() const { return forwards_.load(); }

 private:
  EngineConfig config_;
  TimestepSchedule schedule_;
  DenoiserWeights weights_;
  ToyVae vae_;
  Conditions conditions_;
  mutable std::atomic<std::int64_t> forwards_{0};
};

// Virtual-clock schedule of this config's rollout under `mode`.
SimulationResult simulate_schedule(const EngineConfig& config, ScheduleMode mode);

// Fills latents-derived metrics (fps, ttff, utilization, drift, nfe).
void finish_metrics(RolloutResult& result, const RolloutModel& model);

}  // namespace livepipe::detail
