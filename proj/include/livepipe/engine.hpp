#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "livepipe/denoiser.hpp"
#include "livepipe/kvcache.hpp"
#include "livepipe/latent.hpp"
#include "livepipe/simulate.hpp"
#include "livepipe/timeline.hpp"

namespace livepipe {

enum class EngineMode { kSequential, kCleanKv, kTpp, kSimulate };
enum class DenoiserKind { kToy, kOracle };

std::string_view to_string(EngineMode mode);
EngineMode parse_engine_mode(std::string_view text);
std::string_view to_string(DenoiserKind kind);
DenoiserKind parse_denoiser_kind(std::string_view text);

struct EngineConfig {
  EngineMode mode = EngineMode::kSequential;
  int steps = 4;                     // T
  std::size_t cache_length = 4;      // L, in blocks
  std::size_t frames_per_block = 3;  // F
  std::size_t latent_dim = 16;       // D
  std::size_t pixel_dim = 32;        // P
  std::size_t upsample = 4;          // r
  std::int64_t sink_delta = 1;       // rolling RoPE offset, in blocks
  std::int64_t blocks = 8;           // M
  std::int64_t rope_offset = 0;      // shifts every position; attention is invariant to it

  std::uint64_t weight_seed = 1;
  std::uint64_t noise_seed = 1;
  std::uint64_t cond_seed = 1;
  std::uint64_t target_seed = 1;

  DenoiserKind denoiser = DenoiserKind::kToy;
  DenoiserConfig network;  // latent_dim is overwritten from the field above
  bool constant_target = false;
  std::vector<float> levels;  // empty: uniform j / T

  float history_sigma = 0.0f;
  HistoryNoiseMode history_mode = HistoryNoiseMode::kFixed;
  std::uint64_t history_seed = 7;

  StageLatencies latencies;  // virtual-clock cost model; empty: 1 s per stage
  ScheduleMode simulate_mode = ScheduleMode::kTpp;  // schedule used by simulate mode
  std::size_t link_capacity = 1;
  std::size_t max_workers = 0;  // 0: unlimited
  double arrival_offset = 0.0;

  // Throws ConfigError on any violated invariant.
  void validate() const;
  ScheduleMode schedule_mode() const;
  StageLatencies effective_latencies() const;
  TimestepSchedule schedule() const;
  DenoiserConfig network_config() const;
};

struct RolloutResult {
  std::vector<LatentBlock> latents;  // after the final step, block order
  std::vector<VideoFrame> frames;    // M * F * r decoded frames
  std::int64_t nfe = 0;
  Timeline timeline;
  MetricsBundle metrics;
  LatentFrame final_sink;
  std::vector<LatentFrame> sink_trace;  // sink content used for each block
  int aas_updates = 0;
  std::size_t max_cache_size = 0;      // largest cache seen by any step
};

// Single worker; step-major inner loop with one rolling cache per timestep.
RolloutResult run_sequential(const EngineConfig& config);
// One unified clean cache refreshed by an extra forward per block.
RolloutResult run_clean_kv(const EngineConfig& config);
// T denoise workers and one decoder worker connected by FIFO links.
RolloutResult run_tpp(const EngineConfig& config);
// Dispatches on config.mode. Simulate mode produces only a timeline.
RolloutResult run_engine(const EngineConfig& config);

std::int64_t count_nfe(const RolloutResult& result);

}  // namespace livepipe
