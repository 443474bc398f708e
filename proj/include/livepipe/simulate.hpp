#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "livepipe/timeline.hpp"

namespace livepipe {

enum class ScheduleMode { kSequential, kCleanKv, kTpp };

std::string_view to_string(ScheduleMode mode);
ScheduleMode parse_schedule_mode(std::string_view text);

// Seconds per unit of work on each virtual device.
struct StageLatencies {
  std::vector<double> denoise;  // one per step, stage order (step T first)
  double decode = 1.0;
  double refresh = 1.0;         // clean-KV extra forward pass
  double broadcast = 0.0;       // decoder -> stages sink fan-out

  // `list` is T denoise latencies followed by the decoder latency. The
  // refresh pass defaults to the first denoise latency.
  static StageLatencies from_list(std::span<const double> list);
  static StageLatencies uniform(int steps, double latency);

  int steps() const { return static_cast<int>(denoise.size()); }
};

// Stage ids used in timelines.
inline int decoder_stage(int steps) { return steps; }
inline int refresh_stage(int steps) { return steps + 1; }
int stage_count(ScheduleMode mode, int steps);

struct SimulationConfig {
  ScheduleMode mode = ScheduleMode::kTpp;
  StageLatencies latencies;
  std::int64_t blocks = 1;
  std::size_t frames_per_block = 12;
  double arrival_offset = 0.0;
};

struct SimulationResult {
  Timeline timeline;
  FpsReport fps;
  double ttff = 0.0;
  double sink_ready = 0.0;  // when every stage holds the AAS sink
  std::vector<double> utilization;
  std::vector<double> steady_utilization;
};

// Discrete-event simulation of one rollout's dependency structure on a
// virtual clock:
//   tpp        one device per stage; (k, i) needs (k, i-1) and (k-1, i)
//   sequential every stage shares one device, blocks strictly in turn
//   clean_kv   denoise steps and the refresh pass share one device, the
//              decoder runs beside it; block i+1 needs block i's refresh
// In every mode the denoise steps of block 1 also wait for the sink
// broadcast that follows the decode of block 0.
SimulationResult simulate(const SimulationConfig& config);

// Completes a timeline of busy events with the idle and broadcast_wait gaps
// on each device. Gaps before a block-1 denoise event are broadcast_wait up
// to `sink_ready` and idle after it.
Timeline with_gaps(const Timeline& busy, ScheduleMode mode, int steps, double sink_ready);

}  // namespace livepipe
