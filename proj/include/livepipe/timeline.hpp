#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "livepipe/latent.hpp"

namespace livepipe {

enum class EventKind { kDenoise, kDecode, kIdle, kBroadcastWait };

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view text);

// Stage ids: 0..T-1 are denoise steps (stage k runs step T - k), T is the
// decoder, T + 1 is the clean-KV refresh pass when present. Times are
// seconds since pipeline initialization.
struct TimelineEvent {
  int stage = 0;
  std::int64_t block = 0;
  double start = 0.0;
  double end = 0.0;
  EventKind kind = EventKind::kDenoise;

  double duration() const { return end - start; }
  bool operator==(const TimelineEvent&) const = default;
};

using Timeline = std::vector<TimelineEvent>;

// Orders by (stage, start, kind) so exports are independent of the order in
// which concurrent workers reported their events.
void sort_timeline(Timeline& timeline);

// First block counted as steady state: block 0 fills the pipeline and block
// 1 carries the secondary fill after the sink broadcast.
inline constexpr std::int64_t kSteadyFirstBlock = 2;

struct FpsReport {
  double whole_run = 0.0;     // total_frames / last decode end
  double steady_state = 0.0;  // frames per block / steady decode period
};

FpsReport compute_fps(const Timeline& timeline, std::size_t total_frames);
double compute_ttff(double arrival_offset, const Timeline& timeline);

// Busy (denoise + decode) fraction of [0, last event end] per stage.
std::vector<double> stage_utilization(const Timeline& timeline, int stage_count);
// Same, restricted to the window where every stage is past block
// kSteadyFirstBlock and none has finished its last block. Empty when the run
// is too short to have such a window.
std::vector<double> steady_utilization(const Timeline& timeline, int stage_count);

// Per-frame cosine similarity against the decoded sink. nullopt marks a
// zero-norm frame, for which the similarity is undefined.
std::vector<std::optional<double>> drift_metric(const std::vector<VideoFrame>& frames,
                                                const VideoFrame& sink_frame);

struct MetricsBundle {
  double fps = 0.0;
  double steady_fps = 0.0;
  double ttff = 0.0;
  std::int64_t nfe = 0;
  std::vector<double> utilization;
  std::vector<double> steady_utilization;
  std::vector<std::optional<double>> drift;
};

std::string timeline_to_csv(const Timeline& timeline);
Timeline timeline_from_csv(std::string_view text);
void export_timeline(const Timeline& timeline, const std::filesystem::path& path);
Timeline load_timeline(const std::filesystem::path& path);

std::string metrics_to_json(const MetricsBundle& metrics);
void export_metrics(const MetricsBundle& metrics, const std::filesystem::path& path);

}  // namespace livepipe
