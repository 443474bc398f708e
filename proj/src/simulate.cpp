#include "livepipe/simulate.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <stdexcept>
#include <string>

#include "livepipe/errors.hpp"

namespace livepipe {

std::string_view to_string(ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::kSequential: return "sequential";
    case ScheduleMode::kCleanKv: return "clean_kv";
    case ScheduleMode::kTpp: return "tpp";
  }
  return "unknown";
}

ScheduleMode parse_schedule_mode(std::string_view text) {
  if (text == "sequential") return ScheduleMode::kSequential;
  if (text == "clean_kv") return ScheduleMode::kCleanKv;
  if (text == "tpp") return ScheduleMode::kTpp;
  throw ConfigError("unknown schedule mode '" + std::string(text) + "'");
}

StageLatencies StageLatencies::from_list(std::span<const double> list) {
  if (list.size() < 2) {
    throw ConfigError("stage latencies: need at least one denoise stage and a decoder");
  }
  for (double v : list) {
    if (!(v > 0.0)) throw ConfigError("stage latencies must be positive");
  }
  StageLatencies s;
  s.denoise.assign(list.begin(), list.end() - 1);
  s.decode = list.back();
  s.refresh = s.denoise.front();
  return s;
}

StageLatencies StageLatencies::uniform(int steps, double latency) {
  std::vector<double> list(static_cast<std::size_t>(steps) + 1, latency);
  return from_list(list);
}

int stage_count(ScheduleMode mode, int steps) {
  return mode == ScheduleMode::kCleanKv ? steps + 2 : steps + 1;
}

namespace {

int device_of(ScheduleMode mode, int stage, int steps) {
  switch (mode) {
    case ScheduleMode::kTpp: return stage;
    case ScheduleMode::kSequential: return 0;
    case ScheduleMode::kCleanKv: return stage == decoder_stage(steps) ? 1 : 0;
  }
  return 0;
}

struct Job {
  int stage;
  std::int64_t block;
  double duration;
  EventKind kind;
  std::vector<std::size_t> deps;
  bool emits = true;  // false for the broadcast pseudo-job
  double start = 0.0;
  double end = 0.0;
  bool done = false;
  bool started = false;
};

}  // namespace

Timeline with_gaps(const Timeline& busy, ScheduleMode mode, int steps, double sink_ready) {
  std::map<int, std::vector<const TimelineEvent*>> per_device;
  for (const auto& e : busy) per_device[device_of(mode, e.stage, steps)].push_back(&e);

  Timeline out = busy;
  for (auto& [device, events] : per_device) {
    std::sort(events.begin(), events.end(),
              [](const TimelineEvent* a, const TimelineEvent* b) { return a->start < b->start; });
    double cursor = 0.0;
    for (const auto* e : events) {
      if (e->start < cursor) {
        throw InvariantError("timeline: overlapping work on device " + std::to_string(device));
      }
      if (e->start > cursor) {
        double idle_from = cursor;
        const bool waits_for_sink = e->kind == EventKind::kDenoise && e->block == 1 &&
                                    e->stage < steps && sink_ready > cursor;
        if (waits_for_sink) {
          const double wait_end = std::min(sink_ready, e->start);
          out.push_back({e->stage, e->block, cursor, wait_end, EventKind::kBroadcastWait});
          idle_from = wait_end;
        }
        if (e->start > idle_from) {
          out.push_back({e->stage, e->block, idle_from, e->start, EventKind::kIdle});
        }
      }
      cursor = e->end;
    }
  }
  sort_timeline(out);
  return out;
}

SimulationResult simulate(const SimulationConfig& config) {
  const auto& lat = config.latencies;
  const int steps = lat.steps();
  if (steps < 1) throw ConfigError("simulate: need at least one denoise stage");
  if (config.blocks < 1) throw ConfigError("simulate: blocks must be >= 1");
  for (double v : lat.denoise) {
    if (!(v > 0.0)) throw ConfigError("simulate: latencies must be positive");
  }
  if (!(lat.decode > 0.0) || !(lat.refresh > 0.0) || lat.broadcast < 0.0) {
    throw ConfigError("simulate: latencies must be positive");
  }
  const ScheduleMode mode = config.mode;
  const std::int64_t m = config.blocks;

  // Build the job graph.
  std::vector<Job> jobs;
  const auto denoise_id = [&](int k, std::int64_t i) {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(steps + 2) + static_cast<std::size_t>(k);
  };
  const auto decode_id = [&](std::int64_t i) { return denoise_id(steps, i); };
  const auto refresh_id = [&](std::int64_t i) { return denoise_id(steps + 1, i); };
  jobs.resize(static_cast<std::size_t>(m) * static_cast<std::size_t>(steps + 2));
  const std::size_t broadcast_id = jobs.size();
  jobs.push_back({-1, 0, lat.broadcast, EventKind::kBroadcastWait, {decode_id(0)}, false});

  for (std::int64_t i = 0; i < m; ++i) {
    for (int k = 0; k < steps; ++k) {
      Job j{k, i, lat.denoise[static_cast<std::size_t>(k)], EventKind::kDenoise, {}, true};
      if (k > 0) j.deps.push_back(denoise_id(k - 1, i));
      if (i > 0) {
        switch (mode) {
          case ScheduleMode::kTpp: j.deps.push_back(denoise_id(k, i - 1)); break;
          case ScheduleMode::kSequential:
            if (k == 0) j.deps.push_back(decode_id(i - 1));
            break;
          case ScheduleMode::kCleanKv:
            if (k == 0) j.deps.push_back(refresh_id(i - 1));
            break;
        }
      }
      if (i == 1) j.deps.push_back(broadcast_id);
      jobs[denoise_id(k, i)] = std::move(j);
    }
    Job dec{decoder_stage(steps), i, lat.decode, EventKind::kDecode, {denoise_id(steps - 1, i)}, true};
    if (i > 0) dec.deps.push_back(decode_id(i - 1));
    jobs[decode_id(i)] = std::move(dec);

    if (mode == ScheduleMode::kCleanKv) {
      jobs[refresh_id(i)] = {refresh_stage(steps), i, lat.refresh, EventKind::kDenoise,
                             {denoise_id(steps - 1, i)}, true};
    } else {
      // Placeholder that is never scheduled.
      jobs[refresh_id(i)] = {refresh_stage(steps), i, 0.0, EventKind::kDenoise, {}, false};
      jobs[refresh_id(i)].done = true;
      jobs[refresh_id(i)].started = true;
    }
  }

  // Each device executes its jobs in a fixed program order.
  std::map<int, std::vector<std::size_t>> programs;
  programs[-1].push_back(broadcast_id);
  for (std::int64_t i = 0; i < m; ++i) {
    for (int k = 0; k < steps; ++k) programs[device_of(mode, k, steps)].push_back(denoise_id(k, i));
    if (mode == ScheduleMode::kCleanKv) programs[0].push_back(refresh_id(i));
    programs[device_of(mode, decoder_stage(steps), steps)].push_back(decode_id(i));
  }

  struct DeviceState {
    std::size_t next = 0;
    double free_at = 0.0;
    bool busy = false;
  };
  std::map<int, DeviceState> devices;
  for (const auto& [d, _] : programs) devices[d] = {};

  using Completion = std::pair<double, std::size_t>;  // (time, job)
  std::priority_queue<Completion, std::vector<Completion>, std::greater<>> pending;

  const auto try_start = [&](int device) {
    auto& st = devices[device];
    const auto& program = programs[device];
    if (st.busy || st.next >= program.size()) return;
    Job& job = jobs[program[st.next]];
    double ready = st.free_at;
    for (std::size_t dep : job.deps) {
      if (!jobs[dep].done) return;
      ready = std::max(ready, jobs[dep].end);
    }
    job.started = true;
    job.start = ready;
    job.end = ready + job.duration;
    st.busy = true;
    pending.emplace(job.end, program[st.next]);
  };

  for (const auto& [d, _] : programs) try_start(d);
  while (!pending.empty()) {
    const auto [time, id] = pending.top();
    pending.pop();
    Job& job = jobs[id];
    job.done = true;
    const int device = job.stage < 0 ? -1 : device_of(mode, job.stage, steps);
    auto& st = devices[device];
    st.busy = false;
    st.free_at = time;
    ++st.next;
    for (const auto& [d, _] : programs) try_start(d);
  }
  for (const auto& [d, st] : devices) {
    if (st.next != programs[d].size()) throw InvariantError("simulate: dependency cycle");
  }

  SimulationResult result;
  Timeline busy;
  for (const auto& job : jobs) {
    if (job.emits) busy.push_back({job.stage, job.block, job.start, job.end, job.kind});
  }
  // With a single block nobody waits for the sink.
  result.sink_ready = jobs[broadcast_id].end;
  result.timeline = with_gaps(busy, mode, steps, m > 1 ? result.sink_ready : 0.0);

  const std::size_t total_frames = config.frames_per_block * static_cast<std::size_t>(m);
  result.fps = compute_fps(result.timeline, total_frames);
  result.ttff = compute_ttff(config.arrival_offset, result.timeline);
  const int stages = stage_count(mode, steps);
  result.utilization = stage_utilization(result.timeline, stages);
  result.steady_utilization = steady_utilization(result.timeline, stages);
  return result;
}

}  // namespace livepipe
