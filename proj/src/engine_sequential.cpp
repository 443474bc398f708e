#include <algorithm>

#include "engine_internal.hpp"

namespace livepipe {

RolloutResult run_sequential(const EngineConfig& config) {
  config.validate();
  const detail::RolloutModel model(config);
  const int steps = config.steps;

  // caches[j - 1] serves step j.
  std::vector<RollingKvCache> caches;
  for (int j = 1; j <= steps; ++j) caches.emplace_back(j, config.cache_length);

  SinkSlot sink(model.conditions().reference, config.sink_delta);
  SinkKv sink_kv = model.sink_kv(sink.content());

  RolloutResult result;
  for (std::int64_t i = 0; i < config.blocks; ++i) {
    LatentBlock x = model.initial_noise(i);
    const RopePositions pos = model.positions(i, sink);
    result.sink_trace.push_back(sink.content());
    for (int j = steps; j >= 1; --j) {
      auto& cache = caches[static_cast<std::size_t>(j - 1)];
      KvEntry kv = model.step(x, j, cache, sink_kv, pos);
      cache.push(std::move(kv));
      result.max_cache_size = std::max(result.max_cache_size, cache.size());
    }
    auto frames = model.vae().decode(x);
    result.frames.insert(result.frames.end(), frames.begin(), frames.end());
    if (i == 0) {
      sink.aas_update(model.vae(), x);
      sink_kv = model.sink_kv(sink.content());
      ++result.aas_updates;
    }
    result.latents.push_back(std::move(x));
  }

  result.nfe = model.forward_count();
  result.final_sink = sink.content();
  result.timeline = detail::simulate_schedule(config, ScheduleMode::kSequential).timeline;
  detail::finish_metrics(result, model);
  return result;
}

}  // namespace livepipe
