#include <algorithm>
#include <exception>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "engine_internal.hpp"
#include "livepipe/errors.hpp"
#include "livepipe/pipeline.hpp"

namespace livepipe {

namespace {

struct StageReport {
  Timeline events;
  std::size_t max_cache_size = 0;
  std::vector<LatentFrame> sink_trace;
};

struct DecoderReport {
  Timeline events;
  std::vector<LatentBlock> latents;
  std::vector<VideoFrame> frames;
  LatentFrame sink;
  int aas_updates = 0;
};

class TppRun {
 public:
  explicit TppRun(const EngineConfig& config)
      : config_(config), model_(config), latencies_(config.effective_latencies()),
        broadcast_(config.steps) {
    for (int k = 0; k < config.steps; ++k) {
      links_.push_back(std::make_unique<StageLink>(k, config.link_capacity));
    }
    stages_.resize(static_cast<std::size_t>(config.steps));
  }

  RolloutResult run() {
    {
      std::vector<std::jthread> workers;
      for (int k = 0; k < config_.steps; ++k) {
        workers.emplace_back([this, k] { guarded([&] { denoise_worker(k); }); });
      }
      workers.emplace_back([this] { guarded([&] { decoder_worker(); }); });
    }
    if (error_) std::rethrow_exception(error_);
    if (broadcast_.remaining() != 0 && config_.blocks > 1) {
      throw InvariantError("tpp: a stage never consumed the sink broadcast");
    }

    RolloutResult result;
    result.latents = std::move(decoder_.latents);
    result.frames = std::move(decoder_.frames);
    result.final_sink = decoder_.sink;
    result.aas_updates = decoder_.aas_updates;
    result.sink_trace = stages_.front().sink_trace;
    result.nfe = model_.forward_count();

    Timeline busy = decoder_.events;
    for (const auto& s : stages_) {
      busy.insert(busy.end(), s.events.begin(), s.events.end());
      result.max_cache_size = std::max(result.max_cache_size, s.max_cache_size);
    }
    result.timeline = with_gaps(busy, ScheduleMode::kTpp, config_.steps,
                                config_.blocks > 1 ? sink_ready_ : 0.0);
    detail::finish_metrics(result, model_);
    return result;
  }

 private:
  template <typename F>
  void guarded(F&& body) {
    try {
      body();
    } catch (...) {
      {
        std::lock_guard lock(error_mu_);
        if (!error_) error_ = std::current_exception();
      }
      abort_all();
    }
  }

  void abort_all() {
    for (auto& link : links_) link->close();
    broadcast_.cancel();
  }

  // Stage k owns step T - k and the cache for that step.
  void denoise_worker(int k) {
    const int step = config_.steps - k;
    const double latency = latencies_.denoise[static_cast<std::size_t>(k)];
    StageReport& report = stages_[static_cast<std::size_t>(k)];

    RollingKvCache cache(step, config_.cache_length);
    SinkSlot sink(model_.conditions().reference, config_.sink_delta);
    SinkKv sink_kv = model_.sink_kv(sink.content());
    double clock = 0.0;
    std::uint64_t sequence = 0;

    for (std::int64_t i = 0; i < config_.blocks; ++i) {
      LatentBlock x;
      double ready = 0.0;
      if (k == 0) {
        x = model_.initial_noise(i);
      } else {
        auto msg = links_[static_cast<std::size_t>(k - 1)]->recv(i);
        if (!msg) return;
        x = std::move(msg->block);
        ready = msg->ready_time;
      }
      if (i == 1) {
        auto received = broadcast_.consume();
        if (!received) return;
        sink.adopt(std::move(received->first));
        sink_kv = model_.sink_kv(sink.content());
        ready = std::max(ready, received->second);
      }
      report.sink_trace.push_back(sink.content());

      const double start = std::max(clock, ready);
      clock = start + latency;
      report.events.push_back({k, i, start, clock, EventKind::kDenoise});

      KvEntry kv = model_.step(x, step, cache, sink_kv, model_.positions(i, sink));
      cache.push(std::move(kv));
      report.max_cache_size = std::max(report.max_cache_size, cache.size());

      StageMessage out{std::move(x), i, k, ++sequence, clock};
      if (!links_[static_cast<std::size_t>(k)]->send(std::move(out))) return;
    }
  }

  void decoder_worker() {
    const int stage = decoder_stage(config_.steps);
    auto& in = *links_.back();
    SinkSlot sink(model_.conditions().reference, config_.sink_delta);
    double clock = 0.0;

    for (std::int64_t i = 0; i < config_.blocks; ++i) {
      auto msg = in.recv(i);
      if (!msg) return;
      const double start = std::max(clock, msg->ready_time);
      clock = start + latencies_.decode;
      decoder_.events.push_back({stage, i, start, clock, EventKind::kDecode});

      auto frames = model_.vae().decode(msg->block);
      decoder_.frames.insert(decoder_.frames.end(), frames.begin(), frames.end());
      if (i == 0) {
        sink.aas_update(model_.vae(), msg->block);
        ++decoder_.aas_updates;
        sink_ready_ = clock + latencies_.broadcast;
        broadcast_.publish(sink.content(), sink_ready_);
      }
      decoder_.latents.push_back(std::move(msg->block));
    }
    decoder_.sink = sink.content();
  }

  EngineConfig config_;
  detail::RolloutModel model_;
  StageLatencies latencies_;
  std::vector<std::unique_ptr<StageLink>> links_;  // links_[k]: stage k -> k + 1
  SinkBroadcast broadcast_;
  std::vector<StageReport> stages_;
  DecoderReport decoder_;
  double sink_ready_ = 0.0;

  std::mutex error_mu_;
  std::exception_ptr error_;
};

}  // namespace

RolloutResult run_tpp(const EngineConfig& config) {
  config.validate();
  const auto workers = static_cast<std::size_t>(config.steps) + 1;
  if (config.max_workers != 0 && config.max_workers < workers) {
    throw ConfigError("tpp needs " + std::to_string(workers) + " workers (T + 1) but only " +
                      std::to_string(config.max_workers) + " are allowed");
  }
  TppRun run(config);
  return run.run();
}

}  // namespace livepipe
