#include "livepipe/kvcache.hpp"

#include <stdexcept>
#include <string>

#include "livepipe/errors.hpp"

namespace livepipe {

RollingKvCache::RollingKvCache(int timestep_index, std::size_t capacity)
    : timestep_index_(timestep_index), capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("RollingKvCache: capacity must be >= 1");
  entries_.reserve(capacity);
}

void RollingKvCache::push(KvEntry entry) {
  if (entry.timestep_index != timestep_index_) {
    throw InvariantError("cache_push: entry for timestep " + std::to_string(entry.timestep_index) +
                         " pushed into cache for timestep " + std::to_string(timestep_index_));
  }
  if (!entries_.empty() && entry.block_index <= entries_.back().block_index) {
    throw InvariantError("cache_push: block " + std::to_string(entry.block_index) +
                         " pushed after block " + std::to_string(entries_.back().block_index));
  }
  if (entries_.size() == capacity_) entries_.erase(entries_.begin());
  entries_.push_back(std::move(entry));
}

RollingKvCache cache_push(RollingKvCache cache, KvEntry entry) {
  cache.push(std::move(entry));
  return cache;
}

std::int64_t rolling_rope_index(std::int64_t current_block, std::int64_t delta) {
  if (delta < 1) throw std::invalid_argument("rolling_rope_index: delta must be >= 1");
  return current_block + delta;
}

LatentFrame aas_sink_latent(const ToyVae& vae, const LatentBlock& first_generated) {
  const auto frames = vae.decode(first_generated);
  if (frames.empty()) throw std::invalid_argument("aas: block decodes to no frames");
  return vae.encode(frames.front());
}

SinkSlot::SinkSlot(LatentFrame reference, std::int64_t rope_delta)
    : content_(std::move(reference)), rope_delta_(rope_delta) {
  if (rope_delta < 1) throw std::invalid_argument("SinkSlot: rope delta must be >= 1");
}

void SinkSlot::aas_update(const ToyVae& vae, const LatentBlock& first_generated) {
  if (locked_) throw InvariantError("aas_update: sink already replaced");
  if (first_generated.block_index != 0) {
    throw InvariantError("aas_update: expected block 0, got block " +
                         std::to_string(first_generated.block_index));
  }
  adopt(aas_sink_latent(vae, first_generated));
}

void SinkSlot::adopt(LatentFrame sink) {
  if (locked_) throw InvariantError("aas_update: sink already replaced");
  if (sink.dim() != content_.dim()) throw std::invalid_argument("aas_update: sink dimension mismatch");
  content_ = std::move(sink);
  locked_ = true;
}

float history_sigma(HistoryNoiseMode mode, float sigma, float level) {
  return mode == HistoryNoiseMode::kLevelScaled ? sigma * level : sigma;
}

RollingKvCache corrupt_history(const RollingKvCache& cache, float sigma, Prng& prng) {
  if (!(sigma >= 0.0f)) throw std::invalid_argument("corrupt_history: sigma must be >= 0");
  RollingKvCache out = cache;
  if (sigma == 0.0f) return out;
  for (auto& entry : out.mutable_entries()) {
    for (auto* mats : {&entry.keys, &entry.values}) {
      for (auto& m : *mats) {
        for (float& x : m.span()) x = x + sigma * static_cast<float>(prng.next_gaussian());
      }
    }
  }
  return out;
}

}  // namespace livepipe
