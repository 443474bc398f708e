#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "livepipe/denoiser.hpp"
#include "livepipe/latent.hpp"
#include "livepipe/numerics.hpp"

namespace livepipe {

// FIFO of the most recent `capacity` blocks' KV for a single timestep.
// Owned by exactly one worker; never shared across stages.
class RollingKvCache {
 public:
  RollingKvCache(int timestep_index, std::size_t capacity);

  // Evicts the oldest entry when full, then appends.
  void push(KvEntry entry);

  CacheView view() const { return {entries_, timestep_index_, capacity_}; }
  const std::vector<KvEntry>& entries() const { return entries_; }
  std::vector<KvEntry>& mutable_entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  int timestep_index() const { return timestep_index_; }

 private:
  int timestep_index_;
  std::size_t capacity_;
  std::vector<KvEntry> entries_;  // at most capacity_, so erase-at-front is cheap
};

RollingKvCache cache_push(RollingKvCache cache, KvEntry entry);

// Position the sink is rotated to while `current_block` is denoised: always
// `delta` ahead, so the relative offset seen by attention never changes.
std::int64_t rolling_rope_index(std::int64_t current_block, std::int64_t delta);

// encode(decode(block)[0]): the first generated frame, back in latent space.
LatentFrame aas_sink_latent(const ToyVae& vae, const LatentBlock& first_generated);

// The persistent sink. Starts as the reference latent and is replaced
// exactly once, by the model's own first generated frame.
class SinkSlot {
 public:
  explicit SinkSlot(LatentFrame reference, std::int64_t rope_delta = 1);

  const LatentFrame& content() const { return content_; }
  bool locked() const { return locked_; }
  std::int64_t rope_delta() const { return rope_delta_; }
  std::int64_t rope_index(std::int64_t current_block) const {
    return rolling_rope_index(current_block, rope_delta_);
  }

  // Computes the new sink from block 0 and locks the slot.
  void aas_update(const ToyVae& vae, const LatentBlock& first_generated);
  // Installs a sink computed elsewhere (the decoder's broadcast) and locks.
  void adopt(LatentFrame sink);

 private:
  LatentFrame content_;
  bool locked_ = false;
  std::int64_t rope_delta_;
};

enum class HistoryNoiseMode { kFixed, kLevelScaled };

// Effective sigma for a step at noise level `level`.
float history_sigma(HistoryNoiseMode mode, float sigma, float level);

// Copy of `cache` with N(0, sigma^2) added to every cached key and value.
// Sink material lives outside the cache and is never touched.
RollingKvCache corrupt_history(const RollingKvCache& cache, float sigma, Prng& prng);

}  // namespace livepipe
