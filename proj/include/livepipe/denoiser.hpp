#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "livepipe/latent.hpp"
#include "livepipe/numerics.hpp"

namespace livepipe {

// Timestep index used for KV produced by the extra clean pass of the
// clean-KV baseline. Regular denoising steps are numbered 1..T.
inline constexpr int kCleanTimestep = 0;

struct DenoiserConfig {
  std::size_t latent_dim = 16;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t head_dim = 8;
  std::size_t ffn_dim = 32;
  std::size_t audio_dim = 8;
  std::size_t prompt_dim = 8;
  double rope_base = 10000.0;

  std::size_t model_dim() const { return heads * head_dim; }
};

struct LayerWeights {
  Mat wq, wk, wv, wo;  // model x model
  Mat w1;              // model x ffn
  Mat w2;              // ffn x model
};

struct DenoiserWeights {
  DenoiserConfig config;
  Mat w_in;       // latent x model
  Mat w_audio;    // audio x model
  Mat w_prompt;   // prompt x model
  Vec w_time;     // model
  std::vector<LayerWeights> layers;
  Mat w_out;      // model x latent

  static DenoiserWeights build(const DenoiserConfig& config, std::uint64_t seed);
};

// Keys and values of one block at one denoising step. Keys are stored
// already rotated at rope_index.
struct KvEntry {
  std::int64_t block_index = 0;
  int timestep_index = 1;
  std::int64_t rope_index = 0;
  std::vector<Mat> keys;    // per layer, F x model
  std::vector<Mat> values;  // per layer, F x model

  bool operator==(const KvEntry&) const = default;
};

// Sink material: one token per layer, keys left unrotated so the caller can
// place the sink at any position on every call.
struct SinkKv {
  std::vector<Mat> keys;    // per layer, 1 x model
  std::vector<Mat> values;  // per layer, 1 x model
};

SinkKv make_sink_kv(const DenoiserWeights& weights, const LatentFrame& sink);

// Ordered historical entries a step may attend to. Every entry must carry
// `timestep_index`, and that index must be the step's own (or the clean
// index for the clean-KV baseline).
struct CacheView {
  std::span<const KvEntry> entries;
  int timestep_index = 1;
  std::size_t capacity = 0;
};

struct StepInput {
  int t_index = 1;     // 1..T, or kCleanTimestep
  float level = 1.0f;  // s_t of this step (0 for the clean pass)
};

struct RopePositions {
  std::int64_t current = 0;
  std::int64_t sink = 1;
};

struct DenoiseOutput {
  std::vector<Vec> velocity;  // one per frame
  KvEntry kv;
};

// One forward pass of the block-causal velocity model: full attention
// inside the block, plus attention to the sink (rotated at pos.sink) and to
// each cached block at its stored position. Pure.
DenoiseOutput denoise_block(const DenoiserWeights& weights, const LatentBlock& x, StepInput step,
                            const CacheView& cache, const SinkKv& sink, const Vec& audio,
                            const Vec& prompt, RopePositions pos);

// Analytic stand-in for a perfectly trained model: velocity (x - target) / s.
// The returned entry holds layer projections of x so caches still fill.
DenoiseOutput oracle_denoise(const DenoiserWeights& weights, const LatentBlock& x, float s,
                             const LatentBlock& target, int t_index, std::int64_t rope_index);

// Inputs of one block at one step, as seen when that block was current.
struct HistoryBlock {
  LatentBlock latent;
  Vec audio;
  LatentFrame sink;
  std::int64_t rope_index = 0;
  std::int64_t sink_rope_index = 1;
};

// Test oracle. Recomputes every block's forward pass from scratch over the
// full history as one masked sequence: block b sees its own sink token and
// blocks [b - window, b]. Returns per-block velocities.
std::vector<std::vector<Vec>> attention_bruteforce(const DenoiserWeights& weights,
                                                   std::span<const HistoryBlock> history,
                                                   StepInput step, const Vec& prompt,
                                                   std::size_t window);

}  // namespace livepipe
