#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "livepipe/numerics.hpp"

namespace livepipe {

struct LatentFrame {
  Vec values;

  std::size_t dim() const { return values.dim(); }
  bool operator==(const LatentFrame&) const = default;
};

// F consecutive latent frames denoised jointly; the unit of autoregression
// and of pipeline messaging.
struct LatentBlock {
  std::vector<LatentFrame> frames;
  std::int64_t block_index = 0;

  std::size_t frame_count() const { return frames.size(); }
  bool operator==(const LatentBlock&) const = default;
};

struct VideoFrame {
  Vec pixels;
  bool operator==(const VideoFrame&) const = default;
};

// Noise levels s_T > ... > s_1 for a T-step sampler. Step j (1-based,
// executed from T down to 1) starts at level(j) and moves by dt(j).
class TimestepSchedule {
 public:
  // s_j = j / T, dt = -1 / T.
  static TimestepSchedule uniform(int steps);
  // levels[0] is s_T and must be 1; strictly decreasing, all in (0, 1].
  static TimestepSchedule from_levels(std::vector<float> levels);

  int steps() const { return static_cast<int>(levels_.size()); }
  float level(int step) const;
  float dt(int step) const;
  // Descending s_T..s_1.
  const std::vector<float>& levels() const { return levels_; }

 private:
  std::vector<float> levels_;
  std::vector<float> dts_;  // dts_[T - j] is dt of step j
};

// Per-run conditioning: one audio embedding per block, a prompt embedding
// shared by every block, and the reference latent that seeds the sink.
struct Conditions {
  std::vector<Vec> audio;
  Vec prompt;
  LatentFrame reference;

  static Conditions synthetic(std::uint64_t seed, std::size_t blocks, std::size_t audio_dim,
                              std::size_t prompt_dim, std::size_t latent_dim);
};

// (1 - s) * x0 + s * xT
LatentFrame interpolate(const LatentFrame& x0, const LatentFrame& xT, float s);
// xT - x0
Vec true_velocity(const LatentFrame& x0, const LatentFrame& xT);
// x + v * dt per frame.
LatentBlock flow_step(const LatentBlock& x, const std::vector<Vec>& velocity, float dt);

// Stand-in for the video autoencoder: fixed seeded linear maps. Latent
// frame f decodes to `upsample` pixel frames, sub-frame u through its own
// P x D matrix. The encoder is the least-squares left inverse of sub-frame
// 0's decoder, so encode(decode(z)[0]) == z up to rounding.
class ToyVae {
 public:
  ToyVae(std::uint64_t seed, std::size_t latent_dim, std::size_t pixel_dim, std::size_t upsample);

  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t pixel_dim() const { return pixel_dim_; }
  std::size_t upsample() const { return upsample_; }

  LatentFrame encode(const VideoFrame& frame) const;
  std::vector<VideoFrame> decode(const LatentBlock& block) const;
  VideoFrame decode_frame(const LatentFrame& latent, std::size_t sub_frame) const;

 private:
  std::size_t latent_dim_;
  std::size_t pixel_dim_;
  std::size_t upsample_;
  std::vector<Mat> decoders_;  // upsample_ of P x D
  Mat encoder_;                // D x P
};

// Convenience wrappers matching the free-function vocabulary used elsewhere.
inline LatentFrame toy_encode(const ToyVae& vae, const VideoFrame& frame) { return vae.encode(frame); }
inline std::vector<VideoFrame> toy_decode(const ToyVae& vae, const LatentBlock& block) {
  return vae.decode(block);
}

}  // namespace livepipe
