#include "livepipe/latent.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace livepipe {

TimestepSchedule TimestepSchedule::uniform(int steps) {
  if (steps < 1) throw std::invalid_argument("TimestepSchedule: steps must be >= 1");
  TimestepSchedule s;
  const float dt = -1.0f / static_cast<float>(steps);
  for (int j = steps; j >= 1; --j) {
    s.levels_.push_back(static_cast<float>(j) / static_cast<float>(steps));
    s.dts_.push_back(dt);
  }
  return s;
}

TimestepSchedule TimestepSchedule::from_levels(std::vector<float> levels) {
  if (levels.empty()) throw std::invalid_argument("TimestepSchedule: no levels");
  if (levels.front() != 1.0f) {
    throw std::invalid_argument("TimestepSchedule: first level must be 1");
  }
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0f && levels[i] <= 1.0f)) {
      throw std::invalid_argument("TimestepSchedule: level out of (0, 1]");
    }
    if (i > 0 && !(levels[i] < levels[i - 1])) {
      throw std::invalid_argument("TimestepSchedule: levels must be strictly decreasing");
    }
  }
  TimestepSchedule s;
  s.levels_ = std::move(levels);
  for (std::size_t i = 0; i < s.levels_.size(); ++i) {
    const float next = i + 1 < s.levels_.size() ? s.levels_[i + 1] : 0.0f;
    s.dts_.push_back(next - s.levels_[i]);
  }
  return s;
}

float TimestepSchedule::level(int step) const {
  if (step < 1 || step > steps()) {
    throw std::out_of_range("TimestepSchedule: step " + std::to_string(step));
  }
  return levels_[static_cast<std::size_t>(steps() - step)];
}

float TimestepSchedule::dt(int step) const {
  if (step < 1 || step > steps()) {
    throw std::out_of_range("TimestepSchedule: step " + std::to_string(step));
  }
  return dts_[static_cast<std::size_t>(steps() - step)];
}

Conditions Conditions::synthetic(std::uint64_t seed, std::size_t blocks, std::size_t audio_dim,
                                 std::size_t prompt_dim, std::size_t latent_dim) {
  Conditions c;
  c.audio.reserve(blocks);
  for (std::size_t i = 0; i < blocks; ++i) {
    Prng prng(seed, 0x1000 + i);
    c.audio.push_back(gaussian(prng, audio_dim));
  }
  Prng prompt_prng(seed, 1);
  c.prompt = gaussian(prompt_prng, prompt_dim);
  Prng ref_prng(seed, 2);
  c.reference.values = gaussian(ref_prng, latent_dim);
  return c;
}

LatentFrame interpolate(const LatentFrame& x0, const LatentFrame& xT, float s) {
  if (!(s >= 0.0f && s <= 1.0f)) throw std::invalid_argument("interpolate: s out of [0, 1]");
  if (x0.dim() != xT.dim()) throw std::invalid_argument("interpolate: dimension mismatch");
  LatentFrame out{Vec(x0.dim())};
  for (std::size_t i = 0; i < x0.dim(); ++i) {
    out.values[i] = (1.0f - s) * x0.values[i] + s * xT.values[i];
  }
  return out;
}

Vec true_velocity(const LatentFrame& x0, const LatentFrame& xT) {
  if (x0.dim() != xT.dim()) throw std::invalid_argument("true_velocity: dimension mismatch");
  Vec out(x0.dim());
  for (std::size_t i = 0; i < x0.dim(); ++i) out[i] = xT.values[i] - x0.values[i];
  return out;
}

LatentBlock flow_step(const LatentBlock& x, const std::vector<Vec>& velocity, float dt) {
  if (velocity.size() != x.frames.size()) {
    throw std::invalid_argument("flow_step: velocity frame count mismatch");
  }
  LatentBlock out = x;
  for (std::size_t f = 0; f < x.frames.size(); ++f) {
    auto& vals = out.frames[f].values;
    if (velocity[f].dim() != vals.dim()) {
      throw std::invalid_argument("flow_step: velocity dimension mismatch");
    }
    for (std::size_t i = 0; i < vals.dim(); ++i) vals[i] = vals[i] + velocity[f][i] * dt;
  }
  return out;
}

ToyVae::ToyVae(std::uint64_t seed, std::size_t latent_dim, std::size_t pixel_dim,
               std::size_t upsample)
    : latent_dim_(latent_dim), pixel_dim_(pixel_dim), upsample_(upsample) {
  if (latent_dim == 0 || pixel_dim < latent_dim || upsample == 0) {
    throw std::invalid_argument("ToyVae: need 0 < latent_dim <= pixel_dim and upsample >= 1");
  }
  const float scale = 1.0f / std::sqrt(static_cast<float>(latent_dim));
  for (std::size_t u = 0; u < upsample; ++u) {
    Prng prng(seed, 0x5AE0 + u);
    decoders_.push_back(gaussian_mat(prng, pixel_dim, latent_dim, scale));
  }

  // Left pseudo-inverse of the sub-frame-0 decoder: (A^T A)^-1 A^T.
  const Mat& a = decoders_.front();
  Eigen::MatrixXd ad(static_cast<Eigen::Index>(pixel_dim), static_cast<Eigen::Index>(latent_dim));
  for (std::size_t r = 0; r < pixel_dim; ++r) {
    for (std::size_t c = 0; c < latent_dim; ++c) {
      ad(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a(r, c);
    }
  }
  const Eigen::MatrixXd pinv = (ad.transpose() * ad).ldlt().solve(ad.transpose());
  encoder_ = Mat(latent_dim, pixel_dim);
  for (std::size_t r = 0; r < latent_dim; ++r) {
    for (std::size_t c = 0; c < pixel_dim; ++c) {
      encoder_(r, c) = static_cast<float>(pinv(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
  }
}

namespace {

Vec apply(const Mat& m, const Vec& x) {
  Vec out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    float acc = 0.0f;
    for (std::size_t c = 0; c < m.cols(); ++c) acc += m(r, c) * x[c];
    out[r] = acc;
  }
  return out;
}

}  // namespace

LatentFrame ToyVae::encode(const VideoFrame& frame) const {
  if (frame.pixels.dim() != pixel_dim_) throw std::invalid_argument("toy_encode: dimension mismatch");
  return LatentFrame{apply(encoder_, frame.pixels)};
}

VideoFrame ToyVae::decode_frame(const LatentFrame& latent, std::size_t sub_frame) const {
  if (latent.dim() != latent_dim_) throw std::invalid_argument("toy_decode: dimension mismatch");
  return VideoFrame{apply(decoders_.at(sub_frame), latent.values)};
}

std::vector<VideoFrame> ToyVae::decode(const LatentBlock& block) const {
  std::vector<VideoFrame> out;
  out.reserve(block.frames.size() * upsample_);
  for (const auto& frame : block.frames) {
    for (std::size_t u = 0; u < upsample_; ++u) out.push_back(decode_frame(frame, u));
  }
  return out;
}

}  // namespace livepipe
