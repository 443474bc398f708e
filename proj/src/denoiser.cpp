#include "livepipe/denoiser.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "livepipe/errors.hpp"

namespace livepipe {

DenoiserWeights DenoiserWeights::build(const DenoiserConfig& config, std::uint64_t seed) {
  if (config.layers == 0 || config.heads == 0 || config.head_dim == 0 || config.head_dim % 2 != 0) {
    throw std::invalid_argument("DenoiserConfig: need layers, heads >= 1 and an even head_dim");
  }
  const std::size_t m = config.model_dim();
  const auto inv_sqrt = [](std::size_t n) { return 1.0f / std::sqrt(static_cast<float>(n)); };

  DenoiserWeights w;
  w.config = config;
  std::uint64_t key = 0;
  const auto next = [&](std::size_t rows, std::size_t cols, float scale) {
    Prng prng(seed, ++key);
    return gaussian_mat(prng, rows, cols, scale);
  };

  w.w_in = next(config.latent_dim, m, inv_sqrt(config.latent_dim));
  w.w_audio = next(config.audio_dim, m, 0.5f * inv_sqrt(config.audio_dim));
  w.w_prompt = next(config.prompt_dim, m, 0.5f * inv_sqrt(config.prompt_dim));
  {
    Prng prng(seed, ++key);
    w.w_time = gaussian(prng, m);
    for (std::size_t i = 0; i < m; ++i) w.w_time[i] *= 0.5f;
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    LayerWeights layer;
    layer.wq = next(m, m, inv_sqrt(m));
    layer.wk = next(m, m, inv_sqrt(m));
    layer.wv = next(m, m, inv_sqrt(m));
    layer.wo = next(m, m, inv_sqrt(m));
    layer.w1 = next(m, config.ffn_dim, inv_sqrt(m));
    layer.w2 = next(config.ffn_dim, m, inv_sqrt(config.ffn_dim));
    w.layers.push_back(std::move(layer));
  }
  w.w_out = next(m, config.latent_dim, inv_sqrt(m));
  return w;
}

namespace {

Mat block_to_mat(const LatentBlock& x, std::size_t latent_dim) {
  Mat out(x.frames.size(), latent_dim);
  for (std::size_t f = 0; f < x.frames.size(); ++f) {
    if (x.frames[f].dim() != latent_dim) {
      throw std::invalid_argument("denoiser: latent frame has dim " +
                                  std::to_string(x.frames[f].dim()) + ", expected " +
                                  std::to_string(latent_dim));
    }
    for (std::size_t i = 0; i < latent_dim; ++i) out(f, i) = x.frames[f].values[i];
  }
  return out;
}

std::vector<Vec> mat_to_frames(const Mat& m) {
  std::vector<Vec> out;
  out.reserve(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    out.emplace_back(std::vector<float>(row.begin(), row.end()));
  }
  return out;
}

void rotate_heads(Mat& m, std::int64_t pos, const DenoiserConfig& cfg) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      rope_rotate_inplace(row.subspan(h * cfg.head_dim, cfg.head_dim), pos, cfg.rope_base);
    }
  }
}

// Conditioning bias shared by every token of the block.
Vec condition_bias(const DenoiserWeights& w, const Vec& audio, const Vec& prompt, float level) {
  const auto& cfg = w.config;
  const std::size_t m = cfg.model_dim();
  const Vec zero_audio(cfg.audio_dim);
  const Vec& a = audio.empty() ? zero_audio : audio;
  if (a.dim() != cfg.audio_dim) throw std::invalid_argument("denoiser: audio dimension mismatch");
  if (prompt.dim() != cfg.prompt_dim) throw std::invalid_argument("denoiser: prompt dimension mismatch");
  Vec bias(m);
  for (std::size_t c = 0; c < m; ++c) {
    float acc_a = 0.0f;
    for (std::size_t k = 0; k < cfg.audio_dim; ++k) acc_a += a[k] * w.w_audio(k, c);
    float acc_p = 0.0f;
    for (std::size_t k = 0; k < cfg.prompt_dim; ++k) acc_p += prompt[k] * w.w_prompt(k, c);
    bias[c] = (acc_a + acc_p) + level * w.w_time[c];
  }
  return bias;
}

void add_row_bias(Mat& h, const Vec& bias) {
  for (std::size_t r = 0; r < h.rows(); ++r) {
    for (std::size_t c = 0; c < h.cols(); ++c) h(r, c) = h(r, c) + bias[c];
  }
}

void add_inplace(Mat& a, const Mat& b) {
  auto as = a.span();
  const auto bs = b.span();
  for (std::size_t i = 0; i < as.size(); ++i) as[i] = as[i] + bs[i];
}

void feed_forward(Mat& h, const LayerWeights& layer) {
  Mat hidden = matmul(h, layer.w1);
  for (float& v : hidden.span()) v = v > 0.0f ? v : 0.0f;
  add_inplace(h, matmul(hidden, layer.w2));
}

// Key/value rows visible to the current block, in attention order.
struct KeyRows {
  std::vector<std::span<const float>> keys;
  std::vector<std::span<const float>> values;
};

Mat attend(const Mat& q, const KeyRows& kv, const DenoiserConfig& cfg) {
  const std::size_t hd = cfg.head_dim;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  Mat out(q.rows(), q.cols());
  Vec scores(kv.keys.size());
  for (std::size_t r = 0; r < q.rows(); ++r) {
    const auto qrow = q.row(r);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const auto qh = qrow.subspan(h * hd, hd);
      for (std::size_t j = 0; j < kv.keys.size(); ++j) {
        scores[j] = dot(qh, kv.keys[j].subspan(h * hd, hd)) * scale;
      }
      const Vec p = softmax(scores);
      auto orow = out.row(r).subspan(h * hd, hd);
      for (std::size_t j = 0; j < kv.values.size(); ++j) {
        const auto vh = kv.values[j].subspan(h * hd, hd);
        for (std::size_t d = 0; d < hd; ++d) orow[d] = orow[d] + p[j] * vh[d];
      }
    }
  }
  return out;
}

void validate_cache(const CacheView& cache, const StepInput& step, const DenoiserWeights& w,
                    std::size_t frames) {
  if (cache.timestep_index != step.t_index && cache.timestep_index != kCleanTimestep) {
    throw InvariantError("denoise_block: cache for timestep " +
                         std::to_string(cache.timestep_index) + " used at timestep " +
                         std::to_string(step.t_index));
  }
  if (cache.entries.size() > cache.capacity) {
    throw InvariantError("denoise_block: cache view holds " + std::to_string(cache.entries.size()) +
                         " entries, capacity " + std::to_string(cache.capacity));
  }
  for (const auto& e : cache.entries) {
    if (e.timestep_index != cache.timestep_index) {
      throw InvariantError("denoise_block: cache mixes timestep " +
                           std::to_string(e.timestep_index) + " into timestep " +
                           std::to_string(cache.timestep_index));
    }
    if (e.keys.size() != w.layers.size() || e.values.size() != w.layers.size()) {
      throw std::invalid_argument("denoise_block: cache entry layer count mismatch");
    }
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      if (e.keys[l].cols() != w.config.model_dim() || e.values[l].rows() != e.keys[l].rows() ||
          e.keys[l].rows() != frames) {
        throw std::invalid_argument("denoise_block: cache entry shape mismatch");
      }
    }
  }
}

}  // namespace

SinkKv make_sink_kv(const DenoiserWeights& weights, const LatentFrame& sink) {
  SinkKv out;
  LatentBlock single{{sink}, 0};
  Mat h = matmul(block_to_mat(single, weights.config.latent_dim), weights.w_in);
  for (const auto& layer : weights.layers) {
    Mat k = matmul(h, layer.wk);
    Mat v = matmul(h, layer.wv);
    // A lone token attends only to itself: softmax weight 1, output v.
    Mat o(1, v.cols());
    for (std::size_t c = 0; c < v.cols(); ++c) o(0, c) = 1.0f * v(0, c);
    add_inplace(h, matmul(o, layer.wo));
    feed_forward(h, layer);
    out.keys.push_back(std::move(k));
    out.values.push_back(std::move(v));
  }
  return out;
}

DenoiseOutput denoise_block(const DenoiserWeights& weights, const LatentBlock& x, StepInput step,
                            const CacheView& cache, const SinkKv& sink, const Vec& audio,
                            const Vec& prompt, RopePositions pos) {
  const auto& cfg = weights.config;
  validate_cache(cache, step, weights, x.frames.size());
  if (sink.keys.size() != weights.layers.size()) {
    throw std::invalid_argument("denoise_block: sink material missing");
  }

  DenoiseOutput out;
  out.kv.block_index = x.block_index;
  out.kv.timestep_index = step.t_index;
  out.kv.rope_index = pos.current;

  Mat h = matmul(block_to_mat(x, cfg.latent_dim), weights.w_in);
  add_row_bias(h, condition_bias(weights, audio, prompt, step.level));

  for (std::size_t l = 0; l < weights.layers.size(); ++l) {
    const auto& layer = weights.layers[l];
    Mat q = matmul(h, layer.wq);
    Mat k = matmul(h, layer.wk);
    Mat v = matmul(h, layer.wv);
    rotate_heads(q, pos.current, cfg);
    rotate_heads(k, pos.current, cfg);

    Mat sink_k = sink.keys[l];
    rotate_heads(sink_k, pos.sink, cfg);

    KeyRows rows;
    rows.keys.push_back(sink_k.row(0));
    rows.values.push_back(sink.values[l].row(0));
    for (const auto& e : cache.entries) {
      for (std::size_t r = 0; r < e.keys[l].rows(); ++r) {
        rows.keys.push_back(e.keys[l].row(r));
        rows.values.push_back(e.values[l].row(r));
      }
    }
    for (std::size_t r = 0; r < k.rows(); ++r) {
      rows.keys.push_back(k.row(r));
      rows.values.push_back(v.row(r));
    }

    add_inplace(h, matmul(attend(q, rows, cfg), layer.wo));
    feed_forward(h, layer);

    out.kv.keys.push_back(std::move(k));
    out.kv.values.push_back(std::move(v));
  }

  out.velocity = mat_to_frames(matmul(h, weights.w_out));
  return out;
}

DenoiseOutput oracle_denoise(const DenoiserWeights& weights, const LatentBlock& x, float s,
                             const LatentBlock& target, int t_index, std::int64_t rope_index) {
  if (s == 0.0f) throw std::invalid_argument("oracle_denoise: s must be > 0");
  if (target.frames.size() != x.frames.size()) {
    throw std::invalid_argument("oracle_denoise: target frame count mismatch");
  }
  DenoiseOutput out;
  for (std::size_t f = 0; f < x.frames.size(); ++f) {
    const auto& xv = x.frames[f].values;
    const auto& tv = target.frames[f].values;
    if (xv.dim() != tv.dim()) throw std::invalid_argument("oracle_denoise: dimension mismatch");
    Vec v(xv.dim());
    for (std::size_t i = 0; i < xv.dim(); ++i) v[i] = (xv[i] - tv[i]) / s;
    out.velocity.push_back(std::move(v));
  }

  out.kv.block_index = x.block_index;
  out.kv.timestep_index = t_index;
  out.kv.rope_index = rope_index;
  const Mat h = matmul(block_to_mat(x, weights.config.latent_dim), weights.w_in);
  for (const auto& layer : weights.layers) {
    Mat k = matmul(h, layer.wk);
    rotate_heads(k, rope_index, weights.config);
    out.kv.keys.push_back(std::move(k));
    out.kv.values.push_back(matmul(h, layer.wv));
  }
  return out;
}

}  // namespace livepipe
