#include <cmath>
#include <limits>
#include <stdexcept>

#include "livepipe/denoiser.hpp"

namespace livepipe {

namespace {

struct Token {
  std::size_t block;
  bool is_sink;
  std::int64_t position;
};

}  // namespace

std::vector<std::vector<Vec>> attention_bruteforce(const DenoiserWeights& weights,
                                                   std::span<const HistoryBlock> history,
                                                   StepInput step, const Vec& prompt,
                                                   std::size_t window) {
  const auto& cfg = weights.config;
  const std::size_t m = cfg.model_dim();
  const std::size_t hd = cfg.head_dim;
  const std::size_t n_blocks = history.size();
  if (n_blocks == 0) return {};
  const std::size_t frames = history.front().latent.frames.size();

  // Layout: one sink token per block, then every block's frames in order.
  std::vector<Token> tokens;
  for (std::size_t b = 0; b < n_blocks; ++b) tokens.push_back({b, true, history[b].sink_rope_index});
  for (std::size_t b = 0; b < n_blocks; ++b) {
    for (std::size_t f = 0; f < frames; ++f) tokens.push_back({b, false, history[b].rope_index});
  }
  const std::size_t n = tokens.size();

  const auto visible = [&](std::size_t i, std::size_t j) {
    const Token& q = tokens[i];
    const Token& k = tokens[j];
    if (q.is_sink) return i == j;
    if (k.is_sink) return k.block == q.block;
    return k.block <= q.block && k.block + window >= q.block;
  };

  Mat input(n, cfg.latent_dim);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    for (std::size_t i = 0; i < cfg.latent_dim; ++i) input(b, i) = history[b].sink.values[i];
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t i = 0; i < cfg.latent_dim; ++i) {
        input(n_blocks + b * frames + f, i) = history[b].latent.frames[f].values[i];
      }
    }
  }
  Mat h = matmul(input, weights.w_in);

  for (std::size_t b = 0; b < n_blocks; ++b) {
    const Vec zero_audio(cfg.audio_dim);
    const Vec& audio = history[b].audio.empty() ? zero_audio : history[b].audio;
    for (std::size_t c = 0; c < m; ++c) {
      float acc_a = 0.0f;
      for (std::size_t k = 0; k < cfg.audio_dim; ++k) acc_a += audio[k] * weights.w_audio(k, c);
      float acc_p = 0.0f;
      for (std::size_t k = 0; k < cfg.prompt_dim; ++k) acc_p += prompt[k] * weights.w_prompt(k, c);
      const float bias = (acc_a + acc_p) + step.level * weights.w_time[c];
      for (std::size_t f = 0; f < frames; ++f) {
        const std::size_t r = n_blocks + b * frames + f;
        h(r, c) = h(r, c) + bias;
      }
    }
  }

  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
  const float neg_inf = -std::numeric_limits<float>::infinity();
  for (const auto& layer : weights.layers) {
    Mat q = matmul(h, layer.wq);
    Mat k = matmul(h, layer.wk);
    const Mat v = matmul(h, layer.wv);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t hh = 0; hh < cfg.heads; ++hh) {
        rope_rotate_inplace(q.row(i).subspan(hh * hd, hd), tokens[i].position, cfg.rope_base);
        rope_rotate_inplace(k.row(i).subspan(hh * hd, hd), tokens[i].position, cfg.rope_base);
      }
    }

    Mat o(n, m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t hh = 0; hh < cfg.heads; ++hh) {
        Vec scores(n);
        for (std::size_t j = 0; j < n; ++j) {
          scores[j] = visible(i, j)
                          ? dot(q.row(i).subspan(hh * hd, hd), k.row(j).subspan(hh * hd, hd)) * scale
                          : neg_inf;
        }
        const Vec p = softmax(scores);
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t d = 0; d < hd; ++d) {
            o(i, hh * hd + d) = o(i, hh * hd + d) + p[j] * v(j, hh * hd + d);
          }
        }
      }
    }

    const Mat proj = matmul(o, layer.wo);
    for (std::size_t i = 0; i < n * m; ++i) h.span()[i] = h.span()[i] + proj.span()[i];
    Mat hidden = matmul(h, layer.w1);
    for (float& x : hidden.span()) x = x > 0.0f ? x : 0.0f;
    const Mat ff = matmul(hidden, layer.w2);
    for (std::size_t i = 0; i < n * m; ++i) h.span()[i] = h.span()[i] + ff.span()[i];
  }

  const Mat out = matmul(h, weights.w_out);
  std::vector<std::vector<Vec>> velocities(n_blocks);
  for (std::size_t b = 0; b < n_blocks; ++b) {
    for (std::size_t f = 0; f < frames; ++f) {
      const auto row = out.row(n_blocks + b * frames + f);
      velocities[b].emplace_back(std::vector<float>(row.begin(), row.end()));
    }
  }
  return velocities;
}

}  // namespace livepipe
