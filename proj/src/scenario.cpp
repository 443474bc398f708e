#include "livepipe/scenario.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "livepipe/errors.hpp"

namespace livepipe {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  out << contents;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

}  // namespace

std::string latent_dump_bytes(const std::vector<LatentBlock>& latents) {
  const std::size_t frames = latents.empty() ? 0 : latents.front().frames.size();
  const std::size_t dim = frames == 0 ? 0 : latents.front().frames.front().dim();
  std::string out(kLatentDumpMagic, sizeof kLatentDumpMagic);
  put_u32(out, static_cast<std::uint32_t>(dim));
  put_u32(out, static_cast<std::uint32_t>(frames));
  put_u32(out, static_cast<std::uint32_t>(latents.size()));
  for (const auto& block : latents) {
    if (block.frames.size() != frames) throw std::invalid_argument("latent dump: ragged blocks");
    for (const auto& f : block.frames) {
      if (f.dim() != dim) throw std::invalid_argument("latent dump: ragged frames");
      for (float x : f.values.span()) put_u32(out, std::bit_cast<std::uint32_t>(x));
    }
  }
  return out;
}

std::vector<LatentBlock> parse_latent_dump(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kLatentDumpMagic, 4) != 0) {
    throw ConfigError("latent dump: bad header");
  }
  const std::size_t dim = get_u32(bytes, 4);
  const std::size_t frames = get_u32(bytes, 8);
  const std::size_t blocks = get_u32(bytes, 12);
  if (bytes.size() != 16 + 4 * dim * frames * blocks) throw ConfigError("latent dump: size mismatch");
  std::vector<LatentBlock> out;
  std::size_t offset = 16;
  for (std::size_t b = 0; b < blocks; ++b) {
    LatentBlock block;
    block.block_index = static_cast<std::int64_t>(b);
    for (std::size_t f = 0; f < frames; ++f) {
      Vec v(dim);
      for (std::size_t i = 0; i < dim; ++i, offset += 4) v[i] = std::bit_cast<float>(get_u32(bytes, offset));
      block.frames.push_back({std::move(v)});
    }
    out.push_back(std::move(block));
  }
  return out;
}

void write_latent_dump(const std::filesystem::path& path, const std::vector<LatentBlock>& latents) {
  write_text(path, latent_dump_bytes(latents));
}

std::vector<LatentBlock> read_latent_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_latent_dump(ss.str());
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string latent_digest(const std::vector<LatentBlock>& latents) {
  return hex64(fnv1a64(latent_dump_bytes(latents)));
}

std::string frames_digest(const std::vector<VideoFrame>& frames) {
  std::string bytes;
  for (const auto& f : frames) {
    for (float x : f.pixels.span()) put_u32(bytes, std::bit_cast<std::uint32_t>(x));
  }
  return hex64(fnv1a64(bytes));
}

VerifyReport verify_equivalence(EngineConfig config) {
  config.mode = EngineMode::kSequential;
  const RolloutResult seq = run_sequential(config);
  config.mode = EngineMode::kTpp;
  const RolloutResult tpp = run_tpp(config);
  return {latent_digest(seq.latents), latent_digest(tpp.latents), frames_digest(seq.frames),
          frames_digest(tpp.frames)};
}

std::size_t worker_cap_from_env() {
  const char* raw = std::getenv("LIVE_PIPE_THREADS");
  if (raw == nullptr || *raw == '\0') return 0;
  std::size_t v = 0;
  const std::string_view text(raw);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || v == 0) {
    throw ConfigError("LIVE_PIPE_THREADS must be a positive integer, got '" + std::string(text) + "'");
  }
  return v;
}

namespace {

std::string format_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

ScenarioOutcome run_single(const Scenario& sc, const EngineConfig& cfg,
                           const std::filesystem::path& out_dir) {
  const RolloutResult r = run_engine(cfg);
  export_timeline(r.timeline, out_dir / "timeline.csv");
  export_metrics(r.metrics, out_dir / "metrics.json");
  if (sc.dump_latents && cfg.mode != EngineMode::kSimulate) {
    write_latent_dump(out_dir / "latents.bin", r.latents);
  }
  ScenarioOutcome out;
  out.metrics = r.metrics;
  out.summary.push_back("scenario " + sc.name + " mode=" + std::string(to_string(cfg.mode)));
  out.summary.push_back("fps=" + format_metric(r.metrics.fps) +
                        " steady_fps=" + format_metric(r.metrics.steady_fps) +
                        " ttff=" + format_metric(r.metrics.ttff) + " nfe=" + std::to_string(r.nfe));
  if (cfg.mode != EngineMode::kSimulate) {
    out.summary.push_back("latents=" + latent_digest(r.latents) + " frames=" + frames_digest(r.frames));
  }
  return out;
}

ScenarioOutcome run_grid(const Scenario& sc, const EngineConfig& base,
                         const std::filesystem::path& out_dir) {
  ScenarioOutcome out;
  std::string csv = "steps,cache_length,blocks,seed,sequential_latents,tpp_latents,sequential_frames,tpp_frames,equal\n";
  int cells = 0;
  int mismatches = 0;
  for (int t : sc.grid.steps) {
    for (std::size_t l : sc.grid.cache_lengths) {
      for (std::int64_t m : sc.grid.blocks) {
        for (std::uint64_t seed : sc.grid.seeds) {
          EngineConfig cfg = base;
          cfg.steps = t;
          cfg.cache_length = l;
          cfg.blocks = m;
          cfg.weight_seed = cfg.noise_seed = cfg.cond_seed = seed;
          cfg.latencies = {};
          cfg.levels.clear();
          const VerifyReport rep = verify_equivalence(cfg);
          ++cells;
          if (!rep.equal()) ++mismatches;
          csv += std::to_string(t) + "," + std::to_string(l) + "," + std::to_string(m) + "," +
                 std::to_string(seed) + "," + rep.sequential_latents + "," + rep.tpp_latents + "," +
                 rep.sequential_frames + "," + rep.tpp_frames + "," + (rep.equal() ? "1" : "0") + "\n";
        }
      }
    }
  }
  write_text(out_dir / "grid.csv", csv);
  out.summary.push_back("scenario " + sc.name + ": " + std::to_string(cells) + " cells, " +
                        std::to_string(mismatches) + " digest mismatches");
  if (mismatches > 0) out.exit_code = kExitDigestMismatch;
  return out;
}

bool denoise_overlaps(const Timeline& tl, int steps) {
  // Any two busy denoise events of different blocks sharing time.
  std::vector<const TimelineEvent*> ev;
  for (const auto& e : tl) {
    if (e.kind == EventKind::kDenoise && e.stage != decoder_stage(steps)) ev.push_back(&e);
  }
  for (std::size_t a = 0; a < ev.size(); ++a) {
    for (std::size_t b = a + 1; b < ev.size(); ++b) {
      if (ev[a]->block != ev[b]->block && ev[a]->start < ev[b]->end && ev[b]->start < ev[a]->end) {
        return true;
      }
    }
  }
  return false;
}

ScenarioOutcome run_comparison(const Scenario& sc, const EngineConfig& base,
                               const std::filesystem::path& out_dir) {
  ScenarioOutcome out;
  out.summary.push_back("scenario " + sc.name + ": clean_kv vs tpp");
  nlohmann::ordered_json cmp;
  for (EngineMode mode : {EngineMode::kCleanKv, EngineMode::kTpp}) {
    EngineConfig cfg = base;
    cfg.mode = mode;
    const RolloutResult r = run_engine(cfg);
    const std::string name(to_string(mode));
    export_timeline(r.timeline, out_dir / ("timeline_" + name + ".csv"));
    export_metrics(r.metrics, out_dir / ("metrics_" + name + ".json"));
    const double per_block = static_cast<double>(r.nfe) / static_cast<double>(cfg.blocks);
    const bool overlapped = denoise_overlaps(r.timeline, cfg.steps);
    cmp[name] = {{"nfe", r.nfe},
                 {"nfe_per_block", per_block},
                 {"blocks_overlap", overlapped},
                 {"fps", r.metrics.fps},
                 {"steady_fps", r.metrics.steady_fps},
                 {"ttff", r.metrics.ttff}};
    out.summary.push_back(name + ": nfe=" + std::to_string(r.nfe) + " (" + format_metric(per_block) +
                          " per block) blocks_overlap=" + (overlapped ? "yes" : "no") +
                          " steady_fps=" + format_metric(r.metrics.steady_fps));
    if (mode == EngineMode::kTpp) out.metrics = r.metrics;
  }
  write_text(out_dir / "comparison.json", cmp.dump(2) + "\n");
  return out;
}

}  // namespace

ScenarioOutcome run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir,
                             const ScenarioOverrides& overrides) {
  EngineConfig cfg = scenario.engine;
  if (overrides.mode) cfg.mode = *overrides.mode;
  if (overrides.seed) cfg.noise_seed = *overrides.seed;
  if (overrides.max_workers != 0) cfg.max_workers = overrides.max_workers;

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + out_dir.string() + "'");

  switch (scenario.kind) {
    case ScenarioKind::kRun: return run_single(scenario, cfg, out_dir);
    case ScenarioKind::kEquivalenceGrid: return run_grid(scenario, cfg, out_dir);
    case ScenarioKind::kCleanKvVsTpp: return run_comparison(scenario, cfg, out_dir);
  }
  throw ConfigError("unknown scenario kind");
}

}  // namespace livepipe
