#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "livepipe/config.hpp"
#include "livepipe/engine.hpp"

namespace livepipe {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitInvariantViolation = 3;
inline constexpr int kExitDigestMismatch = 4;

// Latent dump layout, all little-endian:
//   bytes 0..3   magic "LPLD"
//   bytes 4..15  uint32 D, F, M
//   then M * F * D float32 values, block-major, frame-major.
inline constexpr char kLatentDumpMagic[4] = {'L', 'P', 'L', 'D'};

std::string latent_dump_bytes(const std::vector<LatentBlock>& latents);
std::vector<LatentBlock> parse_latent_dump(std::string_view bytes);
void write_latent_dump(const std::filesystem::path& path, const std::vector<LatentBlock>& latents);
std::vector<LatentBlock> read_latent_dump(const std::filesystem::path& path);

// FNV-1a 64 digests, printed as 16 hex digits.
std::uint64_t fnv1a64(std::string_view bytes);
std::string latent_digest(const std::vector<LatentBlock>& latents);
std::string frames_digest(const std::vector<VideoFrame>& frames);

struct VerifyReport {
  std::string sequential_latents;
  std::string tpp_latents;
  std::string sequential_frames;
  std::string tpp_frames;
  bool equal() const {
    return sequential_latents == tpp_latents && sequential_frames == tpp_frames;
  }
};

// Runs the same config through run_sequential and run_tpp.
VerifyReport verify_equivalence(EngineConfig config);

struct ScenarioOverrides {
  std::optional<EngineMode> mode;
  std::optional<std::uint64_t> seed;  // replaces the noise seed
  std::size_t max_workers = 0;
};

struct ScenarioOutcome {
  MetricsBundle metrics;
  int exit_code = kExitOk;
  std::vector<std::string> summary;  // human-readable lines for stdout
};

// Runs one scenario and writes its artifacts into out_dir:
//   run              timeline.csv, metrics.json, latents.bin (optional)
//   equivalence_grid grid.csv, one row per cell with both digests
//   clean_kv_vs_tpp  timeline_<mode>.csv, metrics_<mode>.json, comparison.json
// Config and invariant errors propagate as exceptions.
ScenarioOutcome run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir,
                             const ScenarioOverrides& overrides = {});

// Reads LIVE_PIPE_THREADS; 0 when unset.
std::size_t worker_cap_from_env();

}  // namespace livepipe
