// livepipe: run scenarios, simulate pipeline schedules, verify TPP against
// the sequential engine.
//
//   livepipe run --config scenarios/table3_fit.conf --out out/
//   livepipe simulate --latencies 0.574,0.574,0.574,0.574,0.574 --blocks 64 --mode tpp
//   livepipe verify --config scenarios/equivalence_grid.conf
//
// Exit codes: 0 ok, 2 config error, 3 invariant violation, 4 digest mismatch.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "livepipe/config.hpp"
#include "livepipe/errors.hpp"
#include "livepipe/scenario.hpp"
#include "livepipe/simulate.hpp"

using namespace livepipe;

namespace {

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const std::string& mode, std::optional<std::uint64_t> seed) {
  const Scenario sc = load_scenario(config_path);
  ScenarioOverrides ov;
  if (!mode.empty()) ov.mode = parse_engine_mode(mode);
  ov.seed = seed;
  ov.max_workers = worker_cap_from_env();
  const ScenarioOutcome outcome = run_scenario(sc, out_dir, ov);
  for (const auto& line : outcome.summary) std::cout << line << "\n";
  return outcome.exit_code;
}

int cmd_simulate(const std::string& latencies, std::int64_t blocks, const std::string& mode,
                 std::size_t frames_per_block, double arrival, const std::string& out_dir) {
  SimulationConfig sc;
  sc.mode = parse_schedule_mode(mode);
  sc.latencies = StageLatencies::from_list(parse_double_list(latencies));
  sc.blocks = blocks;
  sc.frames_per_block = frames_per_block;
  sc.arrival_offset = arrival;
  const SimulationResult r = simulate(sc);
  std::printf("mode=%s stages=%d blocks=%lld\n", std::string(to_string(sc.mode)).c_str(),
              sc.latencies.steps() + 1, static_cast<long long>(blocks));
  std::printf("fps=%.4f steady_fps=%.4f ttff=%.4f\n", r.fps.whole_run, r.fps.steady_state, r.ttff);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    export_timeline(r.timeline, std::filesystem::path(out_dir) / "timeline.csv");
    MetricsBundle m;
    m.fps = r.fps.whole_run;
    m.steady_fps = r.fps.steady_state;
    m.ttff = r.ttff;
    m.utilization = r.utilization;
    m.steady_utilization = r.steady_utilization;
    export_metrics(m, std::filesystem::path(out_dir) / "metrics.json");
  }
  return kExitOk;
}

int cmd_verify(const std::string& config_path) {
  Scenario sc = load_scenario(config_path);
  sc.engine.max_workers = worker_cap_from_env();
  if (sc.kind == ScenarioKind::kEquivalenceGrid) {
    const auto tmp = std::filesystem::temp_directory_path() / "livepipe_verify";
    const ScenarioOutcome outcome = run_scenario(sc, tmp);
    for (const auto& line : outcome.summary) std::cout << line << "\n";
    return outcome.exit_code;
  }
  const VerifyReport rep = verify_equivalence(sc.engine);
  std::cout << "sequential latents=" << rep.sequential_latents << " frames=" << rep.sequential_frames << "\n";
  std::cout << "tpp        latents=" << rep.tpp_latents << " frames=" << rep.tpp_frames << "\n";
  std::cout << (rep.equal() ? "MATCH" : "MISMATCH") << "\n";
  return rep.equal() ? kExitOk : kExitDigestMismatch;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"livepipe: streaming diffusion pipeline engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string mode;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Run a scenario config");
  run->add_option("--config", config_path, "Scenario file")->required();
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--mode", mode, "Override engine mode (sequential|clean_kv|tpp|simulate)");
  run->add_option("--seed", seed, "Override the noise seed");

  std::string latencies;
  std::int64_t blocks = 32;
  std::string sim_mode = "tpp";
  std::size_t frames_per_block = 12;
  double arrival = 0.0;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "Simulate a pipeline schedule on a virtual clock");
  sim->add_option("--latencies", latencies, "Comma-separated seconds: T denoise stages, then the decoder")
      ->required();
  sim->add_option("--blocks", blocks, "Number of blocks");
  sim->add_option("--mode", sim_mode, "sequential|clean_kv|tpp");
  sim->add_option("--frames-per-block", frames_per_block, "Video frames per block (F * r)");
  sim->add_option("--arrival", arrival, "Arrival offset in seconds for TTFF");
  sim->add_option("--out", sim_out, "Write timeline.csv and metrics.json here");

  std::string verify_config;
  auto* verify = app.add_subcommand("verify", "Run tpp and sequential and compare digests");
  verify->add_option("--config", verify_config, "Scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfigError;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir, mode, seed);
    if (*sim) return cmd_simulate(latencies, blocks, sim_mode, frames_per_block, arrival, sim_out);
    if (*verify) return cmd_verify(verify_config);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariantViolation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvariantViolation;
  }
  return kExitOk;
}
