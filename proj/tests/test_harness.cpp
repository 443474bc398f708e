#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "livepipe/config.hpp"
#include "livepipe/errors.hpp"
#include "livepipe/scenario.hpp"

using namespace livepipe;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("livepipe_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + LIVEPIPE_CLI + " " + args + " > /dev/null 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string scenario(const std::string& name) { return std::string(LIVEPIPE_SCENARIOS) + "/" + name + ".conf"; }

}  // namespace

TEST_CASE("config parsing") {
  const Scenario sc = parse_scenario(
      "# comment\n[scenario]\nname = x\n\n[engine]\nmode = tpp  # trailing\nsteps = 2\nblocks = 5\n"
      "[simulate]\nstage_latencies = 0.1, 0.2, 0.3\n");
  CHECK(sc.name == "x");
  CHECK(sc.engine.mode == EngineMode::kTpp);
  CHECK(sc.engine.steps == 2);
  CHECK(sc.engine.blocks == 5);
  CHECK(sc.engine.latencies.denoise == std::vector<double>{0.1, 0.2});
  CHECK(sc.engine.latencies.decode == 0.3);

  const auto error_of = [](const std::string& text) {
    try {
      parse_scenario(text, "f.conf");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(error_of("[engine]\nsteps = 4\nbogus = 1\n").rfind("f.conf:3:", 0) == 0);
  CHECK(error_of("[engine]\nsteps = four\n").rfind("f.conf:2:", 0) == 0);
  CHECK(error_of("steps = 4\n").rfind("f.conf:1:", 0) == 0);
  CHECK(error_of("[engine\n").rfind("f.conf:1:", 0) == 0);
  CHECK(error_of("[engine]\nsteps 4\n").rfind("f.conf:2:", 0) == 0);
  CHECK_FALSE(error_of("[engine]\nsteps = 4\n[simulate]\nstage_latencies = 1, 1\n").empty());
}

TEST_CASE("latent dump") {
  EngineConfig c;
  c.blocks = 3;
  const auto r = run_sequential(c);
  const std::string bytes = latent_dump_bytes(r.latents);
  CHECK(bytes.substr(0, 4) == "LPLD");
  CHECK(bytes.size() == 16 + 4 * 16 * 3 * 3);
  CHECK(parse_latent_dump(bytes) == r.latents);
  CHECK_THROWS_AS(parse_latent_dump(bytes.substr(0, 20)), ConfigError);
  CHECK(latent_digest(r.latents).size() == 16);
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
}

TEST_CASE("shipped scenarios") {
  SUBCASE("table3_fit") {
    const auto dir = scratch("table3");
    const Scenario sc = load_scenario(scenario("table3_fit"));
    const auto out = run_scenario(sc, dir / "a");
    CHECK(std::abs(out.metrics.steady_fps - 20.88) / 20.88 < 0.01);
    CHECK(std::abs(out.metrics.ttff - 2.89) / 2.89 < 0.05);
    const Timeline tl = load_timeline(dir / "a" / "timeline.csv");
    std::size_t busy = 0;
    for (const auto& e : tl) busy += e.kind == EventKind::kDenoise || e.kind == EventKind::kDecode;
    CHECK(busy == 5 * 64);
    CHECK(read_latent_dump(dir / "a" / "latents.bin").size() == 64);

    run_scenario(sc, dir / "b");
    for (const char* f : {"timeline.csv", "metrics.json", "latents.bin"}) {
      CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    }
    fs::remove_all(dir);
  }
  SUBCASE("equivalence_grid") {
    const auto dir = scratch("grid");
    const auto out = run_scenario(load_scenario(scenario("equivalence_grid")), dir);
    CHECK(out.exit_code == kExitOk);
    const std::string csv = slurp(dir / "grid.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 37);
    CHECK(csv.find(",0\n") == std::string::npos);
    fs::remove_all(dir);
  }
  SUBCASE("clean_kv_vs_tpp") {
    const auto dir = scratch("cmp");
    run_scenario(load_scenario(scenario("clean_kv_vs_tpp")), dir);
    const std::string cmp = slurp(dir / "comparison.json");
    CHECK(cmp.find("\"nfe_per_block\": 5.0") != std::string::npos);
    CHECK(cmp.find("\"nfe_per_block\": 4.0") != std::string::npos);
    CHECK(cmp.find("\"blocks_overlap\": false") != std::string::npos);
    CHECK(cmp.find("\"blocks_overlap\": true") != std::string::npos);
    fs::remove_all(dir);
  }
}

TEST_CASE("cli exit codes") {
  const auto dir = scratch("cli");
  CHECK(cli("run --config " + scenario("clean_kv_vs_tpp") + " --out " + (dir / "ok").string()) == kExitOk);
  CHECK(cli("simulate --latencies 0.5,0.5,0.5 --blocks 4 --mode tpp") == kExitOk);
  CHECK(cli("verify --config " + scenario("table3_fit")) == kExitOk);

  {
    std::ofstream bad(dir / "bad.conf");
    bad << "[engine]\nsteps = nope\n";
  }
  CHECK(cli("run --config " + (dir / "bad.conf").string() + " --out " + dir.string()) == kExitConfigError);
  CHECK(cli("run --config " + (dir / "missing.conf").string()) == kExitConfigError);
  CHECK(cli("simulate --latencies 0.5,-1 --blocks 4") == kExitConfigError);
  CHECK(cli("frobnicate") == kExitConfigError);

  // four denoise stages and a decoder need five workers
  const std::string tpp = "run --config " + scenario("table3_fit") + " --out " + (dir / "cap").string();
  CHECK(cli(tpp, "LIVE_PIPE_THREADS=4") == kExitConfigError);
  CHECK(cli(tpp, "LIVE_PIPE_THREADS=5") == kExitOk);
  CHECK(cli(tpp, "LIVE_PIPE_THREADS=x") == kExitConfigError);
  fs::remove_all(dir);
}
