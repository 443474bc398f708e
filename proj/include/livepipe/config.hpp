#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "livepipe/engine.hpp"

namespace livepipe {

// Sweep used by the equivalence_grid scenario kind. Each seed drives the
// weight, noise and condition seeds of its cell.
struct GridSpec {
  std::vector<int> steps;
  std::vector<std::size_t> cache_lengths;
  std::vector<std::int64_t> blocks;
  std::vector<std::uint64_t> seeds;
};

enum class ScenarioKind { kRun, kEquivalenceGrid, kCleanKvVsTpp };

struct Scenario {
  std::string name = "scenario";
  ScenarioKind kind = ScenarioKind::kRun;
  EngineConfig engine;
  GridSpec grid;
  bool dump_latents = false;
};

// Parses the flat `key = value` format with [section] headers. `#` starts a
// comment. Errors are ConfigErrors prefixed with "<source>:<line>: ".
Scenario parse_scenario(std::string_view text, const std::string& source = "<config>");
Scenario load_scenario(const std::filesystem::path& path);

// Parsers for list-valued settings and CLI flags.
std::vector<double> parse_double_list(std::string_view text);

}  // namespace livepipe
