#include "livepipe/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "livepipe/errors.hpp"

namespace livepipe {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view text) {
  text = trim(text);
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("invalid number '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("invalid boolean '" + std::string(text) + "'");
}

template <typename T>
std::vector<T> parse_list(std::string_view text) {
  std::vector<T> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto item = text.substr(pos, comma == std::string_view::npos ? text.npos : comma - pos);
    out.push_back(parse_number<T>(item));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <typename T>
T positive(T v, const char* what) {
  if (!(v > 0)) throw ConfigError(std::string(what) + " must be positive");
  return v;
}

}  // namespace

std::vector<double> parse_double_list(std::string_view text) { return parse_list<double>(text); }

Scenario parse_scenario(std::string_view text, const std::string& source) {
  Scenario sc;
  EngineConfig& e = sc.engine;
  std::optional<std::vector<double>> stage_latencies;
  std::optional<double> refresh_latency;
  double broadcast_latency = 0.0;

  using Setter = std::function<void(std::string_view)>;
  const std::map<std::string, Setter, std::less<>> setters = {
      {"scenario.name", [&](auto v) { sc.name = std::string(v); }},
      {"scenario.kind",
       [&](auto v) {
         if (v == "run") sc.kind = ScenarioKind::kRun;
         else if (v == "equivalence_grid") sc.kind = ScenarioKind::kEquivalenceGrid;
         else if (v == "clean_kv_vs_tpp") sc.kind = ScenarioKind::kCleanKvVsTpp;
         else throw ConfigError("unknown scenario kind '" + std::string(v) + "'");
       }},

      {"engine.mode", [&](auto v) { e.mode = parse_engine_mode(v); }},
      {"engine.steps", [&](auto v) { e.steps = parse_number<int>(v); }},
      {"engine.blocks", [&](auto v) { e.blocks = parse_number<std::int64_t>(v); }},
      {"engine.frames_per_block", [&](auto v) { e.frames_per_block = parse_number<std::size_t>(v); }},
      {"engine.latent_dim", [&](auto v) { e.latent_dim = parse_number<std::size_t>(v); }},
      {"engine.pixel_dim", [&](auto v) { e.pixel_dim = parse_number<std::size_t>(v); }},
      {"engine.upsample", [&](auto v) { e.upsample = parse_number<std::size_t>(v); }},
      {"engine.noise_seed", [&](auto v) { e.noise_seed = parse_number<std::uint64_t>(v); }},
      {"engine.cond_seed", [&](auto v) { e.cond_seed = parse_number<std::uint64_t>(v); }},
      {"engine.link_capacity", [&](auto v) { e.link_capacity = parse_number<std::size_t>(v); }},
      {"engine.rope_offset", [&](auto v) { e.rope_offset = parse_number<std::int64_t>(v); }},
      {"engine.levels", [&](auto v) {
         e.levels.clear();
         for (double d : parse_list<double>(v)) e.levels.push_back(static_cast<float>(d));
       }},

      {"denoiser.kind", [&](auto v) { e.denoiser = parse_denoiser_kind(v); }},
      {"denoiser.weight_seed", [&](auto v) { e.weight_seed = parse_number<std::uint64_t>(v); }},
      {"denoiser.target_seed", [&](auto v) { e.target_seed = parse_number<std::uint64_t>(v); }},
      {"denoiser.constant_target", [&](auto v) { e.constant_target = parse_bool(v); }},
      {"denoiser.layers", [&](auto v) { e.network.layers = parse_number<std::size_t>(v); }},
      {"denoiser.heads", [&](auto v) { e.network.heads = parse_number<std::size_t>(v); }},
      {"denoiser.head_dim", [&](auto v) { e.network.head_dim = parse_number<std::size_t>(v); }},
      {"denoiser.ffn_dim", [&](auto v) { e.network.ffn_dim = positive(parse_number<std::size_t>(v), "ffn_dim"); }},
      {"denoiser.audio_dim", [&](auto v) { e.network.audio_dim = parse_number<std::size_t>(v); }},
      {"denoiser.prompt_dim", [&](auto v) { e.network.prompt_dim = parse_number<std::size_t>(v); }},
      {"denoiser.rope_base", [&](auto v) { e.network.rope_base = positive(parse_number<double>(v), "rope_base"); }},

      {"cache.length", [&](auto v) { e.cache_length = parse_number<std::size_t>(v); }},
      {"cache.sink_delta", [&](auto v) { e.sink_delta = parse_number<std::int64_t>(v); }},
      {"cache.history_sigma", [&](auto v) { e.history_sigma = parse_number<float>(v); }},
      {"cache.history_seed", [&](auto v) { e.history_seed = parse_number<std::uint64_t>(v); }},
      {"cache.history_mode",
       [&](auto v) {
         if (v == "fixed") e.history_mode = HistoryNoiseMode::kFixed;
         else if (v == "level_scaled") e.history_mode = HistoryNoiseMode::kLevelScaled;
         else throw ConfigError("unknown history_mode '" + std::string(v) + "'");
       }},

      {"simulate.mode", [&](auto v) { e.simulate_mode = parse_schedule_mode(v); }},
      {"simulate.stage_latencies", [&](auto v) { stage_latencies = parse_list<double>(v); }},
      {"simulate.refresh_latency", [&](auto v) { refresh_latency = positive(parse_number<double>(v), "refresh_latency"); }},
      {"simulate.broadcast_latency", [&](auto v) { broadcast_latency = parse_number<double>(v); }},
      {"simulate.arrival_offset", [&](auto v) { e.arrival_offset = parse_number<double>(v); }},

      {"output.dump_latents", [&](auto v) { sc.dump_latents = parse_bool(v); }},

      {"grid.steps", [&](auto v) { sc.grid.steps = parse_list<int>(v); }},
      {"grid.cache_lengths", [&](auto v) { sc.grid.cache_lengths = parse_list<std::size_t>(v); }},
      {"grid.blocks", [&](auto v) { sc.grid.blocks = parse_list<std::int64_t>(v); }},
      {"grid.seeds", [&](auto v) { sc.grid.seeds = parse_list<std::uint64_t>(v); }},
  };

  std::istringstream in{std::string(text)};
  std::string raw;
  std::string section;
  int line_no = 0;
  const auto fail = [&](const std::string& what) {
    throw ConfigError(source + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail("expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (section.empty()) fail("key '" + std::string(key) + "' outside any [section]");
    const std::string full = section + "." + std::string(key);
    const auto it = setters.find(full);
    if (it == setters.end()) fail("unknown setting '" + full + "'");
    try {
      it->second(value);
    } catch (const ConfigError& err) {
      fail(full + ": " + err.what());
    }
  }

  line_no = 0;
  try {
    if (stage_latencies) e.latencies = StageLatencies::from_list(*stage_latencies);
    if (refresh_latency) {
      if (e.latencies.denoise.empty()) e.latencies = StageLatencies::uniform(e.steps, 1.0);
      e.latencies.refresh = *refresh_latency;
    }
    if (broadcast_latency < 0.0) throw ConfigError("broadcast_latency must be >= 0");
    e.latencies.broadcast = broadcast_latency;
    if (sc.kind == ScenarioKind::kEquivalenceGrid &&
        (sc.grid.steps.empty() || sc.grid.cache_lengths.empty() || sc.grid.blocks.empty() ||
         sc.grid.seeds.empty())) {
      throw ConfigError("equivalence_grid needs [grid] steps, cache_lengths, blocks and seeds");
    }
    if (sc.kind != ScenarioKind::kEquivalenceGrid) e.validate();
  } catch (const ConfigError& err) {
    throw ConfigError(source + ": " + err.what());
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.string());
}

}  // namespace livepipe
