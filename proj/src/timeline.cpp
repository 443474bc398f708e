#include "livepipe/timeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#include "livepipe/errors.hpp"

namespace livepipe {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kDenoise: return "denoise";
    case EventKind::kDecode: return "decode";
    case EventKind::kIdle: return "idle";
    case EventKind::kBroadcastWait: return "broadcast_wait";
  }
  return "unknown";
}

EventKind parse_event_kind(std::string_view text) {
  if (text == "denoise") return EventKind::kDenoise;
  if (text == "decode") return EventKind::kDecode;
  if (text == "idle") return EventKind::kIdle;
  if (text == "broadcast_wait") return EventKind::kBroadcastWait;
  throw ConfigError("unknown event kind '" + std::string(text) + "'");
}

void sort_timeline(Timeline& timeline) {
  std::sort(timeline.begin(), timeline.end(), [](const TimelineEvent& a, const TimelineEvent& b) {
    return std::tie(a.stage, a.start, a.end, a.kind, a.block) <
           std::tie(b.stage, b.start, b.end, b.kind, b.block);
  });
}

namespace {

bool is_busy(EventKind kind) { return kind == EventKind::kDenoise || kind == EventKind::kDecode; }

std::vector<const TimelineEvent*> decode_events(const Timeline& timeline) {
  std::vector<const TimelineEvent*> out;
  for (const auto& e : timeline) {
    if (e.kind == EventKind::kDecode) out.push_back(&e);
  }
  std::sort(out.begin(), out.end(),
            [](const TimelineEvent* a, const TimelineEvent* b) { return a->block < b->block; });
  return out;
}

}  // namespace

FpsReport compute_fps(const Timeline& timeline, std::size_t total_frames) {
  if (timeline.empty()) throw std::invalid_argument("compute_fps: empty timeline");
  const auto decodes = decode_events(timeline);
  if (decodes.empty()) throw std::invalid_argument("compute_fps: no decode events");

  FpsReport report;
  double last_end = 0.0;
  for (const auto* e : decodes) last_end = std::max(last_end, e->end);
  report.whole_run = static_cast<double>(total_frames) / last_end;

  const std::size_t blocks = decodes.size();
  const auto first_steady = static_cast<std::size_t>(kSteadyFirstBlock);
  if (blocks > first_steady + 1) {
    const double frames_per_block = static_cast<double>(total_frames) / static_cast<double>(blocks);
    const double period = (decodes.back()->end - decodes[first_steady]->end) /
                          static_cast<double>(blocks - 1 - first_steady);
    report.steady_state = frames_per_block / period;
  } else {
    report.steady_state = report.whole_run;
  }
  return report;
}

double compute_ttff(double arrival_offset, const Timeline& timeline) {
  const auto decodes = decode_events(timeline);
  if (decodes.empty() || decodes.front()->block != 0) {
    throw std::invalid_argument("compute_ttff: no decode event for the first block");
  }
  // Time is measured from pipeline initialization, so the decode end of
  // block 0 is its full denoise latency plus its decode latency.
  return arrival_offset + decodes.front()->end;
}

std::vector<double> stage_utilization(const Timeline& timeline, int stage_count) {
  std::vector<double> busy(static_cast<std::size_t>(stage_count), 0.0);
  double span = 0.0;
  for (const auto& e : timeline) span = std::max(span, e.end);
  if (span <= 0.0) return busy;
  for (const auto& e : timeline) {
    if (is_busy(e.kind) && e.stage >= 0 && e.stage < stage_count) {
      busy[static_cast<std::size_t>(e.stage)] += e.duration();
    }
  }
  for (double& b : busy) b /= span;
  return busy;
}

std::vector<double> steady_utilization(const Timeline& timeline, int stage_count) {
  // Per stage: start of its first steady block, end of its last block.
  std::map<int, std::pair<double, double>> bounds;
  for (const auto& e : timeline) {
    if (!is_busy(e.kind) || e.stage < 0 || e.stage >= stage_count) continue;
    auto [it, inserted] = bounds.try_emplace(e.stage, std::numeric_limits<double>::infinity(),
                                             -std::numeric_limits<double>::infinity());
    if (e.block >= kSteadyFirstBlock) it->second.first = std::min(it->second.first, e.start);
    it->second.second = std::max(it->second.second, e.end);
  }
  if (bounds.size() != static_cast<std::size_t>(stage_count)) return {};
  double w0 = -std::numeric_limits<double>::infinity();
  double w1 = std::numeric_limits<double>::infinity();
  for (const auto& [stage, b] : bounds) {
    w0 = std::max(w0, b.first);
    w1 = std::min(w1, b.second);
  }
  if (!(w1 > w0)) return {};

  std::vector<double> busy(static_cast<std::size_t>(stage_count), 0.0);
  for (const auto& e : timeline) {
    if (!is_busy(e.kind) || e.stage < 0 || e.stage >= stage_count) continue;
    const double lo = std::max(e.start, w0);
    const double hi = std::min(e.end, w1);
    if (hi > lo) busy[static_cast<std::size_t>(e.stage)] += hi - lo;
  }
  for (double& b : busy) b /= (w1 - w0);
  return busy;
}

std::vector<std::optional<double>> drift_metric(const std::vector<VideoFrame>& frames,
                                                const VideoFrame& sink_frame) {
  std::vector<std::optional<double>> out;
  out.reserve(frames.size());
  double sink_norm = 0.0;
  for (float x : sink_frame.pixels.span()) sink_norm += static_cast<double>(x) * x;
  sink_norm = std::sqrt(sink_norm);
  for (const auto& f : frames) {
    if (f.pixels.dim() != sink_frame.pixels.dim()) {
      throw std::invalid_argument("drift_metric: frame dimension mismatch");
    }
    double dot = 0.0;
    double norm = 0.0;
    for (std::size_t i = 0; i < f.pixels.dim(); ++i) {
      dot += static_cast<double>(f.pixels[i]) * sink_frame.pixels[i];
      norm += static_cast<double>(f.pixels[i]) * f.pixels[i];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0 || sink_norm == 0.0) {
      out.push_back(std::nullopt);
    } else {
      out.push_back(dot / (norm * sink_norm));
    }
  }
  return out;
}

namespace {

constexpr std::string_view kCsvHeader = "stage,block,start,end,kind";

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string timeline_to_csv(const Timeline& timeline) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& e : timeline) {
    out += std::to_string(e.stage);
    out += ',';
    out += std::to_string(e.block);
    out += ',';
    out += format_double(e.start);
    out += ',';
    out += format_double(e.end);
    out += ',';
    out += to_string(e.kind);
    out += '\n';
  }
  return out;
}

Timeline timeline_from_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw ConfigError("timeline: missing header '" + std::string(kCsvHeader) + "'");
  }
  Timeline out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 5) {
      throw ConfigError("timeline line " + std::to_string(line_no) + ": expected 5 fields");
    }
    try {
      TimelineEvent e;
      e.stage = std::stoi(fields[0]);
      e.block = std::stoll(fields[1]);
      e.start = std::stod(fields[2]);
      e.end = std::stod(fields[3]);
      e.kind = parse_event_kind(fields[4]);
      out.push_back(e);
    } catch (const std::logic_error&) {
      throw ConfigError("timeline line " + std::to_string(line_no) + ": malformed value");
    }
  }
  return out;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
  out << contents;
  if (!out) throw ConfigError("failed writing '" + path.string() + "'");
}

}  // namespace

void export_timeline(const Timeline& timeline, const std::filesystem::path& path) {
  write_file(path, timeline_to_csv(timeline));
}

Timeline load_timeline(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return timeline_from_csv(ss.str());
}

std::string metrics_to_json(const MetricsBundle& m) {
  nlohmann::ordered_json j;
  j["fps"] = m.fps;
  j["steady_fps"] = m.steady_fps;
  j["ttff"] = m.ttff;
  j["nfe"] = m.nfe;
  j["utilization"] = m.utilization;
  j["steady_utilization"] = m.steady_utilization;
  nlohmann::ordered_json drift = nlohmann::ordered_json::array();
  double min_sim = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& d : m.drift) {
    if (d) {
      drift.push_back(*d);
      min_sim = std::min(min_sim, *d);
      sum += *d;
      ++defined;
    } else {
      drift.push_back(nullptr);
    }
  }
  if (defined > 0) {
    j["drift_min"] = min_sim;
    j["drift_mean"] = sum / static_cast<double>(defined);
  } else {
    j["drift_min"] = nullptr;
    j["drift_mean"] = nullptr;
  }
  j["drift"] = std::move(drift);
  return j.dump(2) + "\n";
}

void export_metrics(const MetricsBundle& metrics, const std::filesystem::path& path) {
  write_file(path, metrics_to_json(metrics));
}

}  // namespace livepipe
