#include "sanet/trajectory.hpp"

#include <cmath>
#include <cstdio>
#include "json.hpp"
#include <sstream>

#include "sanet/image.hpp"

namespace sanet {

Trajectory trajectory_from_boxes(const std::vector<BBox>& boxes) {
  Trajectory t;
  for (std::size_t i = 0; i < boxes.size(); ++i) t.push_back({i, boxes[i], 0.0});
  return t;
}

std::string trajectory_csv(const Trajectory& t) {
  std::string out = "frame,x,y,w,h,score\n";
  char line[160];
  for (const auto& r : t) {
    std::snprintf(line, sizeof line, "%zu,%.2f,%.2f,%.2f,%.2f,%.4f\n", r.frame, r.box.x, r.box.y, r.box.w, r.box.h,
                  r.score);
    out += line;
  }
  return out;
}

Trajectory parse_trajectory_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  Trajectory t;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("frame", 0) == 0) continue;
    TrajectoryRecord r;
    int used = 0;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf%n", &r.frame, &r.box.x, &r.box.y, &r.box.w, &r.box.h,
                    &r.score, &used) != 6 ||
        static_cast<std::size_t>(used) != line.size()) {
      throw FormatError("trajectory line " + std::to_string(lineno) + ": expected frame,x,y,w,h,score");
    }
    if (!t.empty() && r.frame <= t.back().frame) {
      throw FormatError("trajectory line " + std::to_string(lineno) + ": frame indices must increase");
    }
    t.push_back(r);
  }
  return t;
}

std::string trajectory_json(const Trajectory& t, std::uint64_t seed, const std::string& config_hash) {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  auto& frames = j["frames"] = nlohmann::ordered_json::array();
  auto round_to = [](double v, double scale) { return std::round(v * scale) / scale; };
  for (const auto& r : t) {
    frames.push_back({{"frame", r.frame},
                      {"x", round_to(r.box.x, 100)},
                      {"y", round_to(r.box.y, 100)},
                      {"w", round_to(r.box.w, 100)},
                      {"h", round_to(r.box.h, 100)},
                      {"score", round_to(r.score, 10000)}});
  }
  return j.dump(2) + "\n";
}

}  // namespace sanet
