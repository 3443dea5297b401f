#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sanet/bbox.hpp"

namespace sanet {

struct TrajectoryRecord {
  std::size_t frame = 0;  // 0-based
  BBox box;
  double score = 0;  // p(O); the first frame reports the score of the given box
};

using Trajectory = std::vector<TrajectoryRecord>;

Trajectory trajectory_from_boxes(const std::vector<BBox>& boxes);

// frame,x,y,w,h,score with 2 and 4 decimals, 0-based frames and boxes.
std::string trajectory_csv(const Trajectory& t);
Trajectory parse_trajectory_csv(const std::string& text);

// {"seed", "config_hash", "frames": [{frame, x, y, w, h, score}]}
std::string trajectory_json(const Trajectory& t, std::uint64_t seed, const std::string& config_hash);

}  // namespace sanet
