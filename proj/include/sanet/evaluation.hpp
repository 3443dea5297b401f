#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sanet/bbox.hpp"
#include "sanet/image.hpp"
#include "sanet/sequence.hpp"
#include "sanet/trajectory.hpp"

namespace sanet {

struct PrecisionResult {
  std::vector<double> thresholds;  // 0, 1, …, 50 px
  std::vector<double> curve;       // fraction of frames with centre error ≤ τ
  double at_20 = 0;
};

struct SuccessResult {
  std::vector<double> thresholds;  // 0, 0.05, …, 1
  std::vector<double> curve;       // fraction of frames with IoU > u
  double auc = 0;                  // mean of the curve
};

// Both trajectories must cover the same frames in the same order.
PrecisionResult precision_metrics(const Trajectory& traj, const Trajectory& gt);
SuccessResult success_metrics(const Trajectory& traj, const Trajectory& gt);

struct VotConfig {
  std::size_t skip = 5;      // frames left out after a failure
  std::size_t burn_in = 10;  // frames after each initialisation not counted in accuracy
};

struct VotResult {
  std::size_t failures = 0;
  std::vector<std::size_t> failure_frames;
  std::vector<std::size_t> init_frames;
  std::size_t scored_frames = 0;
  double accuracy = 0;  // mean IoU over scored frames; NaN when none
};

struct TrackerRunner {
  std::function<void(const Image&, const BBox&)> init;
  std::function<BBox(const Image&)> update;
};

// A frame whose box has zero overlap with the ground truth is a failure.
// The tracker is restarted from the ground truth `skip` frames later.
VotResult vot_style_eval(const TrackerRunner& runner, const Sequence& seq, const VotConfig& cfg = {});

struct MetricReport {
  std::string sequence;
  std::size_t frames = 0;
  PrecisionResult precision;
  SuccessResult success;
  std::optional<VotResult> vot;
};

MetricReport evaluate_trajectory(const Trajectory& traj, const Trajectory& gt, const std::string& name = "");
std::string metric_report_json(const MetricReport& r);
// threshold,value
std::string curve_csv(const std::vector<double>& thresholds, const std::vector<double>& curve);

}  // namespace sanet
