#include "sanet/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace sanet {

namespace {

void check_aligned(const Trajectory& traj, const Trajectory& gt) {
  if (traj.size() != gt.size()) {
    throw std::invalid_argument("trajectory has " + std::to_string(traj.size()) + " frames, ground truth " +
                                std::to_string(gt.size()));
  }
  if (traj.empty()) throw std::invalid_argument("cannot score an empty trajectory");
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (traj[i].frame != gt[i].frame) {
      throw std::invalid_argument("trajectory frame " + std::to_string(traj[i].frame) +
                                  " is paired with ground-truth frame " + std::to_string(gt[i].frame));
    }
  }
}

}  // namespace

PrecisionResult precision_metrics(const Trajectory& traj, const Trajectory& gt) {
  check_aligned(traj, gt);
  std::vector<double> dist(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) dist[i] = center_distance(traj[i].box, gt[i].box);
  PrecisionResult r;
  for (int t = 0; t <= 50; ++t) {
    std::size_t hits = 0;
    for (double d : dist) hits += d <= double(t);
    r.thresholds.push_back(t);
    r.curve.push_back(double(hits) / double(dist.size()));
  }
  r.at_20 = r.curve[20];
  return r;
}

SuccessResult success_metrics(const Trajectory& traj, const Trajectory& gt) {
  check_aligned(traj, gt);
  std::vector<double> overlap(traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) overlap[i] = iou(traj[i].box, gt[i].box);
  SuccessResult r;
  double sum = 0;
  for (int k = 0; k <= 20; ++k) {
    const double u = k / 20.0;
    std::size_t hits = 0;
    for (double o : overlap) hits += o > u;
    r.thresholds.push_back(u);
    r.curve.push_back(double(hits) / double(overlap.size()));
    sum += r.curve.back();
  }
  r.auc = sum / 21.0;
  return r;
}

VotResult vot_style_eval(const TrackerRunner& runner, const Sequence& seq, const VotConfig& cfg) {
  if (seq.groundtruth.size() != seq.size()) {
    throw std::invalid_argument("VOT-style evaluation needs ground truth on every frame");
  }
  VotResult r;
  double overlap_sum = 0;
  std::size_t t = 0;
  while (t < seq.size()) {
    runner.init(seq.frames[t], seq.groundtruth[t]);
    r.init_frames.push_back(t);
    const std::size_t start = t;
    bool failed = false;
    for (++t; t < seq.size(); ++t) {
      const double o = iou(runner.update(seq.frames[t]), seq.groundtruth[t]);
      if (o <= 0.0) {
        ++r.failures;
        r.failure_frames.push_back(t);
        failed = true;
        break;
      }
      if (t - start > cfg.burn_in) {
        overlap_sum += o;
        ++r.scored_frames;
      }
    }
    if (!failed) break;
    t += cfg.skip + 1;
  }
  r.accuracy = r.scored_frames ? overlap_sum / double(r.scored_frames) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

MetricReport evaluate_trajectory(const Trajectory& traj, const Trajectory& gt, const std::string& name) {
  MetricReport r;
  r.sequence = name;
  r.frames = traj.size();
  r.precision = precision_metrics(traj, gt);
  r.success = success_metrics(traj, gt);
  return r;
}

std::string metric_report_json(const MetricReport& r) {
  nlohmann::ordered_json j;
  j["sequence"] = r.sequence;
  j["frames"] = r.frames;
  j["precision"] = {{"thresholds", r.precision.thresholds}, {"curve", r.precision.curve}, {"at_20", r.precision.at_20}};
  j["success"] = {{"thresholds", r.success.thresholds}, {"curve", r.success.curve}, {"auc", r.success.auc}};
  if (r.vot) {
    nlohmann::ordered_json v;
    v["failures"] = r.vot->failures;
    v["failure_frames"] = r.vot->failure_frames;
    v["init_frames"] = r.vot->init_frames;
    v["scored_frames"] = r.vot->scored_frames;
    if (std::isnan(r.vot->accuracy)) {
      v["accuracy"] = nullptr;
    } else {
      v["accuracy"] = r.vot->accuracy;
    }
    j["vot"] = v;
  }
  return j.dump(2) + "\n";
}

std::string curve_csv(const std::vector<double>& thresholds, const std::vector<double>& curve) {
  std::string out = "threshold,value\n";
  char line[64];
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    std::snprintf(line, sizeof line, "%g,%.6f\n", thresholds[i], curve[i]);
    out += line;
  }
  return out;
}

}  // namespace sanet
