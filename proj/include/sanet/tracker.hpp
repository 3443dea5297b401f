#pragma once

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "sanet/bbox.hpp"
#include "sanet/model.hpp"
#include "sanet/rng.hpp"
#include "sanet/sequence.hpp"
#include "sanet/trajectory.hpp"

namespace sanet {

class SamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ParticleConfig {
  std::size_t count = 300;
  double translation_std = 0.3;  // times mean(w, h)
  double scale_std = 0.5;        // in units of log(scale_base)
  double scale_base = 1.05;
};

struct UpdateConfig {
  double theta = 0.5;
  std::size_t short_horizon = 20;
  std::size_t long_horizon = 100;
  std::size_t long_period = 10;
  double positive_iou = 0.7;
  double negative_iou = 0.3;

  std::size_t init_positives = 100;
  std::size_t init_negatives = 400;
  std::size_t init_iterations = 30;
  std::size_t frame_positives = 20;
  std::size_t frame_negatives = 60;
  std::size_t update_iterations = 10;

  // Online minibatch: P positives, M negatives mined from a pool of B.
  std::size_t batch_positives = 16;
  std::size_t batch_negative_pool = 128;
  std::size_t batch_negatives = 48;
  double learning_rate_scale = 1.0;  // multiplies the network's FC rate
};

struct RegressionConfig {
  bool enabled = true;
  std::size_t samples = 300;
  double min_iou = 0.6;
  double lambda = 1.0;
};

struct TrackerConfig {
  ParticleConfig particles;
  UpdateConfig update;
  RegressionConfig regression;
  std::uint64_t seed = 0;
};

// Gaussian translation plus a log-normal scale change per candidate.
std::vector<BBox> sample_candidates(const BBox& prev, const ParticleConfig& cfg, Rng& rng);

struct Selection {
  std::size_t index = 0;
  BBox box;
  double score = 0;
  std::vector<float> scores;
  std::vector<Tensor<float>> features;
};

Tensor<float> crop_for(const Sanet<float>& net, const Image& frame, const BBox& box);

// Picks the candidate with the highest positive score; ties go to the
// lowest index.
Selection score_and_select(const Sanet<float>& net, const Image& frame, const std::vector<BBox>& candidates);

struct SampleBoxes {
  std::vector<BBox> positives;
  std::vector<BBox> negatives;
};

// Positives (IoU ≥ pos_iou) jittered around the box, which comes first;
// negatives (IoU ≤ neg_iou) half near the box and half anywhere in the
// frame. Throws SamplingError after 1000 attempts per requested sample.
SampleBoxes collect_training_samples(std::size_t frame_width, std::size_t frame_height, const BBox& box,
                                     std::size_t positives, std::size_t negatives, double pos_iou,
                                     double neg_iou, Rng& rng);

// Samples tagged with the 1-based frame they were collected in.
class SampleStore {
 public:
  struct Entry {
    std::size_t frame;
    Tensor<float> features;
  };

  void add(std::size_t frame, std::vector<Tensor<float>> features);
  // Drops every entry with current − frame ≥ horizon.
  void trim(std::size_t current, std::size_t horizon);
  std::vector<Tensor<float>> within(std::size_t current, std::size_t horizon) const;
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t oldest_frame() const;
  const std::deque<Entry>& entries() const { return entries_; }

 private:
  std::deque<Entry> entries_;
};

// Ridge regression from features (plus a bias term) to the normalised
// offsets (dx/w, dy/h, log dw, log dh) of the ground truth.
struct RegressionModel {
  bool trained = false;
  std::size_t dim = 0;
  double lambda = 0;
  std::vector<double> weights;  // 4 rows of dim + 1, bias last
};

RegressionModel train_bbox_regressor(const std::vector<Tensor<float>>& features, const std::vector<BBox>& boxes,
                                     const BBox& target, double lambda);
BBox apply_bbox_regressor(const RegressionModel& model, const BBox& box, const Tensor<float>& features);

enum class UpdateKind { none, init, short_term, long_term, skipped };
const char* to_string(UpdateKind k);

struct FrameResult {
  std::size_t frame = 0;  // 0-based
  BBox selected;          // highest-scoring candidate
  BBox box;               // after refinement
  double score = 0;
  bool refined = false;
  UpdateKind update = UpdateKind::none;
};

class Tracker {
 public:
  // `net` must have exactly one branch (see specialize_for_tracking).
  Tracker(const Sanet<float>& net, TrackerConfig config);

  FrameResult initialize(const Image& frame, const BBox& box);
  FrameResult track(const Image& frame);

  const Sanet<float>& net() const { return net_; }
  const SampleStore& positives() const { return positives_; }
  const SampleStore& negatives() const { return negatives_; }
  const RegressionModel& regressor() const { return regressor_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  std::size_t frame_count() const { return frame_; }

  // θ-gated choice: short-term below θ, long-term on the period otherwise.
  UpdateKind online_update(double score);

 private:
  void collect(const Image& frame, const BBox& box, std::size_t positives, std::size_t negatives);
  void fine_tune(const std::vector<Tensor<float>>& pos, const std::vector<Tensor<float>>& neg,
                 std::size_t iterations);

  Sanet<float> net_;
  TrackerConfig config_;
  Optimizer<float> optimizer_;
  Rng rng_;
  BBox box_;
  std::size_t frame_ = 0;  // frames seen, 1-based after initialize
  std::size_t width_ = 0, height_ = 0;
  SampleStore positives_;
  SampleStore negatives_;
  RegressionModel regressor_;
  std::vector<std::string> warnings_;
};

Trajectory run_tracker(const Sanet<float>& net, const Sequence& seq, const TrackerConfig& config,
                       std::vector<FrameResult>* details = nullptr);

// Training samples for one pretraining domain: positives and negatives
// cropped around the ground truth of every `stride`-th frame, labelled by
// IoU ≥ 0.7 and ≤ 0.3.
DomainDataset<float> sequence_domain(const Sanet<float>& net, const Sequence& seq, std::size_t positives_per_frame,
                                     std::size_t negatives_per_frame, Rng& rng, std::size_t stride = 1);

}  // namespace sanet
