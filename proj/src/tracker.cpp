#include "sanet/tracker.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <spdlog/spdlog.h>

namespace sanet {

std::vector<BBox> sample_candidates(const BBox& prev, const ParticleConfig& cfg, Rng& rng) {
  if (!prev.valid()) throw std::invalid_argument("cannot sample around degenerate box " + to_string(prev));
  if (cfg.count == 0) throw std::invalid_argument("particle count must be at least 1");
  if (cfg.translation_std < 0 || cfg.scale_std < 0) throw std::invalid_argument("sampling stds must be non-negative");
  const double size = 0.5 * (prev.w + prev.h);
  std::vector<BBox> out;
  out.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const double dx = rng.normal() * cfg.translation_std * size;
    const double dy = rng.normal() * cfg.translation_std * size;
    const double factor = std::pow(cfg.scale_base, rng.normal() * cfg.scale_std);
    const double w = std::max(prev.w * factor, std::min(1.0, prev.w));
    const double h = std::max(prev.h * factor, std::min(1.0, prev.h));
    // keep the centre, so zero deviations reproduce `prev` exactly
    out.push_back({prev.x + dx - 0.5 * (w - prev.w), prev.y + dy - 0.5 * (h - prev.h), w, h});
  }
  return out;
}

Tensor<float> crop_for(const Sanet<float>& net, const Image& frame, const BBox& box) {
  return crop_resize_patch<float>(frame, box, net.config.input_size, net.config.input_mean, net.config.input_scale);
}

namespace {

std::vector<Tensor<float>> crops(const Sanet<float>& net, const Image& frame, const std::vector<BBox>& boxes) {
  std::vector<Tensor<float>> out(boxes.size());
  const long n = static_cast<long>(boxes.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) out[i] = crop_for(net, frame, boxes[i]);
  return out;
}

std::vector<Tensor<float>> features_of(const Sanet<float>& net, const Image& frame, const std::vector<BBox>& boxes) {
  if (boxes.empty()) return {};
  return forward_scores(net, crops(net, frame, boxes), 0, true).features;
}

}  // namespace

Selection score_and_select(const Sanet<float>& net, const Image& frame, const std::vector<BBox>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("no candidates to score");
  ScoreResult<float> r = forward_scores(net, crops(net, frame, candidates), 0, true);
  Selection s;
  for (std::size_t i = 1; i < r.positive.size(); ++i) {
    if (r.positive[i] > r.positive[s.index]) s.index = i;
  }
  s.box = candidates[s.index];
  s.score = r.positive[s.index];
  s.scores = std::move(r.positive);
  s.features = std::move(r.features);
  return s;
}

SampleBoxes collect_training_samples(std::size_t frame_width, std::size_t frame_height, const BBox& box,
                                     std::size_t positives, std::size_t negatives, double pos_iou,
                                     double neg_iou, Rng& rng) {
  if (!box.valid()) throw std::invalid_argument("cannot collect samples around degenerate box " + to_string(box));
  const double W = double(frame_width), H = double(frame_height);
  BBox b = box;
  b.w = std::min(b.w, W);
  b.h = std::min(b.h, H);
  b.x = std::clamp(b.x, 0.0, W - b.w);
  b.y = std::clamp(b.y, 0.0, H - b.h);
  const double size = 0.5 * (b.w + b.h);

  auto jitter = [&](double t_std, double s_std) {
    const double f = std::pow(1.05, rng.normal() * s_std);
    const double w = b.w * f, h = b.h * f;
    return BBox{b.cx() + rng.normal() * t_std * size - 0.5 * w, b.cy() + rng.normal() * t_std * size - 0.5 * h, w, h};
  };
  auto anywhere = [&] {
    const double f = std::pow(1.05, rng.normal());
    const double w = std::min(b.w * f, W), h = std::min(b.h * f, H);
    return BBox{rng.uniform(0.0, W - w), rng.uniform(0.0, H - h), w, h};
  };
  auto fill = [&](std::vector<BBox>& out, std::size_t want, auto&& draw, auto&& accept, const char* what) {
    const std::size_t cap = 1000 * std::max<std::size_t>(want, 1);
    std::size_t attempts = 0;
    while (out.size() < want) {
      if (++attempts > cap) {
        throw SamplingError("gave up collecting " + std::string(what) + " around " + to_string(b) + " after " +
                            std::to_string(cap) + " attempts (" + std::to_string(out.size()) + " of " +
                            std::to_string(want) + " found)");
      }
      const BBox c = draw();
      if (accept(iou(c, b))) out.push_back(c);
    }
  };

  SampleBoxes s;
  if (positives > 0) {
    if (pos_iou > 1.0) throw SamplingError("positive IoU threshold above 1 can never be met");
    s.positives.push_back(b);
    fill(s.positives, positives, [&] { return jitter(0.1, 0.5); }, [&](double o) { return o >= pos_iou; },
         "positives");
  }
  const std::size_t near = negatives / 2;
  fill(s.negatives, near, [&] { return jitter(1.0, 1.0); }, [&](double o) { return o <= neg_iou; }, "negatives");
  fill(s.negatives, negatives, anywhere, [&](double o) { return o <= neg_iou; }, "negatives");
  return s;
}

void SampleStore::add(std::size_t frame, std::vector<Tensor<float>> features) {
  for (auto& f : features) entries_.push_back({frame, std::move(f)});
}

void SampleStore::trim(std::size_t current, std::size_t horizon) {
  while (!entries_.empty() && current - entries_.front().frame >= horizon) entries_.pop_front();
}

std::vector<Tensor<float>> SampleStore::within(std::size_t current, std::size_t horizon) const {
  std::vector<Tensor<float>> out;
  for (const auto& e : entries_) {
    if (current - e.frame < horizon) out.push_back(e.features);
  }
  return out;
}

std::size_t SampleStore::oldest_frame() const {
  if (entries_.empty()) throw std::logic_error("sample store is empty");
  return entries_.front().frame;
}

RegressionModel train_bbox_regressor(const std::vector<Tensor<float>>& features, const std::vector<BBox>& boxes,
                                     const BBox& target, double lambda) {
  if (features.empty() || features.size() != boxes.size()) {
    throw std::invalid_argument("regression needs one feature vector per sample box");
  }
  if (lambda < 0) throw std::invalid_argument("ridge lambda must be non-negative");
  const std::size_t n = features.size(), dim = features.front().size();
  if (n < 2 * dim) {
    throw std::invalid_argument("regression needs at least " + std::to_string(2 * dim) + " samples for " +
                                std::to_string(dim) + " features, got " + std::to_string(n));
  }
  Eigen::MatrixXd X(n, dim + 1);
  Eigen::MatrixXd Y(n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != dim) throw ShapeError("regression features differ in size");
    for (std::size_t k = 0; k < dim; ++k) X(i, k) = features[i][k];
    X(i, dim) = 1.0;
    const BBox& b = boxes[i];
    Y(i, 0) = (target.cx() - b.cx()) / b.w;
    Y(i, 1) = (target.cy() - b.cy()) / b.h;
    Y(i, 2) = std::log(target.w / b.w);
    Y(i, 3) = std::log(target.h / b.h);
  }
  Eigen::MatrixXd A = X.transpose() * X;
  // the bias column is not regularised
  for (std::size_t k = 0; k < dim; ++k) A(k, k) += lambda;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) {
    throw std::runtime_error("box regression system is singular (lambda = " + std::to_string(lambda) +
                             "); use a positive lambda");
  }
  const Eigen::MatrixXd Wt = lu.solve(X.transpose() * Y);
  RegressionModel m;
  m.trained = true;
  m.dim = dim;
  m.lambda = lambda;
  m.weights.resize(4 * (dim + 1));
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t k = 0; k <= dim; ++k) m.weights[r * (dim + 1) + k] = Wt(k, r);
  }
  return m;
}

BBox apply_bbox_regressor(const RegressionModel& model, const BBox& box, const Tensor<float>& features) {
  if (!model.trained) throw std::logic_error("box regressor has not been trained");
  if (features.size() != model.dim) {
    throw ShapeError("regressor expects " + std::to_string(model.dim) + " features, got " +
                     std::to_string(features.size()));
  }
  double d[4];
  for (std::size_t r = 0; r < 4; ++r) {
    const double* w = model.weights.data() + r * (model.dim + 1);
    double acc = w[model.dim];
    for (std::size_t k = 0; k < model.dim; ++k) acc += w[k] * features[k];
    d[r] = acc;
  }
  const double w = box.w * std::exp(d[2]), h = box.h * std::exp(d[3]);
  const double cx = box.cx() + d[0] * box.w, cy = box.cy() + d[1] * box.h;
  return {cx - 0.5 * w, cy - 0.5 * h, w, h};
}

const char* to_string(UpdateKind k) {
  switch (k) {
    case UpdateKind::none: return "none";
    case UpdateKind::init: return "init";
    case UpdateKind::short_term: return "short";
    case UpdateKind::long_term: return "long";
    case UpdateKind::skipped: return "skipped";
  }
  return "?";
}

Tracker::Tracker(const Sanet<float>& net, TrackerConfig config)
    : net_(net), config_(config), optimizer_(net_), rng_(config.seed) {
  if (net_.num_branches() != 1) {
    throw std::invalid_argument("tracker needs a specialised network with one branch, got " +
                                std::to_string(net_.num_branches()));
  }
  const auto& u = config_.update;
  if (!(u.theta > 0 && u.theta < 1)) throw std::invalid_argument("theta must lie in (0, 1)");
  if (u.short_horizon == 0 || u.short_horizon > u.long_horizon) {
    throw std::invalid_argument("horizons must satisfy 0 < short <= long");
  }
  if (u.long_period == 0) throw std::invalid_argument("long-term update period must be positive");
  optimizer_.rate_multiplier = u.learning_rate_scale;
}

void Tracker::collect(const Image& frame, const BBox& box, std::size_t positives, std::size_t negatives) {
  const auto& u = config_.update;
  SampleBoxes s = collect_training_samples(width_, height_, box, positives, negatives, u.positive_iou,
                                           u.negative_iou, rng_);
  positives_.add(frame_, features_of(net_, frame, s.positives));
  negatives_.add(frame_, features_of(net_, frame, s.negatives));
}

void Tracker::fine_tune(const std::vector<Tensor<float>>& pos, const std::vector<Tensor<float>>& neg,
                        std::size_t iterations) {
  const auto& u = config_.update;
  for (std::size_t it = 0; it < iterations; ++it) {
    TrainBatch<float> batch;
    batch.domain = 0;
    for (std::size_t i = 0; i < u.batch_positives; ++i) {
      batch.patches.push_back(pos[rng_.below(pos.size())]);
      batch.labels.push_back(1);
    }
    std::vector<std::size_t> order(neg.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t pool_size = std::min(u.batch_negative_pool, neg.size());
    for (std::size_t i = 0; i < pool_size; ++i) std::swap(order[i], order[i + rng_.below(neg.size() - i)]);
    std::vector<Tensor<float>> pool;
    for (std::size_t i = 0; i < pool_size; ++i) pool.push_back(neg[order[i]]);
    for (std::size_t i : mine_hard_negatives(net_, pool, 0, std::min(u.batch_negatives, pool_size), true)) {
      batch.patches.push_back(pool[i]);
      batch.labels.push_back(0);
    }
    backward_and_step(net_, optimizer_, batch, true);
  }
}

UpdateKind Tracker::online_update(double score) {
  const auto& u = config_.update;
  UpdateKind kind = UpdateKind::none;
  std::vector<Tensor<float>> pos, neg;
  if (score < u.theta) {
    kind = UpdateKind::short_term;
    pos = positives_.within(frame_, u.short_horizon);
  } else if (frame_ % u.long_period == 0) {
    kind = UpdateKind::long_term;
    pos = positives_.within(frame_, u.long_horizon);
  } else {
    return kind;
  }
  neg = negatives_.within(frame_, u.short_horizon);
  if (pos.empty() || neg.empty()) {
    const std::string msg = std::string(to_string(kind)) + "-term update at frame " + std::to_string(frame_) +
                            " skipped: " + (pos.empty() ? "no positive" : "no negative") + " samples in range";
    spdlog::warn("{}", msg);
    warnings_.push_back(msg);
    return UpdateKind::skipped;
  }
  fine_tune(pos, neg, u.update_iterations);
  return kind;
}

FrameResult Tracker::initialize(const Image& frame, const BBox& box) {
  if (!box.valid()) throw std::invalid_argument("initial box is degenerate: " + to_string(box));
  const auto& u = config_.update;
  frame_ = 1;
  width_ = frame.width;
  height_ = frame.height;
  box_ = box;
  collect(frame, box, u.init_positives, u.init_negatives);
  fine_tune(positives_.within(frame_, u.long_horizon), negatives_.within(frame_, u.short_horizon),
            u.init_iterations);

  const auto& rc = config_.regression;
  if (rc.enabled) {
    try {
      const SampleBoxes s = collect_training_samples(width_, height_, box, rc.samples, 0, rc.min_iou, 0.0, rng_);
      regressor_ = train_bbox_regressor(features_of(net_, frame, s.positives), s.positives, box, rc.lambda);
    } catch (const std::exception& e) {
      warnings_.push_back(std::string("box regression disabled: ") + e.what());
      spdlog::warn("box regression disabled: {}", e.what());
    }
  }
  FrameResult r;
  r.frame = 0;
  r.selected = r.box = box;
  r.score = score_and_select(net_, frame, {box}).score;
  r.update = UpdateKind::init;
  return r;
}

FrameResult Tracker::track(const Image& frame) {
  if (frame_ == 0) throw std::logic_error("tracker used before initialize()");
  if (frame.width != width_ || frame.height != height_) {
    throw std::invalid_argument("frame " + std::to_string(frame_ + 1) + " changes size");
  }
  ++frame_;
  const auto& u = config_.update;
  const Selection sel = score_and_select(net_, frame, sample_candidates(box_, config_.particles, rng_));
  FrameResult r;
  r.frame = frame_ - 1;
  r.selected = r.box = sel.box;
  r.score = sel.score;
  if (sel.score > u.theta && regressor_.trained) {
    const BBox refined = apply_bbox_regressor(regressor_, sel.box, sel.features[sel.index]);
    if (refined.valid() && std::isfinite(refined.x) && std::isfinite(refined.y)) {
      r.box = refined;
      r.refined = true;
    }
  }
  box_ = r.box;
  if (sel.score >= u.theta) {
    try {
      collect(frame, r.box, u.frame_positives, u.frame_negatives);
    } catch (const SamplingError& e) {
      warnings_.push_back(e.what());
      spdlog::warn("{}", e.what());
    }
  }
  r.update = online_update(sel.score);
  positives_.trim(frame_, u.long_horizon);
  negatives_.trim(frame_, u.short_horizon);
  return r;
}

Trajectory run_tracker(const Sanet<float>& net, const Sequence& seq, const TrackerConfig& config,
                       std::vector<FrameResult>* details) {
  if (seq.size() < 2) throw std::invalid_argument("tracking needs at least 2 frames, got " + std::to_string(seq.size()));
  if (seq.groundtruth.empty()) throw std::invalid_argument("sequence has no initial box");
  Tracker tracker(net, config);
  Trajectory traj;
  auto record = [&](const FrameResult& r) {
    traj.push_back({r.frame, r.box, r.score});
    if (details) details->push_back(r);
  };
  record(tracker.initialize(seq.frames[0], seq.groundtruth[0]));
  for (std::size_t i = 1; i < seq.size(); ++i) record(tracker.track(seq.frames[i]));
  return traj;
}

DomainDataset<float> sequence_domain(const Sanet<float>& net, const Sequence& seq, std::size_t positives_per_frame,
                                     std::size_t negatives_per_frame, Rng& rng, std::size_t stride) {
  if (seq.groundtruth.size() != seq.size()) {
    throw std::invalid_argument("sequence '" + seq.name + "' needs ground truth on every frame for training");
  }
  DomainDataset<float> d;
  for (std::size_t t = 0; t < seq.size(); t += std::max<std::size_t>(1, stride)) {
    const Image& f = seq.frames[t];
    const SampleBoxes s = collect_training_samples(f.width, f.height, seq.groundtruth[t], positives_per_frame,
                                                   negatives_per_frame, 0.7, 0.3, rng);
    for (auto& p : crops(net, f, s.positives)) d.positives.push_back(std::move(p));
    for (auto& n : crops(net, f, s.negatives)) d.negatives.push_back(std::move(n));
  }
  return d;
}

}  // namespace sanet
