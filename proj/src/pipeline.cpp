#include "sanet/pipeline.hpp"

#include <spdlog/spdlog.h>

namespace sanet {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

enum Stream : std::uint64_t { kScenes = 1, kInit, kSamples, kTraining, kSpecialise, kTracker, kEvalScene };

}  // namespace

std::vector<TrainingSequence> synth_training_set(std::uint64_t seed, std::size_t count, std::size_t length) {
  std::vector<TrainingSequence> out;
  const std::uint64_t base = derive_seed(seed, kScenes);
  for (std::size_t k = 0; k < count; ++k) {
    SynthResult r = synth_sequence(SynthSpec::randomized(derive_seed(base, k), length));
    out.push_back({std::move(r.sequence), std::move(r.distractor_boxes)});
  }
  return out;
}

std::vector<DomainDataset<float>> training_domains(const Sanet<float>& net, const std::vector<TrainingSequence>& seqs,
                                                   const TrainingConfig& cfg, Rng& rng) {
  std::vector<DomainDataset<float>> out;
  const std::size_t stride = std::max<std::size_t>(1, cfg.frame_stride);
  for (const auto& ts : seqs) {
    DomainDataset<float> d =
        sequence_domain(net, ts.sequence, cfg.positives_per_frame, cfg.negatives_per_frame, rng, stride);
    for (std::size_t t = 0; t < ts.distractors.size() && t < ts.sequence.size(); t += stride) {
      const BBox& b = ts.distractors[t];
      const double dx = rng.normal() * 0.05 * b.w, dy = rng.normal() * 0.05 * b.h;
      d.negatives.push_back(crop_for(net, ts.sequence.frames[t], {b.x + dx, b.y + dy, b.w, b.h}));
    }
    out.push_back(std::move(d));
  }
  return out;
}

PretrainResult pretrain(const RunConfig& cfg, const std::vector<TrainingSequence>& seqs, std::uint64_t seed,
                        bool ablate_rnn) {
  if (seqs.empty()) throw std::invalid_argument("training needs at least one sequence");
  SanetConfig net_cfg = cfg.network;
  net_cfg.num_domains = seqs.size();
  if (ablate_rnn) net_cfg.disable_fusion();
  PretrainResult r{build_network<float>(net_cfg, derive_seed(seed, kInit)), {}};
  Rng rng(derive_seed(seed, kSamples));
  const auto domains = training_domains(r.net, seqs, cfg.training, rng);
  TrainOptions opts;
  opts.iterations = cfg.training.iterations;
  opts.seed = derive_seed(seed, kTraining);
  opts.stop_on_convergence = cfg.training.stop_on_convergence;
  r.log = train_multidomain<float>(r.net, domains, opts);
  if (!r.log.rows.empty()) {
    spdlog::info("trained {} iterations on {} domains, final loss {:.4f}", r.log.rows.size(), domains.size(),
                 r.log.rows.back().loss);
  }
  return r;
}

SynthResult evaluation_scene(std::uint64_t seed, std::size_t length) {
  return synth_sequence(SynthSpec::randomized(derive_seed(seed, kEvalScene), length));
}

Sanet<float> tracking_network(const Sanet<float>& pretrained, std::uint64_t seed) {
  return specialize_for_tracking(pretrained, derive_seed(seed, kSpecialise));
}

TrackerConfig seeded_tracker_config(const TrackerConfig& cfg, std::uint64_t seed) {
  TrackerConfig tc = cfg;
  tc.seed = derive_seed(seed, kTracker);
  return tc;
}

Trajectory track_sequence(const Sanet<float>& pretrained, const Sequence& seq, const TrackerConfig& cfg,
                          std::uint64_t seed, std::vector<FrameResult>* frames) {
  return run_tracker(tracking_network(pretrained, seed), seq, seeded_tracker_config(cfg, seed), frames);
}

DemoResult run_demo(const RunConfig& cfg, std::uint64_t seed, bool ablate_rnn) {
  DemoResult d;
  d.pretrained = pretrain(cfg, synth_training_set(seed, cfg.training.domains, cfg.training.sequence_length), seed,
                          ablate_rnn);
  d.scene = evaluation_scene(seed, cfg.synth_length);
  d.trajectory = track_sequence(d.pretrained.net, d.scene.sequence, cfg.tracker, seed, &d.frames);
  d.report = evaluate_trajectory(d.trajectory, trajectory_from_boxes(d.scene.sequence.groundtruth),
                                 d.scene.sequence.name);
  return d;
}

}  // namespace sanet
