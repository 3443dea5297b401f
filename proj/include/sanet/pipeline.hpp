#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sanet/evaluation.hpp"
#include "sanet/io.hpp"
#include "sanet/model.hpp"
#include "sanet/sequence.hpp"
#include "sanet/tracker.hpp"

namespace sanet {

// splitmix64 of seed and tag; independent streams for each pipeline stage.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

// A training video plus the boxes of any known distractor, which are
// cropped as extra negatives.
struct TrainingSequence {
  Sequence sequence;
  std::vector<BBox> distractors;
};

// `count` randomized distractor scenes of the given length.
std::vector<TrainingSequence> synth_training_set(std::uint64_t seed, std::size_t count, std::size_t length);

std::vector<DomainDataset<float>> training_domains(const Sanet<float>& net, const std::vector<TrainingSequence>& seqs,
                                                   const TrainingConfig& cfg, Rng& rng);

struct PretrainResult {
  Sanet<float> net;
  TrainingLog log;
};

// One domain per sequence. `ablate_rnn` disables fusion in every stage.
PretrainResult pretrain(const RunConfig& cfg, const std::vector<TrainingSequence>& seqs, std::uint64_t seed,
                        bool ablate_rnn);

// The held-out tracking scene of a demo or ablation run.
SynthResult evaluation_scene(std::uint64_t seed, std::size_t length);

// The specialised network and tracker configuration a run with `seed` uses.
Sanet<float> tracking_network(const Sanet<float>& pretrained, std::uint64_t seed);
TrackerConfig seeded_tracker_config(const TrackerConfig& cfg, std::uint64_t seed);

// Replaces the domain branches with one fresh branch and runs the tracker,
// both seeded from `seed`.
Trajectory track_sequence(const Sanet<float>& pretrained, const Sequence& seq, const TrackerConfig& cfg,
                          std::uint64_t seed, std::vector<FrameResult>* frames = nullptr);

struct DemoResult {
  PretrainResult pretrained;
  SynthResult scene;
  Trajectory trajectory;
  std::vector<FrameResult> frames;
  MetricReport report;
};

// synth -> train -> specialise -> track -> evaluate, all from `seed`.
DemoResult run_demo(const RunConfig& cfg, std::uint64_t seed, bool ablate_rnn);

}  // namespace sanet
