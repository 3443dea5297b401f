#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sanet/dagrnn.hpp"
#include "sanet/lattice.hpp"
#include "sanet/layers.hpp"
#include "sanet/rng.hpp"
#include "sanet/tensor.hpp"

namespace sanet {

// conv -> activation -> max-pool -> (optional) DAG-RNN fused by channel concat
struct StageConfig {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t channels = 8;
  std::size_t pool_window = 3;
  std::size_t pool_stride = 2;
  bool fuse = true;
  std::size_t rnn_hidden = 0;  // 0: same as `channels`

  std::size_t hidden() const { return rnn_hidden ? rnn_hidden : channels; }
  std::size_t output_channels() const { return fuse ? channels + hidden() : channels; }
};

struct SanetConfig {
  std::size_t input_size = 107;
  std::vector<StageConfig> stages;
  std::vector<std::size_t> fc_widths{512, 512};
  std::size_t num_domains = 1;

  Activation conv_activation = Activation::relu;
  Activation fc_activation = Activation::relu;
  Activation rnn_hidden_activation = Activation::relu;
  Activation rnn_output_activation = Activation::identity;
  Connectivity connectivity = Connectivity::eight;

  // Patches are (pixel − input_mean[c]) · input_scale.
  std::array<double, 3> input_mean{128.0, 128.0, 128.0};
  double input_scale = 1.0 / 128.0;

  double lr_cnn = 1e-4;
  double lr_rnn = 1e-3;
  double lr_fc = 1e-3;
  double rnn_lr_decay = 0.9;  // per epoch
  double momentum = 0.9;
  double weight_decay = 5e-4;

  std::size_t batch_positives = 32;
  std::size_t batch_negative_pool = 1024;
  std::size_t batch_negatives = 96;  // mined from the pool
  std::size_t epoch_iterations = 0;  // 0: one pass over every domain's positives

  // Three stages with kernels 7/5/3, strides 2/2/1, 3x3/2 pooling.
  static SanetConfig standard();
  // 35x35 input, 8/12/16 channels; what the test suite trains.
  static SanetConfig tiny();

  void validate() const;
  void disable_fusion();
};

enum class ParamGroup { conv, rnn, fc, branch };

template <typename T>
struct StageParams {
  Conv2dParams<T> conv;
  DagRnnParams<T> rnn;  // empty when the stage is not fused
};

// Shared layers plus the K-way domain head. The same layout doubles as
// the gradient and momentum container.
template <typename T>
struct SanetParams {
  std::vector<StageParams<T>> stages;
  std::vector<FcParams<T>> fc;
  std::vector<FcParams<T>> branches;

  SanetParams zeros_like() const;
  void add_scaled(const SanetParams& other, T factor);

  // f(name, group, branch index or npos, tensor)
  void for_each(const std::function<void(const std::string&, ParamGroup, std::size_t, Tensor<T>&)>& f);
  void for_each(const std::function<void(const std::string&, ParamGroup, std::size_t, const Tensor<T>&)>& f) const;
};

inline constexpr std::size_t kNoBranch = static_cast<std::size_t>(-1);

template <typename T>
class Sanet {
 public:
  SanetConfig config;
  SanetParams<T> params;
  std::uint64_t seed = 0;

  std::size_t num_branches() const { return params.branches.size(); }
  std::size_t parameter_count() const;
  std::size_t feature_dim() const { return features_shape().numel(); }

  // Per stage: the tensor handed to the next stage (fused when enabled).
  const std::vector<Shape>& stage_output_shapes() const { return stage_shapes_; }
  const std::vector<Shape>& pooled_shapes() const { return pooled_shapes_; }
  const Shape& features_shape() const { return stage_shapes_.back(); }
  std::span<const LatticeDag> dags(std::size_t stage) const { return dags_.at(stage); }

  template <typename U>
  Sanet<U> cast() const;

  // Rebuilds shapes and lattice graphs from `config`; used after loading.
  void rebuild_geometry();

 private:
  std::vector<Shape> stage_shapes_;
  std::vector<Shape> pooled_shapes_;
  std::vector<std::array<LatticeDag, 4>> dags_;
};

template <typename T>
Sanet<T> build_network(const SanetConfig& config, std::uint64_t seed);

std::string describe_network(const Sanet<float>& net);

// Per-sample intermediate values kept for backward.
template <typename T>
struct StageCache {
  Tensor<T> input;
  Tensor<T> activated;
  PoolResult<T> pool;
  DagRnnActivations<T> rnn;
  Tensor<T> output;
};

template <typename T>
struct FeatureCache {
  std::vector<StageCache<T>> stages;
  Tensor<T> features;  // final stage output, (H, W, C)
};

template <typename T>
struct HeadCache {
  std::vector<Tensor<T>> inputs;  // input to each fc layer, then to the branch
  Tensor<T> logits;
};

template <typename T>
FeatureCache<T> forward_features(const Sanet<T>& net, const Tensor<T>& patch);

template <typename T>
HeadCache<T> forward_head(const Sanet<T>& net, const Tensor<T>& features, std::size_t branch);

template <typename T>
struct ScoreResult {
  Tensor<T> logits;          // (n, 2)
  std::vector<T> positive;   // softmax(logits)[1]
  std::vector<Tensor<T>> features;
};

// Patches are scored concurrently; the result does not depend on the
// number of threads.
template <typename T>
ScoreResult<T> forward_scores(const Sanet<T>& net, const std::vector<Tensor<T>>& patches,
                              std::size_t branch, bool keep_features = false);

// Scores from already-computed final features (the FC head only).
template <typename T>
ScoreResult<T> head_scores(const Sanet<T>& net, const std::vector<Tensor<T>>& features,
                           std::size_t branch);

template <typename T>
struct TrainBatch {
  std::vector<Tensor<T>> patches;  // or final features when training the head only
  std::vector<std::size_t> labels;  // 0 background, 1 target
  std::size_t domain = 0;
};

template <typename T>
struct BatchGradient {
  T loss = T(0);  // mean cross-entropy
  std::size_t correct = 0;
  SanetParams<T> grads;
};

// Mean loss and gradient over the batch. With `head_only` the batch holds
// final features and only FC and branch gradients are produced.
template <typename T>
BatchGradient<T> batch_gradient(const Sanet<T>& net, const TrainBatch<T>& batch, bool head_only = false);

// SGD with momentum and weight decay. Branches other than the active one
// are left untouched, momentum included.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(const Sanet<T>& net);

  double epoch = 0;  // drives the RNN learning-rate decay
  double learning_rate(ParamGroup group) const;
  void step(Sanet<T>& net, const SanetParams<T>& grads, std::size_t branch, bool head_only);

  // Multiplies every learning rate; the tracker uses it for online updates.
  double rate_multiplier = 1.0;

 private:
  SanetParams<T> velocity_;
  SanetConfig config_;
};

template <typename T>
struct StepResult {
  T loss = T(0);
  double accuracy = 0;
};

template <typename T>
StepResult<T> backward_and_step(Sanet<T>& net, Optimizer<T>& opt, const TrainBatch<T>& batch,
                                bool head_only = false);

template <typename T>
struct DomainDataset {
  std::vector<Tensor<T>> positives;
  std::vector<Tensor<T>> negatives;
};

struct TrainLogRow {
  std::size_t iteration = 0;
  std::size_t domain = 0;
  double loss = 0;
  double accuracy = 0;
};

struct TrainOptions {
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  bool stop_on_convergence = true;
  std::size_t convergence_window = 50;
  double convergence_tolerance = 1e-4;
};

struct TrainingLog {
  std::vector<TrainLogRow> rows;
  bool converged = false;
};

template <typename T>
using IterationObserver = std::function<void(std::size_t iteration, const TrainBatch<T>& batch,
                                             const SanetParams<T>& grads)>;

// Iteration t draws a mined minibatch from domain t mod K and updates the
// shared layers plus that domain's branch.
template <typename T>
TrainingLog train_multidomain(Sanet<T>& net, const std::vector<DomainDataset<T>>& domains,
                              const TrainOptions& options, const IterationObserver<T>& observer = {});

std::string training_log_csv(const TrainingLog& log);

// Indices of the M largest scores, ordered by descending score with ties
// going to the lower index.
template <typename T>
std::vector<std::size_t> select_top(const std::vector<T>& scores, std::size_t m);

template <typename T>
std::vector<std::size_t> mine_hard_negatives(const Sanet<T>& net, const std::vector<Tensor<T>>& pool,
                                             std::size_t branch, std::size_t m, bool features = false);

// Shared layers copied verbatim, one freshly initialised 2-way branch.
template <typename T>
Sanet<T> specialize_for_tracking(const Sanet<T>& net, std::uint64_t seed);

// Uniform in ±gain/√in, zero bias.
template <typename T>
FcParams<T> init_fc(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0);

}  // namespace sanet
