#include "sanet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "sanet/gradcheck.hpp"

namespace sanet {

SanetConfig SanetConfig::standard() {
  SanetConfig c;
  c.input_size = 107;
  c.stages = {{7, 2, 0, 96, 3, 2, true, 0}, {5, 2, 0, 256, 3, 2, true, 0}, {3, 1, 0, 512, 3, 2, true, 0}};
  c.fc_widths = {512, 512};
  return c;
}

SanetConfig SanetConfig::tiny() {
  SanetConfig c;
  c.input_size = 35;
  c.stages = {{5, 2, 0, 8, 3, 2, true, 0}, {3, 1, 1, 12, 3, 2, true, 0}, {3, 1, 1, 16, 2, 1, true, 0}};
  c.fc_widths = {32, 32};
  c.lr_cnn = 1e-2;
  c.lr_rnn = 1e-2;
  c.lr_fc = 1e-2;
  c.weight_decay = 5e-4;
  c.batch_positives = 8;
  c.batch_negative_pool = 64;
  c.batch_negatives = 24;
  return c;
}

void SanetConfig::validate() const {
  if (input_size == 0) throw ShapeError("input size must be positive");
  if (stages.empty()) throw ShapeError("network needs at least one convolutional stage");
  if (num_domains == 0) throw std::invalid_argument("number of domains K must be at least 1");
  if (batch_negatives > batch_negative_pool) {
    throw std::invalid_argument("mined negatives M must not exceed the candidate pool B");
  }
  if (fc_widths.empty()) throw std::invalid_argument("at least one fully-connected layer is required");
  for (std::size_t w : fc_widths) {
    if (w == 0) throw std::invalid_argument("fully-connected widths must be positive");
  }
  Shape shape{input_size, input_size, 3};
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto& st = stages[s];
    if (st.channels == 0) throw ShapeError("stage " + std::to_string(s + 1) + " has no channels");
    try {
      const Shape conv = conv2d_output_shape(shape, Shape{st.kernel, st.kernel, shape[2], st.channels},
                                             st.stride, st.pad);
      const Shape pooled = maxpool_output_shape(conv, st.pool_window, st.pool_stride);
      shape = Shape{pooled[0], pooled[1], st.output_channels()};
    } catch (const ShapeError& e) {
      throw ShapeError("stage " + std::to_string(s + 1) + " is geometrically impossible: " + e.what());
    }
  }
}

void SanetConfig::disable_fusion() {
  for (auto& st : stages) st.fuse = false;
}

namespace {

template <typename T>
struct Slot {
  std::string name;
  ParamGroup group;
  std::size_t branch;
  Tensor<T>* tensor;
};

template <typename T, typename P>
std::vector<Slot<T>> slots(P& p) {
  std::vector<Slot<T>> out;
  auto push = [&](std::string name, ParamGroup g, std::size_t b, auto& t) {
    out.push_back({std::move(name), g, b, const_cast<Tensor<T>*>(&t)});
  };
  for (std::size_t s = 0; s < p.stages.size(); ++s) {
    auto& st = p.stages[s];
    const std::string pre = "stage" + std::to_string(s + 1) + ".";
    push(pre + "conv.kernels", ParamGroup::conv, kNoBranch, st.conv.kernels);
    push(pre + "conv.bias", ParamGroup::conv, kNoBranch, st.conv.bias);
    if (st.rnn.directions.empty()) continue;
    for (auto& d : st.rnn.directions) {
      const std::string rp = pre + "rnn." + to_string(d.direction) + ".";
      push(rp + "U", ParamGroup::rnn, kNoBranch, d.U);
      push(rp + "W", ParamGroup::rnn, kNoBranch, d.W);
      push(rp + "V", ParamGroup::rnn, kNoBranch, d.V);
      push(rp + "b", ParamGroup::rnn, kNoBranch, d.b);
    }
    push(pre + "rnn.c", ParamGroup::rnn, kNoBranch, st.rnn.c);
  }
  for (std::size_t i = 0; i < p.fc.size(); ++i) {
    push("fc" + std::to_string(i + 1) + ".weights", ParamGroup::fc, kNoBranch, p.fc[i].weights);
    push("fc" + std::to_string(i + 1) + ".bias", ParamGroup::fc, kNoBranch, p.fc[i].bias);
  }
  for (std::size_t k = 0; k < p.branches.size(); ++k) {
    push("branch" + std::to_string(k) + ".weights", ParamGroup::branch, k, p.branches[k].weights);
    push("branch" + std::to_string(k) + ".bias", ParamGroup::branch, k, p.branches[k].bias);
  }
  return out;
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src, T factor = T(1)) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

template <typename U, typename T>
Tensor<U> convert(const Tensor<T>& t) {
  return t.empty() ? Tensor<U>() : t.template cast<U>();
}

template <typename U, typename T>
FcParams<U> convert(const FcParams<T>& p) {
  return {convert<U>(p.weights), convert<U>(p.bias)};
}

}  // namespace

template <typename T>
SanetParams<T> SanetParams<T>::zeros_like() const {
  SanetParams<T> z = *this;
  for (auto& s : slots<T>(z)) s.tensor->fill(T(0));
  return z;
}

template <typename T>
void SanetParams<T>::add_scaled(const SanetParams& other, T factor) {
  auto mine = slots<T>(*this);
  auto theirs = slots<T>(other);
  for (std::size_t i = 0; i < mine.size(); ++i) add_into(*mine[i].tensor, *theirs[i].tensor, factor);
}

template <typename T>
void SanetParams<T>::for_each(
    const std::function<void(const std::string&, ParamGroup, std::size_t, Tensor<T>&)>& f) {
  for (auto& s : slots<T>(*this)) f(s.name, s.group, s.branch, *s.tensor);
}

template <typename T>
void SanetParams<T>::for_each(
    const std::function<void(const std::string&, ParamGroup, std::size_t, const Tensor<T>&)>& f) const {
  for (auto& s : slots<T>(*this)) f(s.name, s.group, s.branch, *s.tensor);
}

template <typename T>
std::size_t Sanet<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto& s : slots<T>(params)) n += s.tensor->size();
  return n;
}

template <typename T>
void Sanet<T>::rebuild_geometry() {
  config.validate();
  stage_shapes_.clear();
  pooled_shapes_.clear();
  dags_.clear();
  Shape shape{config.input_size, config.input_size, 3};
  for (const auto& st : config.stages) {
    const Shape conv = conv2d_output_shape(shape, Shape{st.kernel, st.kernel, shape[2], st.channels},
                                           st.stride, st.pad);
    const Shape pooled = maxpool_output_shape(conv, st.pool_window, st.pool_stride);
    pooled_shapes_.push_back(pooled);
    dags_.push_back(build_lattice_dags(pooled[0], pooled[1], config.connectivity));
    shape = Shape{pooled[0], pooled[1], st.output_channels()};
    stage_shapes_.push_back(shape);
  }
}

template <typename T>
template <typename U>
Sanet<U> Sanet<T>::cast() const {
  Sanet<U> out;
  out.config = config;
  out.seed = seed;
  for (const auto& st : params.stages) {
    StageParams<U> s;
    s.conv = {convert<U>(st.conv.kernels), convert<U>(st.conv.bias), st.conv.stride, st.conv.padding};
    s.rnn.hidden_activation = st.rnn.hidden_activation;
    s.rnn.output_activation = st.rnn.output_activation;
    s.rnn.c = convert<U>(st.rnn.c);
    for (const auto& d : st.rnn.directions) {
      s.rnn.directions.push_back({d.direction, convert<U>(d.U), convert<U>(d.W), convert<U>(d.V),
                                  convert<U>(d.b)});
    }
    out.params.stages.push_back(std::move(s));
  }
  for (const auto& f : params.fc) out.params.fc.push_back(convert<U>(f));
  for (const auto& b : params.branches) out.params.branches.push_back(convert<U>(b));
  out.rebuild_geometry();
  return out;
}

// √6/√fan-in keeps the activation variance roughly constant through ReLU layers.
const double kHiddenGain = std::sqrt(6.0);

template <typename T>
FcParams<T> init_fc(std::size_t in, std::size_t out, Rng& rng, double gain) {
  return {uniform_tensor<T>(Shape{out, in}, gain / std::sqrt(double(in)), rng), Tensor<T>(Shape{out})};
}

template <typename T>
Sanet<T> build_network(const SanetConfig& config, std::uint64_t seed) {
  config.validate();
  Sanet<T> net;
  net.config = config;
  net.seed = seed;
  Rng rng(seed);
  std::size_t channels = 3;
  for (const auto& st : config.stages) {
    StageParams<T> sp;
    const double fan_in = double(st.kernel * st.kernel * channels);
    sp.conv.kernels = uniform_tensor<T>(Shape{st.kernel, st.kernel, channels, st.channels},
                                        kHiddenGain / std::sqrt(fan_in), rng);
    sp.conv.bias = Tensor<T>(Shape{st.channels});
    sp.conv.stride = st.stride;
    sp.conv.padding = st.pad;
    if (st.fuse) {
      sp.rnn = init_dagrnn_params<T>(st.channels, st.hidden(), st.hidden(), config.connectivity, rng);
      sp.rnn.hidden_activation = config.rnn_hidden_activation;
      sp.rnn.output_activation = config.rnn_output_activation;
    }
    net.params.stages.push_back(std::move(sp));
    channels = st.output_channels();
  }
  net.rebuild_geometry();
  std::size_t in = net.feature_dim();
  for (std::size_t w : config.fc_widths) {
    net.params.fc.push_back(init_fc<T>(in, w, rng, kHiddenGain));
    in = w;
  }
  for (std::size_t k = 0; k < config.num_domains; ++k) net.params.branches.push_back(init_fc<T>(in, 2, rng));
  return net;
}

std::string describe_network(const Sanet<float>& net) {
  std::ostringstream os;
  os << "input " << net.config.input_size << "x" << net.config.input_size << "x3\n";
  for (std::size_t s = 0; s < net.config.stages.size(); ++s) {
    os << "stage " << s + 1 << ": pooled " << net.pooled_shapes()[s].str() << " -> output "
       << net.stage_output_shapes()[s].str() << (net.config.stages[s].fuse ? " (fused)" : "") << "\n";
  }
  os << "features " << net.feature_dim() << ", branches " << net.num_branches() << ", parameters "
     << net.parameter_count() << "\n";
  return os.str();
}

template <typename T>
FeatureCache<T> forward_features(const Sanet<T>& net, const Tensor<T>& patch) {
  const std::size_t S = net.config.input_size;
  if (patch.shape() != Shape{S, S, 3}) {
    throw ShapeError("patch " + patch.shape().str() + " does not match network input " +
                     Shape{S, S, 3}.str());
  }
  FeatureCache<T> cache;
  cache.stages.resize(net.config.stages.size());
  const Tensor<T>* x = &patch;
  for (std::size_t s = 0; s < net.config.stages.size(); ++s) {
    const auto& cfg = net.config.stages[s];
    const auto& sp = net.params.stages[s];
    auto& sc = cache.stages[s];
    sc.input = *x;
    sc.activated = activation_forward(conv2d_forward(sc.input, sp.conv), net.config.conv_activation);
    sc.pool = maxpool_forward(sc.activated, cfg.pool_window, cfg.pool_stride);
    if (cfg.fuse) {
      sc.rnn = dagrnn_forward(sc.pool.output, net.dags(s), sp.rnn);
      sc.output = concat_channels(sc.pool.output, sc.rnn.output);
    } else {
      sc.output = sc.pool.output;
    }
    x = &sc.output;
  }
  cache.features = *x;
  return cache;
}

template <typename T>
HeadCache<T> forward_head(const Sanet<T>& net, const Tensor<T>& features, std::size_t branch) {
  if (branch >= net.num_branches()) {
    throw std::out_of_range("unknown branch " + std::to_string(branch) + " (network has " +
                            std::to_string(net.num_branches()) + ")");
  }
  if (features.size() != net.feature_dim()) {
    throw ShapeError("features " + features.shape().str() + " do not match network feature size " +
                     std::to_string(net.feature_dim()));
  }
  HeadCache<T> h;
  h.inputs.push_back(features.reshaped(Shape{features.size()}));
  for (const auto& fc : net.params.fc) {
    h.inputs.push_back(activation_forward(fc_forward(h.inputs.back(), fc), net.config.fc_activation));
  }
  h.logits = fc_forward(h.inputs.back(), net.params.branches[branch]);
  return h;
}

template <typename T>
ScoreResult<T> head_scores(const Sanet<T>& net, const std::vector<Tensor<T>>& features,
                           std::size_t branch) {
  const std::size_t n = features.size();
  ScoreResult<T> r;
  if (n == 0) return r;
  r.logits = Tensor<T>(Shape{n, 2});
  r.positive.resize(n);
  std::vector<std::string> errors(n);
  const long ln = static_cast<long>(n);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < ln; ++i) {
    try {
      const HeadCache<T> h = forward_head(net, features[i], branch);
      r.logits(i, 0) = h.logits[0];
      r.logits(i, 1) = h.logits[1];
      r.positive[i] = softmax_cross_entropy(h.logits, 1).probs[1];
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw std::invalid_argument(e);
  }
  return r;
}

template <typename T>
ScoreResult<T> forward_scores(const Sanet<T>& net, const std::vector<Tensor<T>>& patches,
                              std::size_t branch, bool keep_features) {
  if (branch >= net.num_branches()) {
    throw std::out_of_range("unknown branch " + std::to_string(branch));
  }
  const std::size_t n = patches.size();
  std::vector<Tensor<T>> features(n);
  std::vector<std::string> errors(n);
  const long ln = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 4)
  for (long i = 0; i < ln; ++i) {
    try {
      features[i] = forward_features(net, patches[i]).features;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw ShapeError(e);
  }
  ScoreResult<T> r = head_scores(net, features, branch);
  if (keep_features) r.features = std::move(features);
  return r;
}

namespace {

template <typename T>
void backward_sample(const Sanet<T>& net, const FeatureCache<T>* fcache, const HeadCache<T>& head,
                     std::size_t label, std::size_t branch, T scale, SanetParams<T>& g) {
  const auto sm = softmax_cross_entropy(head.logits, label);
  Tensor<T> d = softmax_cross_entropy_backward(sm.probs, label);
  for (auto& v : d.data()) v *= scale;

  {
    const FcGrads<T> bg = fc_backward(head.inputs.back(), net.params.branches[branch], d);
    add_into(g.branches[branch].weights, bg.weights);
    add_into(g.branches[branch].bias, bg.bias);
    d = bg.input;
  }
  for (std::size_t i = net.params.fc.size(); i-- > 0;) {
    d = activation_backward(head.inputs[i + 1], d, net.config.fc_activation);
    const FcGrads<T> fg = fc_backward(head.inputs[i], net.params.fc[i], d);
    add_into(g.fc[i].weights, fg.weights);
    add_into(g.fc[i].bias, fg.bias);
    d = fg.input;
  }
  if (fcache == nullptr) return;

  d = d.reshaped(net.features_shape());
  for (std::size_t s = net.config.stages.size(); s-- > 0;) {
    const auto& cfg = net.config.stages[s];
    const auto& sp = net.params.stages[s];
    const auto& sc = fcache->stages[s];
    Tensor<T> dpool;
    if (cfg.fuse) {
      auto [dp, dr] = concat_channels_backward(d, cfg.channels);
      const DagRnnGrads<T> rg = dagrnn_backward(sc.pool.output, sc.rnn, net.dags(s), sp.rnn, dr);
      auto& gr = g.stages[s].rnn;
      for (std::size_t m = 0; m < rg.directions.size(); ++m) {
        add_into(gr.directions[m].U, rg.directions[m].U);
        add_into(gr.directions[m].W, rg.directions[m].W);
        add_into(gr.directions[m].V, rg.directions[m].V);
        add_into(gr.directions[m].b, rg.directions[m].b);
      }
      add_into(gr.c, rg.c);
      add_into(dp, rg.input);
      dpool = std::move(dp);
    } else {
      dpool = std::move(d);
    }
    const Tensor<T> dact = maxpool_backward(sc.pool.record, dpool);
    const Tensor<T> dconv = activation_backward(sc.activated, dact, net.config.conv_activation);
    const Conv2dGrads<T> cg = conv2d_backward(sc.input, sp.conv, dconv);
    add_into(g.stages[s].conv.kernels, cg.kernels);
    add_into(g.stages[s].conv.bias, cg.bias);
    d = cg.input;
  }
}

template <typename T>
std::string locate_non_finite(const Sanet<T>& net, const TrainBatch<T>& batch, bool head_only) {
  for (const auto& p : batch.patches) {
    Tensor<T> features = p;
    if (!head_only) {
      const FeatureCache<T> fc = forward_features(net, p);
      for (std::size_t s = 0; s < fc.stages.size(); ++s) {
        const auto& sc = fc.stages[s];
        if (!all_finite(sc.activated)) return "stage" + std::to_string(s + 1) + ".conv";
        if (net.config.stages[s].fuse && !all_finite(sc.rnn.output)) {
          return "stage" + std::to_string(s + 1) + ".rnn";
        }
      }
      features = fc.features;
    }
    const HeadCache<T> h = forward_head(net, features, batch.domain);
    for (std::size_t i = 1; i < h.inputs.size(); ++i) {
      if (!all_finite(h.inputs[i])) return "fc" + std::to_string(i);
    }
    if (!all_finite(h.logits)) return "branch" + std::to_string(batch.domain);
  }
  return "loss";
}

}  // namespace

template <typename T>
BatchGradient<T> batch_gradient(const Sanet<T>& net, const TrainBatch<T>& batch, bool head_only) {
  const std::size_t n = batch.patches.size();
  if (n == 0 || batch.labels.size() != n) {
    throw std::invalid_argument("training batch needs one label per sample and at least one sample");
  }
  if (batch.domain >= net.num_branches()) {
    throw std::out_of_range("batch domain " + std::to_string(batch.domain) + " has no branch");
  }
  for (std::size_t l : batch.labels) {
    if (l > 1) throw std::invalid_argument("labels must be binary");
  }
  BatchGradient<T> out;
  out.grads = net.params.zeros_like();
  const T scale = T(1) / static_cast<T>(n);

  // Fixed-size chunks summed in sample order keep the result independent
  // of the thread count.
  constexpr std::size_t kChunk = 8;
  std::vector<SanetParams<T>> partial(std::min(kChunk, n), out.grads);
  std::vector<T> losses(n);
  std::vector<char> hits(n);
  std::vector<std::string> errors(n);
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t count = std::min(kChunk, n - begin);
    const long lcount = static_cast<long>(count);
#pragma omp parallel for schedule(static, 1)
    for (long j = 0; j < lcount; ++j) {
      const std::size_t i = begin + static_cast<std::size_t>(j);
      try {
        auto& g = partial[j];
        for (auto& s : slots<T>(g)) s.tensor->fill(T(0));
        FeatureCache<T> fc;
        if (!head_only) fc = forward_features(net, batch.patches[i]);
        const HeadCache<T> h =
            forward_head(net, head_only ? batch.patches[i] : fc.features, batch.domain);
        losses[i] = softmax_cross_entropy(h.logits, batch.labels[i]).loss;
        const std::size_t predicted = h.logits[1] > h.logits[0] ? 1 : 0;
        hits[i] = predicted == batch.labels[i];
        backward_sample(net, head_only ? nullptr : &fc, h, batch.labels[i], batch.domain, scale, g);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
    for (std::size_t j = 0; j < count; ++j) {
      if (!errors[begin + j].empty()) throw std::invalid_argument(errors[begin + j]);
      out.grads.add_scaled(partial[j], T(1));
    }
  }
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    total += losses[i];
    out.correct += hits[i] ? 1 : 0;
  }
  out.loss = total * scale;
  return out;
}

template <typename T>
Optimizer<T>::Optimizer(const Sanet<T>& net) : velocity_(net.params.zeros_like()), config_(net.config) {}

template <typename T>
double Optimizer<T>::learning_rate(ParamGroup group) const {
  switch (group) {
    case ParamGroup::conv: return config_.lr_cnn * rate_multiplier;
    case ParamGroup::rnn: return config_.lr_rnn * std::pow(config_.rnn_lr_decay, epoch) * rate_multiplier;
    case ParamGroup::fc:
    case ParamGroup::branch: return config_.lr_fc * rate_multiplier;
  }
  return 0.0;
}

template <typename T>
void Optimizer<T>::step(Sanet<T>& net, const SanetParams<T>& grads, std::size_t branch, bool head_only) {
  auto p = slots<T>(net.params);
  auto v = slots<T>(velocity_);
  auto g = slots<T>(grads);
  if (p.size() != v.size() || p.size() != g.size()) {
    throw std::logic_error("optimizer state does not match the network layout");
  }
  const T mu = static_cast<T>(config_.momentum);
  const T wd = static_cast<T>(config_.weight_decay);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const ParamGroup group = p[i].group;
    if (group == ParamGroup::branch && p[i].branch != branch) continue;
    if (head_only && (group == ParamGroup::conv || group == ParamGroup::rnn)) continue;
    const T lr = static_cast<T>(learning_rate(group));
    Tensor<T>& param = *p[i].tensor;
    Tensor<T>& vel = *v[i].tensor;
    const Tensor<T>& grad = *g[i].tensor;
    for (std::size_t k = 0; k < param.size(); ++k) {
      vel[k] = mu * vel[k] - lr * (grad[k] + wd * param[k]);
      param[k] += vel[k];
    }
  }
}

template <typename T>
StepResult<T> backward_and_step(Sanet<T>& net, Optimizer<T>& opt, const TrainBatch<T>& batch,
                                bool head_only) {
  BatchGradient<T> bg = batch_gradient(net, batch, head_only);
  if (!std::isfinite(bg.loss)) {
    throw NonFiniteError("non-finite loss; first non-finite layer: " +
                         locate_non_finite(net, batch, head_only));
  }
  opt.step(net, bg.grads, batch.domain, head_only);
  return {bg.loss, double(bg.correct) / double(batch.patches.size())};
}

template <typename T>
std::vector<std::size_t> select_top(const std::vector<T>& scores, std::size_t m) {
  if (m > scores.size()) {
    throw std::invalid_argument("cannot select " + std::to_string(m) + " of " +
                                std::to_string(scores.size()) + " candidates");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(m);
  return idx;
}

template <typename T>
std::vector<std::size_t> mine_hard_negatives(const Sanet<T>& net, const std::vector<Tensor<T>>& pool,
                                             std::size_t branch, std::size_t m, bool features) {
  if (m > pool.size()) {
    throw std::invalid_argument("hard mining asked for " + std::to_string(m) + " negatives from a pool of " +
                                std::to_string(pool.size()));
  }
  if (m == 0) return {};
  const ScoreResult<T> r = features ? head_scores(net, pool, branch) : forward_scores(net, pool, branch);
  return select_top(r.positive, m);
}

template <typename T>
Sanet<T> specialize_for_tracking(const Sanet<T>& net, std::uint64_t seed) {
  Sanet<T> out = net;
  Rng rng(seed);
  const std::size_t in = net.params.fc.empty() ? net.feature_dim() : net.params.fc.back().weights.dim(0);
  out.params.branches = {init_fc<T>(in, 2, rng)};
  out.config.num_domains = 1;
  return out;
}

namespace {

// Cycles through a shuffled index list, reshuffling on wrap-around.
class Cursor {
 public:
  Cursor(std::size_t n, Rng& rng) : order_(n) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    shuffle(rng);
  }
  std::size_t next(Rng& rng) {
    if (pos_ == order_.size()) {
      shuffle(rng);
      pos_ = 0;
    }
    return order_[pos_++];
  }

 private:
  void shuffle(Rng& rng) {
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng.below(i)]);
  }
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

}  // namespace

template <typename T>
TrainingLog train_multidomain(Sanet<T>& net, const std::vector<DomainDataset<T>>& domains,
                              const TrainOptions& options, const IterationObserver<T>& observer) {
  const std::size_t K = net.num_branches();
  if (domains.size() != K) {
    throw std::invalid_argument("network has " + std::to_string(K) + " branches but " +
                                std::to_string(domains.size()) + " domain datasets were given");
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (domains[k].positives.empty() || domains[k].negatives.empty()) {
      throw std::invalid_argument("domain " + std::to_string(k) + " dataset is empty");
    }
  }
  const auto& cfg = net.config;
  std::size_t largest = 0;
  for (const auto& d : domains) largest = std::max(largest, d.positives.size());
  const std::size_t P = std::max<std::size_t>(1, cfg.batch_positives);
  const std::size_t epoch_len =
      cfg.epoch_iterations ? cfg.epoch_iterations : K * ((largest + P - 1) / P);

  Rng rng(options.seed);
  Optimizer<T> opt(net);
  std::vector<Cursor> cursors;
  for (const auto& d : domains) cursors.emplace_back(d.positives.size(), rng);

  TrainingLog log;
  for (std::size_t t = 0; t < options.iterations; ++t) {
    const std::size_t k = t % K;
    const auto& dom = domains[k];
    opt.epoch = static_cast<double>(t / epoch_len);

    TrainBatch<T> batch;
    batch.domain = k;
    for (std::size_t i = 0; i < P; ++i) {
      batch.patches.push_back(dom.positives[cursors[k].next(rng)]);
      batch.labels.push_back(1);
    }
    std::vector<Tensor<T>> pool;
    for (std::size_t i : sample_without_replacement(dom.negatives.size(), cfg.batch_negative_pool, rng)) {
      pool.push_back(dom.negatives[i]);
    }
    const std::size_t m = std::min(cfg.batch_negatives, pool.size());
    for (std::size_t i : mine_hard_negatives(net, pool, k, m)) {
      batch.patches.push_back(pool[i]);
      batch.labels.push_back(0);
    }

    BatchGradient<T> bg = batch_gradient(net, batch);
    if (!std::isfinite(bg.loss)) {
      throw NonFiniteError("non-finite loss at iteration " + std::to_string(t) +
                           "; first non-finite layer: " + locate_non_finite(net, batch, false));
    }
    if (observer) observer(t, batch, bg.grads);
    opt.step(net, bg.grads, k, false);
    log.rows.push_back({t, k, double(bg.loss), double(bg.correct) / double(batch.patches.size())});

    const std::size_t w = options.convergence_window;
    if (options.stop_on_convergence && w > 0 && log.rows.size() >= 2 * w) {
      double recent = 0, previous = 0;
      for (std::size_t i = 0; i < w; ++i) {
        recent += log.rows[log.rows.size() - 1 - i].loss;
        previous += log.rows[log.rows.size() - 1 - w - i].loss;
      }
      if (std::abs(recent - previous) / std::max(previous, 1e-12) < options.convergence_tolerance) {
        log.converged = true;
        break;
      }
    }
  }
  return log;
}

std::string training_log_csv(const TrainingLog& log) {
  std::string out = "iteration,domain,loss,accuracy\n";
  char line[128];
  for (const auto& r : log.rows) {
    std::snprintf(line, sizeof line, "%zu,%zu,%.6f,%.4f\n", r.iteration, r.domain, r.loss, r.accuracy);
    out += line;
  }
  return out;
}

#define SANET_MODEL(T)                                                                               \
  template struct SanetParams<T>;                                                                    \
  template class Sanet<T>;                                                                           \
  template class Optimizer<T>;                                                                       \
  template FcParams<T> init_fc(std::size_t, std::size_t, Rng&, double);                                      \
  template Sanet<T> build_network(const SanetConfig&, std::uint64_t);                                \
  template FeatureCache<T> forward_features(const Sanet<T>&, const Tensor<T>&);                      \
  template HeadCache<T> forward_head(const Sanet<T>&, const Tensor<T>&, std::size_t);                \
  template ScoreResult<T> forward_scores(const Sanet<T>&, const std::vector<Tensor<T>>&, std::size_t, \
                                         bool);                                                      \
  template ScoreResult<T> head_scores(const Sanet<T>&, const std::vector<Tensor<T>>&, std::size_t);  \
  template BatchGradient<T> batch_gradient(const Sanet<T>&, const TrainBatch<T>&, bool);             \
  template StepResult<T> backward_and_step(Sanet<T>&, Optimizer<T>&, const TrainBatch<T>&, bool);    \
  template std::vector<std::size_t> select_top(const std::vector<T>&, std::size_t);                  \
  template std::vector<std::size_t> mine_hard_negatives(const Sanet<T>&, const std::vector<Tensor<T>>&, \
                                                        std::size_t, std::size_t, bool);             \
  template Sanet<T> specialize_for_tracking(const Sanet<T>&, std::uint64_t);                         \
  template TrainingLog train_multidomain(Sanet<T>&, const std::vector<DomainDataset<T>>&,            \
                                         const TrainOptions&, const IterationObserver<T>&);

SANET_MODEL(float)
SANET_MODEL(double)

template Sanet<double> Sanet<float>::cast<double>() const;
template Sanet<float> Sanet<double>::cast<float>() const;

}  // namespace sanet
