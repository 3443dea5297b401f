#include "sanet/checks.hpp"

#include <array>
#include <functional>

#include "sanet/dagrnn.hpp"
#include "sanet/gradcheck.hpp"
#include "sanet/layers.hpp"
#include "sanet/model.hpp"
#include "sanet/rng.hpp"

namespace sanet {

namespace {

Tensor<double> uniform(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

double project(const Tensor<double>& t, const Tensor<double>& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) acc += t[i] * w[i];
  return acc;
}

void compare(std::vector<GradientCheck>& out, std::string name, const Tensor<double>& analytic,
             const Tensor<double>& numeric, double tol) {
  out.push_back({std::move(name), max_relative_error(analytic, numeric), tol});
}

void check_dagrnn(std::vector<GradientCheck>& out, const std::string& prefix, std::span<const Direction> dirs,
                  Connectivity conn, Rng& rng) {
  const std::size_t H = 4, W = 5, in = 3, hid = 2, outc = 2;
  DagRnnParams<double> p;
  for (Direction d : dirs) {
    p.directions.push_back({d, uniform(Shape{hid, in}, rng, -0.6, 0.6), uniform(Shape{hid, hid}, rng, -0.4, 0.4),
                            uniform(Shape{outc, hid}, rng, -0.6, 0.6), uniform(Shape{hid}, rng, -0.3, 0.3)});
  }
  p.c = uniform(Shape{outc}, rng, -0.3, 0.3);
  p.hidden_activation = Activation::tanh;
  p.output_activation = Activation::tanh;
  const auto dags = build_lattice_dags(H, W, conn);
  Tensor<double> x = uniform(Shape{H, W, in}, rng);
  const auto acts = dagrnn_forward<double>(x, dags, p);
  const auto w = uniform(acts.output.shape(), rng);
  const auto g = dagrnn_backward<double>(x, acts, dags, p, w);
  auto loss = [&] { return project(dagrnn_forward<double>(x, dags, p).output, w); };
  const double tol = 1e-5;
  compare(out, prefix + ".input", g.input, finite_diff_inplace(loss, x), tol);
  compare(out, prefix + ".c", g.c, finite_diff_inplace(loss, p.c), tol);
  for (std::size_t m = 0; m < p.directions.size(); ++m) {
    auto& d = p.directions[m];
    const std::string name = prefix + "." + to_string(d.direction);
    compare(out, name + ".U", g.directions[m].U, finite_diff_inplace(loss, d.U), tol);
    compare(out, name + ".W", g.directions[m].W, finite_diff_inplace(loss, d.W), tol);
    compare(out, name + ".V", g.directions[m].V, finite_diff_inplace(loss, d.V), tol);
    compare(out, name + ".b", g.directions[m].b, finite_diff_inplace(loss, d.b), tol);
  }
}

}  // namespace

std::vector<GradientCheck> dagrnn_gradient_checks(std::uint64_t seed) {
  std::vector<GradientCheck> out;
  Rng rng(seed);
  for (Connectivity conn : {Connectivity::four, Connectivity::eight}) {
    const std::string c = std::string("dagrnn.") + to_string(conn);
    for (Direction d : kAllDirections) {
      const std::array<Direction, 1> one{d};
      check_dagrnn(out, c + ".single", one, conn, rng);
    }
    check_dagrnn(out, c + ".all", kAllDirections, conn, rng);
  }
  return out;
}

std::vector<GradientCheck> layer_gradient_checks(std::uint64_t seed) {
  std::vector<GradientCheck> out;
  Rng rng(seed);
  const double tol = 1e-5;

  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {2, 1}}) {
    Tensor<double> x = uniform(Shape{6, 6, 2}, rng);
    Conv2dParams<double> p{uniform(Shape{3, 3, 2, 3}, rng), uniform(Shape{3}, rng), stride, pad};
    const auto w = uniform(conv2d_forward(x, p).shape(), rng);
    const auto g = conv2d_backward(x, p, w);
    auto loss = [&] { return project(conv2d_forward(x, p), w); };
    const std::string name = "conv2d.s" + std::to_string(stride) + "p" + std::to_string(pad);
    compare(out, name + ".input", g.input, finite_diff_inplace(loss, x), tol);
    compare(out, name + ".kernels", g.kernels, finite_diff_inplace(loss, p.kernels), tol);
    compare(out, name + ".bias", g.bias, finite_diff_inplace(loss, p.bias), tol);
  }

  {
    // distinct values spaced far beyond the step keep every window's maximum unique
    Tensor<double> x(Shape{6, 6, 2});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = double((i * 37) % x.size()) * 0.01;
    const auto r = maxpool_forward(x, 3, 2);
    const auto w = uniform(r.output.shape(), rng);
    compare(out, "maxpool.input", maxpool_backward(r.record, w),
            finite_diff_inplace([&] { return project(maxpool_forward(x, 3, 2).output, w); }, x), tol);
  }

  {
    Tensor<double> x = uniform(Shape{2, 2, 3}, rng);
    FcParams<double> p{uniform(Shape{5, 12}, rng), uniform(Shape{5}, rng)};
    const auto w = uniform(Shape{5}, rng);
    const auto g = fc_backward(x, p, w);
    auto loss = [&] { return project(fc_forward(x, p), w); };
    compare(out, "fc.input", g.input, finite_diff_inplace(loss, x), tol);
    compare(out, "fc.weights", g.weights, finite_diff_inplace(loss, p.weights), tol);
    compare(out, "fc.bias", g.bias, finite_diff_inplace(loss, p.bias), tol);
  }

  for (Activation a : {Activation::identity, Activation::relu, Activation::tanh, Activation::sigmoid}) {
    Tensor<double> x = uniform(Shape{12}, rng, -2.0, 2.0);
    for (auto& v : x.data()) v += v < 0 ? -0.1 : 0.1;  // away from the relu kink
    const auto w = uniform(Shape{12}, rng);
    const auto g = activation_backward(activation_forward(x, a), w, a);
    compare(out, std::string("activation.") + to_string(a), g,
            finite_diff_inplace([&] { return project(activation_forward(x, a), w); }, x), tol);
  }

  for (std::size_t label : {0u, 1u}) {
    Tensor<double> z = uniform(Shape{2}, rng, -3.0, 3.0);
    const auto g = softmax_cross_entropy_backward(softmax_cross_entropy(z, label).probs, label);
    compare(out, "softmax_cross_entropy.label" + std::to_string(label), g,
            finite_diff_inplace([&] { return double(softmax_cross_entropy(z, label).loss); }, z), tol);
  }

  {
    Tensor<double> a = uniform(Shape{3, 4, 2}, rng);
    Tensor<double> b = uniform(Shape{3, 4, 3}, rng);
    const auto w = uniform(Shape{3, 4, 5}, rng);
    const auto [ga, gb] = concat_channels_backward(w, 2);
    auto loss = [&] { return project(concat_channels(a, b), w); };
    compare(out, "concat.a", ga, finite_diff_inplace(loss, a), tol);
    compare(out, "concat.b", gb, finite_diff_inplace(loss, b), tol);
  }
  return out;
}

std::vector<GradientCheck> network_gradient_checks(std::uint64_t seed) {
  SanetConfig cfg = SanetConfig::tiny();
  cfg.conv_activation = Activation::tanh;
  cfg.fc_activation = Activation::tanh;
  cfg.rnn_hidden_activation = Activation::tanh;
  cfg.rnn_output_activation = Activation::tanh;
  auto net = build_network<double>(cfg, seed);
  Rng rng(seed + 1);
  TrainBatch<double> batch;
  for (std::size_t i = 0; i < 2; ++i) batch.patches.push_back(uniform(Shape{cfg.input_size, cfg.input_size, 3}, rng));
  batch.labels = {1, 0};
  const auto analytic = batch_gradient(net, batch).grads;

  auto loss = [&] {
    const auto logits = forward_scores(net, batch.patches, batch.domain).logits;
    double acc = 0.0;
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
      Tensor<double> z(Shape{2}, std::vector<double>{logits(i, 0), logits(i, 1)});
      acc += softmax_cross_entropy(z, batch.labels[i]).loss;
    }
    return acc / double(batch.labels.size());
  };

  std::vector<const Tensor<double>*> grads;
  analytic.for_each([&](const std::string&, ParamGroup, std::size_t, const Tensor<double>& t) { grads.push_back(&t); });
  std::vector<GradientCheck> out;
  std::size_t slot = 0;
  net.params.for_each([&](const std::string& name, ParamGroup, std::size_t, Tensor<double>& p) {
    compare(out, "network." + name, *grads[slot++], finite_diff_inplace(loss, p, 1e-4), 1e-4);
  });
  return out;
}

bool all_passed(const std::vector<GradientCheck>& checks) {
  for (const auto& c : checks) {
    if (!c.passed()) return false;
  }
  return !checks.empty();
}

}  // namespace sanet
