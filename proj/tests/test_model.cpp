#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "doctest.h"
#include "sanet/gradcheck.hpp"
#include "sanet/model.hpp"
#include "test_util.hpp"

using namespace sanet;
using sanet::testing::block_domain;
using sanet::testing::param_values;
using sanet::testing::random_tensor;

namespace {

SanetConfig tanh_config() {
  SanetConfig c = SanetConfig::tiny();
  c.conv_activation = Activation::tanh;
  c.fc_activation = Activation::tanh;
  c.rnn_hidden_activation = Activation::tanh;
  c.rnn_output_activation = Activation::tanh;
  return c;
}

template <typename T>
std::vector<Tensor<T>> random_patches(std::size_t n, std::size_t size, Rng& rng) {
  std::vector<Tensor<T>> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_tensor<T>(Shape{size, size, 3}, rng));
  return out;
}

}  // namespace

TEST_CASE("tiny network geometry follows the conv/pool arithmetic") {
  const auto net = build_network<float>(SanetConfig::tiny(), 1);
  // 35 -> conv5/2 -> 16 -> pool3/2 -> 7 ; 7 -> conv3/1 pad1 -> 7 -> pool3/2 -> 3 ; 3 -> 3 -> pool2/1 -> 2
  CHECK(net.pooled_shapes()[0] == Shape{7, 7, 8});
  CHECK(net.pooled_shapes()[1] == Shape{3, 3, 12});
  CHECK(net.pooled_shapes()[2] == Shape{2, 2, 16});
  CHECK(net.stage_output_shapes()[0] == Shape{7, 7, 16});
  CHECK(net.stage_output_shapes()[1] == Shape{3, 3, 24});
  CHECK(net.params.stages[1].conv.kernels.shape() == Shape{3, 3, 16, 12});
  CHECK(net.feature_dim() == 2 * 2 * 32);

  auto plain = SanetConfig::tiny();
  plain.disable_fusion();
  const auto cnn = build_network<float>(plain, 1);
  CHECK(cnn.params.stages[1].conv.kernels.shape() == Shape{3, 3, 8, 12});
  CHECK(cnn.feature_dim() == 2 * 2 * 16);
}

TEST_CASE("default geometry of the first stage") {
  const auto cfg = SanetConfig::standard();
  CHECK(conv_output_extent(107, 7, 2, 0) == 51);
  CHECK(conv_output_extent(51, 3, 2, 0) == 25);
  CHECK(cfg.stages[0].output_channels() == 2 * 96);
  CHECK(cfg.stages[0].hidden() == 96);
}

TEST_CASE("configuration validation") {
  auto c = SanetConfig::tiny();
  c.batch_negatives = c.batch_negative_pool + 1;
  CHECK_THROWS(c.validate());
  c = SanetConfig::tiny();
  c.num_domains = 0;
  CHECK_THROWS(c.validate());
  c = SanetConfig::tiny();
  c.input_size = 9;
  CHECK_THROWS_AS(build_network<float>(c, 0), ShapeError);
}

TEST_CASE("initialisation is a function of the seed") {
  const auto a = build_network<float>(SanetConfig::tiny(), 42);
  const auto b = build_network<float>(SanetConfig::tiny(), 42);
  const auto c = build_network<float>(SanetConfig::tiny(), 43);
  CHECK(param_values(a.params) == param_values(b.params));
  CHECK(param_values(a.params) != param_values(c.params));
  CHECK(a.parameter_count() == param_values(a.params).size());
}

TEST_CASE("scores") {
  auto net = build_network<float>(SanetConfig::tiny(), 3);
  Rng rng(4);
  const auto patches = random_patches<float>(8, 35, rng);

  SUBCASE("identical inputs give identical scores") {
    const auto r = forward_scores(net, {patches[0], patches[0]}, 0);
    CHECK(r.positive[0] == r.positive[1]);
  }
  SUBCASE("batched scoring equals the per-sample loop") {
    const auto batch = forward_scores(net, patches, 0);
    for (std::size_t i = 0; i < patches.size(); ++i) {
      const auto cache = forward_features(net, patches[i]);
      const auto head = forward_head(net, cache.features, 0);
      CHECK(std::abs(batch.logits(i, 0) - head.logits[0]) < 1e-6);
      CHECK(std::abs(batch.logits(i, 1) - head.logits[1]) < 1e-6);
    }
  }
  SUBCASE("zero branch weights give probability one half") {
    net.params.branches[0].weights.fill(0.0f);
    net.params.branches[0].bias.fill(0.0f);
    for (float p : forward_scores(net, patches, 0).positive) CHECK(p == 0.5f);
  }
  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(forward_scores(net, patches, 1), std::out_of_range);
    CHECK_THROWS_AS(forward_scores(net, {Tensor<float>(Shape{34, 35, 3})}, 0), ShapeError);
  }
}

TEST_CASE("a zero learning rate leaves parameters unchanged") {
  auto cfg = SanetConfig::tiny();
  cfg.lr_cnn = cfg.lr_rnn = cfg.lr_fc = 0.0;
  auto net = build_network<float>(cfg, 5);
  const auto before = param_values(net.params);
  Rng rng(6);
  TrainBatch<float> batch{random_patches<float>(4, 35, rng), {1, 0, 1, 0}, 0};
  Optimizer<float> opt(net);
  const auto r = backward_and_step(net, opt, batch);
  CHECK(r.loss > 0.0f);
  CHECK(param_values(net.params) == before);
}

TEST_CASE("a single batch can be overfitted") {
  auto net = build_network<float>(SanetConfig::tiny(), 7);
  Rng rng(8);
  TrainBatch<float> batch{random_patches<float>(4, 35, rng), {1, 0, 1, 0}, 0};
  Optimizer<float> opt(net);
  const float initial = backward_and_step(net, opt, batch).loss;
  float last = initial;
  for (int i = 1; i < 50; ++i) last = backward_and_step(net, opt, batch).loss;
  last = batch_gradient(net, batch).loss;
  CHECK(last < initial);
  CHECK(last < 0.1f);
}

TEST_CASE("loss is non-increasing with a small learning rate") {
  auto cfg = SanetConfig::tiny();
  cfg.lr_cnn = cfg.lr_rnn = cfg.lr_fc = 1e-4;
  cfg.momentum = 0.0;
  auto net = build_network<double>(cfg, 9);
  Rng rng(10);
  TrainBatch<double> batch{random_patches<double>(4, 35, rng), {1, 0, 1, 0}, 0};
  Optimizer<double> opt(net);
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 10; ++i) {
    const double loss = backward_and_step(net, opt, batch).loss;
    CHECK(loss <= prev);
    prev = loss;
  }
}

TEST_CASE("end-to-end gradient on sampled coordinates") {
  auto net = build_network<double>(tanh_config(), 11);
  Rng rng(12);
  TrainBatch<double> batch{random_patches<double>(2, 35, rng), {1, 0}, 0};
  const auto analytic = batch_gradient(net, batch).grads;
  auto loss = [&] { return double(batch_gradient(net, batch).loss); };

  std::vector<const Tensor<double>*> grads;
  analytic.for_each([&](const std::string&, ParamGroup, std::size_t, const Tensor<double>& t) { grads.push_back(&t); });
  std::size_t slot = 0;
  net.params.for_each([&](const std::string& name, ParamGroup, std::size_t, Tensor<double>& p) {
    const Tensor<double>& g = *grads[slot++];
    double worst = 0.0;
    for (int s = 0; s < 4; ++s) {
      const std::size_t i = rng.below(p.size());
      const double saved = p[i];
      p[i] = saved + 1e-5;
      const double up = loss();
      p[i] = saved - 1e-5;
      const double down = loss();
      p[i] = saved;
      worst = std::max(worst, relative_error(g[i], (up - down) / 2e-5));
    }
    CAPTURE(name);
    CHECK(worst < 1e-4);
  });
}

TEST_CASE("branches other than the active domain never move") {
  auto cfg = SanetConfig::tiny();
  cfg.num_domains = 3;
  cfg.batch_positives = 4;
  cfg.batch_negative_pool = 16;
  cfg.batch_negatives = 4;
  auto net = build_network<float>(cfg, 13);
  Rng rng(14);
  std::vector<DomainDataset<float>> domains;
  for (std::size_t k = 0; k < 3; ++k) domains.push_back(block_domain<float>(k, 35, 8, 24, rng));

  auto snapshot = net.params;
  std::size_t violations = 0, nonzero_inactive = 0;
  auto check_step = [&](std::size_t active) {
    for (std::size_t j = 0; j < 3; ++j) {
      const bool same = param_values(SanetParams<float>{{}, {}, {snapshot.branches[j]}}) ==
                        param_values(SanetParams<float>{{}, {}, {net.params.branches[j]}});
      if (j != active && !same) ++violations;
    }
  };
  std::size_t last = 0;
  TrainOptions opts;
  opts.iterations = 9;
  opts.seed = 15;
  opts.stop_on_convergence = false;
  train_multidomain<float>(net, domains, opts, [&](std::size_t t, const TrainBatch<float>& b, const SanetParams<float>& g) {
    CHECK(b.domain == t % 3);
    for (std::size_t j = 0; j < 3; ++j) {
      if (j == b.domain) continue;
      for (float v : param_values(SanetParams<float>{{}, {}, {g.branches[j]}})) nonzero_inactive += v != 0.0f;
    }
    if (t > 0) check_step((t - 1) % 3);
    snapshot = net.params;
    last = t;
  });
  check_step(last % 3);
  CHECK(violations == 0);
  CHECK(nonzero_inactive == 0);
}

TEST_CASE("single-domain training is repeated backward_and_step") {
  auto cfg = SanetConfig::tiny();
  cfg.batch_positives = 4;
  cfg.batch_negative_pool = 16;
  cfg.batch_negatives = 4;
  cfg.epoch_iterations = 1000;
  Rng rng(16);
  std::vector<DomainDataset<float>> domains{block_domain<float>(0, 35, 8, 24, rng)};

  auto trained = build_network<float>(cfg, 17);
  std::vector<TrainBatch<float>> seen;
  TrainOptions opts;
  opts.iterations = 6;
  opts.seed = 18;
  opts.stop_on_convergence = false;
  const auto log = train_multidomain<float>(trained, domains, opts,
                                            [&](std::size_t, const TrainBatch<float>& b, const SanetParams<float>&) { seen.push_back(b); });

  auto replay = build_network<float>(cfg, 17);
  Optimizer<float> opt(replay);
  for (std::size_t i = 0; i < seen.size(); ++i) {
    const auto r = backward_and_step(replay, opt, seen[i]);
    CHECK(double(r.loss) == log.rows[i].loss);
  }
  CHECK(param_values(replay.params) == param_values(trained.params));
}

TEST_CASE("training log and dataset errors") {
  auto net = build_network<float>(SanetConfig::tiny(), 19);
  std::vector<DomainDataset<float>> empty(1);
  CHECK_THROWS(train_multidomain<float>(net, empty, TrainOptions{}));
  TrainingLog log;
  log.rows.push_back({0, 0, 0.5, 0.75});
  CHECK(training_log_csv(log) == "iteration,domain,loss,accuracy\n0,0,0.500000,0.7500\n");
}

TEST_CASE("top-M selection equals a full sort") {
  Rng rng(20);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(256);
    const std::size_t m = rng.below(n + 1);
    std::vector<float> scores(n);
    // coarse quantisation produces plenty of ties
    for (auto& s : scores) s = float(rng.below(8)) / 8.0f;
    std::vector<std::pair<float, std::size_t>> keyed;
    for (std::size_t i = 0; i < n; ++i) keyed.push_back({-scores[i], i});
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::size_t> expected;
    for (std::size_t i = 0; i < m; ++i) expected.push_back(keyed[i].second);
    CHECK(select_top(scores, m) == expected);
  }
  CHECK_THROWS(select_top(std::vector<float>(3), 4));
}

TEST_CASE("hard negative mining through the network") {
  auto net = build_network<float>(SanetConfig::tiny(), 21);
  Rng rng(22);
  const auto pool = random_patches<float>(64, 35, rng);
  const auto scores = forward_scores(net, pool, 0).positive;

  auto mined = mine_hard_negatives(net, pool, 0, 8);
  CHECK(mined == select_top(scores, 8));
  for (std::size_t i = 1; i < mined.size(); ++i) CHECK(scores[mined[i - 1]] >= scores[mined[i]]);

  const auto all = mine_hard_negatives(net, pool, 0, 64);
  CHECK(all.size() == 64);
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(scores[all[i - 1]] >= scores[all[i]]);

  net.params.branches[0].weights.fill(0.0f);
  net.params.branches[0].bias.fill(0.0f);
  CHECK(mine_hard_negatives(net, pool, 0, 5) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK_THROWS(mine_hard_negatives(net, pool, 0, 65));
}

TEST_CASE("specialisation keeps the shared layers") {
  auto cfg = SanetConfig::tiny();
  cfg.num_domains = 3;
  const auto net = build_network<float>(cfg, 23);
  const auto a = specialize_for_tracking(net, 24);
  const auto b = specialize_for_tracking(net, 24);
  CHECK(a.num_branches() == 1);
  CHECK(param_values(SanetParams<float>{a.params.stages, a.params.fc, {}}) ==
        param_values(SanetParams<float>{net.params.stages, net.params.fc, {}}));
  CHECK(param_values(a.params) == param_values(b.params));
  Rng rng(25);
  const auto r = forward_scores(a, random_patches<float>(1, 35, rng), 0);
  CHECK(r.logits.shape() == Shape{1, 2});
}

TEST_CASE("a silenced recurrent path reduces to the plain CNN") {
  auto fused = build_network<double>(SanetConfig::tiny(), 26);
  for (auto& st : fused.params.stages) {
    for (auto& d : st.rnn.directions) d.V.fill(0.0);
    st.rnn.c.fill(0.0);
  }
  auto plain_cfg = SanetConfig::tiny();
  plain_cfg.disable_fusion();
  auto plain = build_network<double>(plain_cfg, 0);

  // The plain network sees only the pooled channels, i.e. the fused
  // kernels restricted to their first C_{s-1} input channels.
  for (std::size_t s = 0; s < fused.params.stages.size(); ++s) {
    const auto& fk = fused.params.stages[s].conv.kernels;
    auto& pk = plain.params.stages[s].conv.kernels;
    for (std::size_t a = 0; a < pk.dim(0); ++a)
      for (std::size_t b = 0; b < pk.dim(1); ++b)
        for (std::size_t ci = 0; ci < pk.dim(2); ++ci)
          for (std::size_t co = 0; co < pk.dim(3); ++co) {
            const std::size_t fi[] = {a, b, ci, co}, pi[] = {a, b, ci, co};
            pk.at(pi) = fk.at(fi);
          }
    plain.params.stages[s].conv.bias = fused.params.stages[s].conv.bias;
  }
  const Shape ff = fused.features_shape(), pf = plain.features_shape();
  auto& w1 = plain.params.fc[0].weights;
  for (std::size_t o = 0; o < w1.dim(0); ++o)
    for (std::size_t i = 0; i < pf[0]; ++i)
      for (std::size_t j = 0; j < pf[1]; ++j)
        for (std::size_t c = 0; c < pf[2]; ++c)
          w1(o, (i * pf[1] + j) * pf[2] + c) = fused.params.fc[0].weights(o, (i * ff[1] + j) * ff[2] + c);
  plain.params.fc[0].bias = fused.params.fc[0].bias;
  for (std::size_t l = 1; l < plain.params.fc.size(); ++l) plain.params.fc[l] = fused.params.fc[l];
  plain.params.branches = fused.params.branches;

  Rng rng(27);
  const auto patches = random_patches<double>(3, 35, rng);
  const auto a = forward_scores(fused, patches, 0);
  const auto b = forward_scores(plain, patches, 0);
  for (std::size_t i = 0; i < a.logits.size(); ++i) CHECK(std::abs(a.logits[i] - b.logits[i]) < 1e-12);
}

TEST_CASE("a non-finite loss names the first broken layer") {
  auto net = build_network<float>(SanetConfig::tiny(), 28);
  net.params.stages[0].conv.kernels[0] = std::numeric_limits<float>::quiet_NaN();
  Rng rng(29);
  TrainBatch<float> batch{random_patches<float>(2, 35, rng), {1, 0}, 0};
  Optimizer<float> opt(net);
  try {
    backward_and_step(net, opt, batch);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("stage1.conv") != std::string::npos);
  }
}

TEST_CASE("the recurrent learning rate decays per epoch") {
  const auto net = build_network<float>(SanetConfig::standard(), 30);
  Optimizer<float> opt(net);
  CHECK(opt.learning_rate(ParamGroup::rnn) == doctest::Approx(1e-3));
  opt.epoch = 3;
  CHECK(opt.learning_rate(ParamGroup::rnn) == doctest::Approx(1e-3 * 0.9 * 0.9 * 0.9));
  CHECK(opt.learning_rate(ParamGroup::conv) == doctest::Approx(1e-4));
}
