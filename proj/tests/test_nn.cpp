#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "support/grad_check.hpp"
#include "ttn/error.hpp"
#include "ttn/nn.hpp"

using namespace ttn;
using namespace ttn::nn;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

// Naive sigmoid cross-entropy, written independently of the library.
double naive_sce(double x, double t) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return -(t * std::log(s) + (1.0 - t) * std::log(1.0 - s));
}

NetParams single_param(const NetSpec& spec, std::size_t layer, Tensor w, Tensor b) {
  auto p = init_params(spec, 0);
  p.layers[layer].weight = std::move(w);
  p.layers[layer].bias = std::move(b);
  return p;
}

NetSpec small_net(std::size_t k) {
  NetSpec s;
  s.input = {2, 8, 8};
  s.layers = {LayerSpec::conv2d("c1", 3, 3, 1, 1), LayerSpec::relu("r1"),   LayerSpec::maxpool2d("p1", 2, 2),
              LayerSpec::conv2d("c2", 4, 3, 1, 0), LayerSpec::relu("r2"),   LayerSpec::flatten("f"),
              LayerSpec::dense("d", k)};
  return s;
}

}  // namespace

TEST_CASE("shape inference and spec validation") {
  const auto spec = tiny_topic_net(40);
  const auto shapes = spec.output_shapes();
  CHECK(shapes[spec.find("pool2").value()] == Shape{32, 8, 8});
  CHECK(shapes[spec.find("fc7").value()] == Shape{128});
  CHECK(spec.output_dim() == 40);
  CHECK(resolve_layer_alias(spec, "pool5") == "pool2");
  CHECK(NetSpec::from_json(spec.to_json()) == spec);

  NetSpec bad;
  bad.input = {1, 4, 4};
  bad.layers = {LayerSpec::dense("d", 3)};
  CHECK(code_of([&] { bad.output_shapes(); }) == ErrorCode::ShapeMismatch);
  bad.layers = {LayerSpec::conv2d("c", 2, 5), LayerSpec::flatten("f")};
  CHECK(code_of([&] { bad.output_shapes(); }) == ErrorCode::ShapeMismatch);

  const auto params = init_params(spec, 1);
  CHECK(code_of([&] { forward(spec, params, Tensor({1, 3, 28, 28})); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("convolution and pooling examples") {
  SUBCASE("1x1 identity kernel") {
    NetSpec s{{1, 3, 3}, {LayerSpec::conv2d("c", 1, 1), LayerSpec::flatten("f")}};
    const auto p = single_param(s, 0, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}, 0.0));
    const Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(forward(s, p, x).logits.values() == x.values());
  }
  SUBCASE("2x2 ones kernel over a 3x3 input") {
    NetSpec s{{1, 3, 3}, {LayerSpec::conv2d("c", 1, 2), LayerSpec::flatten("f")}};
    const auto p = single_param(s, 0, Tensor({1, 1, 2, 2}, 1.0), Tensor({1}, 0.0));
    const Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(forward(s, p, x).logits.values() == std::vector<double>{12, 16, 24, 28});
  }
  SUBCASE("2x2 max pool") {
    NetSpec s{{1, 2, 2}, {LayerSpec::maxpool2d("p", 2, 2), LayerSpec::flatten("f")}};
    const auto p = init_params(s, 0);
    CHECK(forward(s, p, Tensor({1, 1, 2, 2}, {1, 2, 3, 4})).logits.values() == std::vector<double>{4});
  }
  SUBCASE("padding and stride against a hand loop") {
    NetSpec s{{2, 5, 5}, {LayerSpec::conv2d("c", 3, 3, 2, 1), LayerSpec::flatten("f")}};
    const auto p = init_params(s, 4);
    const auto x = oracle::random_tensor({1, 2, 5, 5}, 6);
    const auto out = forward(s, p, x).logits;
    const auto& w = p.layers[0].weight;
    std::size_t pos = 0;
    for (std::size_t o = 0; o < 3; ++o) {
      for (int oy = 0; oy < 3; ++oy) {
        for (int ox = 0; ox < 3; ++ox) {
          double acc = p.layers[0].bias[o];
          for (std::size_t c = 0; c < 2; ++c) {
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const int y = oy * 2 - 1 + ky, xx = ox * 2 - 1 + kx;
                if (y < 0 || y >= 5 || xx < 0 || xx >= 5) continue;
                acc += w[((o * 2 + c) * 3 + ky) * 3 + kx] * x[(c * 5 + y) * 5 + xx];
              }
            }
          }
          CHECK(out[pos++] == doctest::Approx(acc).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("forward is pure and thread-count independent") {
  const auto spec = tiny_topic_net(6);
  const auto params = init_params(spec, 3);
  const auto x = oracle::random_tensor({5, 3, 32, 32}, 8);
  const auto a = forward(spec, params, x, 1);
  CHECK(forward(spec, params, x, 1).logits == a.logits);
  const auto b = forward(spec, params, x, 4);
  CHECK(b.logits == a.logits);
  const auto r = oracle::random_tensor({5, 6}, 2);
  const auto g1 = backward(spec, params, a.cache, r, true, 1);
  const auto g4 = backward(spec, params, b.cache, r, true, 3);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    CHECK(g1.layers[l].weight == g4.layers[l].weight);
    CHECK(g1.layers[l].bias == g4.layers[l].bias);
  }
  CHECK(g1.input == g4.input);
}

TEST_CASE("sigmoid cross-entropy") {
  SUBCASE("worked examples") {
    auto r = sigmoid_cross_entropy(Tensor({1, 1}, 0.0), Tensor({1, 1}, 0.5));
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(r.grad[0] == 0.0);
    r = sigmoid_cross_entropy(Tensor({1, 1}, 0.0), Tensor({1, 1}, 1.0));
    CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(r.grad[0] == -0.5);
  }
  SUBCASE("stationary at t = sigmoid(x)") {
    const auto x = oracle::random_tensor({3, 4}, 1, -4, 4);
    Tensor t(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) t[i] = sigmoid(x[i]);
    const auto r = sigmoid_cross_entropy(x, t);
    for (double g : r.grad.values()) CHECK(g == 0.0);
  }
  SUBCASE("matches the naive formula and its finite difference") {
    const auto x = oracle::random_tensor({4, 3}, 2, -5, 5);
    const auto t = oracle::random_tensor({4, 3}, 3, 0, 1);
    const auto r = sigmoid_cross_entropy(x, t);
    double naive = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) naive += naive_sce(x[i], t[i]);
    CHECK(r.loss == doctest::Approx(naive / 4.0).epsilon(1e-12));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double fd = (naive_sce(x[i] + 1e-6, t[i]) - naive_sce(x[i] - 1e-6, t[i])) / 2e-6 / 4.0;
      CHECK(oracle::rel_error(r.grad[i], fd) < 1e-6);
    }
  }
  SUBCASE("large logits stay finite") {
    const auto r = sigmoid_cross_entropy(Tensor({1, 2}, {800.0, -800.0}), Tensor({1, 2}, {0.0, 1.0}));
    CHECK(r.loss == doctest::Approx(1600.0));
  }
  SUBCASE("line search minimum sits at logit(t)") {
    for (double t : {0.05, 0.3, 0.5, 0.8, 0.97}) {
      const double target = std::log(t / (1.0 - t));
      double best_x = 0.0, best = 1e300;
      for (int i = -4000; i <= 4000; ++i) {
        const double x = target + i * 1e-3;
        const double l = sigmoid_cross_entropy(Tensor({1, 1}, x), Tensor({1, 1}, t)).loss;
        if (l < best) {
          best = l;
          best_x = x;
        }
      }
      CHECK(std::abs(best_x - target) <= 2e-3);
    }
  }
  SUBCASE("errors") {
    CHECK(code_of([] { sigmoid_cross_entropy(Tensor({1, 2}), Tensor({2, 1})); }) == ErrorCode::ShapeMismatch);
    CHECK(code_of([] { sigmoid_cross_entropy(Tensor({1, 1}, NAN), Tensor({1, 1}, 0.5)); }) ==
          ErrorCode::NonFiniteInput);
  }
}

TEST_CASE("softmax cross-entropy") {
  const Tensor x({2, 3}, {1.0, 2.0, 3.0, 0.0, 0.0, 0.0});
  const auto r = softmax_cross_entropy(x, {2, 0});
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(r.loss == doctest::Approx((-(3.0 - std::log(z)) + std::log(3.0)) / 2.0).epsilon(1e-12));
  CHECK(r.grad[2] == doctest::Approx((std::exp(3.0) / z - 1.0) / 2.0).epsilon(1e-12));
  CHECK(r.grad[3] == doctest::Approx((1.0 / 3.0 - 1.0) / 2.0).epsilon(1e-12));
  CHECK_THROWS_AS(softmax_cross_entropy(x, {3, 0}), Error);
}

TEST_CASE("finite-difference gradient check per layer") {
  std::vector<NetSpec> specs = {
      {{2, 5, 5}, {LayerSpec::conv2d("conv", 3, 3, 1, 1), LayerSpec::flatten("f")}},
      {{2, 6, 6}, {LayerSpec::conv2d("conv_s2", 2, 3, 2, 0), LayerSpec::flatten("f")}},
      {{2, 4, 4}, {LayerSpec::relu("relu"), LayerSpec::flatten("f")}},
      {{2, 6, 6}, {LayerSpec::maxpool2d("pool", 2, 2), LayerSpec::flatten("f")}},
      {{1, 5, 5}, {LayerSpec::maxpool2d("pool_overlap", 3, 2), LayerSpec::flatten("f")}},
      {{3, 2, 2}, {LayerSpec::flatten("flatten")}},
      {{3, 2, 2}, {LayerSpec::flatten("f"), LayerSpec::dense("dense", 4)}},
  };
  for (std::size_t i = 0; i < specs.size(); ++i) {
    CAPTURE(specs[i].layers[0].name);
    const auto params = init_params(specs[i], 10 + i);
    auto batch = oracle::random_tensor({2, specs[i].input[0], specs[i].input[1], specs[i].input[2]}, 20 + i);
    const auto res = oracle::check_gradients(specs[i], params, batch, 30 + i);
    CAPTURE(res.worst);
    CHECK(res.checked > 0);
    CHECK(res.kinked == 0);
    CHECK(res.max_rel < 1e-4);
  }
}

TEST_CASE("finite-difference gradient check on composed nets") {
  SUBCASE("2-conv/1-dense over 8x8, every parameter") {
    const auto spec = small_net(3);
    const auto res = oracle::check_gradients(spec, init_params(spec, 5), oracle::random_tensor({2, 2, 8, 8}, 6), 7);
    CAPTURE(res.worst);
    CHECK(res.max_rel < 1e-4);
  }
  SUBCASE("reference topic net, sampled parameters") {
    const auto spec = tiny_topic_net(5);
    auto params = init_params(spec, 8);
    // nonzero biases so the bias paths are exercised away from init
    Rng rng(4);
    for (auto& b : params.layers)
      for (auto& v : b.bias.values()) v = rng.uniform(-0.1, 0.1);
    const auto res = oracle::check_gradients(spec, params, oracle::random_tensor({2, 3, 32, 32}, 9), 10, 25);
    CAPTURE(res.worst);
    MESSAGE("checked " << res.checked << ", kinked " << res.kinked);
    CHECK(res.max_rel < 1e-4);
    CHECK(res.kinked * 20 <= res.checked + res.kinked);
  }
}

TEST_CASE("backward linearity examples") {
  const auto spec = small_net(3);
  const auto params = init_params(spec, 2);
  const auto x = oracle::random_tensor({1, 2, 8, 8}, 3);
  const auto fwd = forward(spec, params, x);

  const auto zero = backward(spec, params, fwd.cache, Tensor({1, 3}), true);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    for (double v : zero.layers[l].weight.values()) CHECK(v == 0.0);
    for (double v : zero.layers[l].bias.values()) CHECK(v == 0.0);
  }
  for (double v : zero.input.values()) CHECK(v == 0.0);

  const auto r = oracle::random_tensor({1, 3}, 4);
  const auto one = backward(spec, params, fwd.cache, r);
  Tensor x2({2, 2, 8, 8});
  std::copy(x.values().begin(), x.values().end(), x2.values().begin());
  std::copy(x.values().begin(), x.values().end(), x2.values().begin() + 128);
  Tensor r2({2, 3}, {r[0], r[1], r[2], r[0], r[1], r[2]});
  const auto two = backward(spec, params, forward(spec, params, x2).cache, r2);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    for (std::size_t i = 0; i < one.layers[l].weight.size(); ++i)
      CHECK(two.layers[l].weight[i] == 2.0 * one.layers[l].weight[i]);
    for (std::size_t i = 0; i < one.layers[l].bias.size(); ++i)
      CHECK(two.layers[l].bias[i] == 2.0 * one.layers[l].bias[i]);
  }
  CHECK(code_of([&] { backward(spec, params, fwd.cache, Tensor({1, 4})); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("optimizer schedule and update") {
  const auto pre = SgdConfig::pretrain();
  CHECK(learning_rate(pre, 0) == 0.001);
  CHECK(learning_rate(pre, 49999) == 0.001);
  CHECK(learning_rate(pre, 50000) == 1e-4);
  CHECK(learning_rate(pre, 100000) == 1e-5);
  CHECK(pre.momentum == 0.9);
  CHECK(pre.batch_size == 64);
  const auto ft = SgdConfig::finetune();
  CHECK(learning_rate(ft, 0) == 1e-4);
  CHECK(learning_rate(ft, 30000) == 1e-5);
  CHECK(SgdConfig::from_json(pre.to_json()) == pre);

  NetSpec s{{1, 1, 1}, {LayerSpec::flatten("f"), LayerSpec::dense("d", 1)}};
  auto p = single_param(s, 1, Tensor({1, 1}, 1.0), Tensor({1}, 0.0));
  Gradients g;
  g.layers.resize(2);
  g.layers[1].weight = Tensor({1, 1}, 0.5);
  g.layers[1].bias = Tensor({1}, 0.0);
  SgdConfig cfg{0.1, 1.0, 1000, 0.0, 1, 10};
  sgd_step(p, g, cfg, 0);
  CHECK(p.layers[1].weight[0] == doctest::Approx(0.95).epsilon(1e-15));

  // momentum accumulates: v1 = -0.05, v2 = 0.9 v1 - 0.05
  auto q = single_param(s, 1, Tensor({1, 1}, 1.0), Tensor({1}, 0.0));
  cfg.momentum = 0.9;
  sgd_step(q, g, cfg, 0);
  sgd_step(q, g, cfg, 1);
  CHECK(q.layers[1].weight[0] == doctest::Approx(1.0 - 0.05 - 0.095).epsilon(1e-15));

  auto bad = pre;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = pre;
  bad.lr_decay_factor = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("parameter initialization") {
  const auto spec = tiny_topic_net(4);
  const auto a = init_params(spec, 42);
  CHECK(init_params(spec, 42) == a);
  CHECK_FALSE(init_params(spec, 43) == a);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    for (double v : a.layers[l].bias.values()) CHECK(v == 0.0);
    for (double v : a.velocity[l].weight.values()) CHECK(v == 0.0);
  }
  NetSpec wide{{100, 1, 1}, {LayerSpec::flatten("f"), LayerSpec::dense("d", 100)}};
  const auto w = init_params(wide, 1).layers[1].weight.values();
  REQUIRE(w.size() == 10000);
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / 10000.0;
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / 9999.0);
  CHECK(std::abs(sd - std::sqrt(2.0 / 100.0)) <= 0.2 * std::sqrt(2.0 / 100.0));
}

TEST_CASE("single dense layer training decreases loss monotonically") {
  NetSpec s{{4, 1, 1}, {LayerSpec::flatten("f"), LayerSpec::dense("d", 2)}};
  auto params = init_params(s, 3);
  const auto x = oracle::random_tensor({16, 4, 1, 1}, 5);
  // targets from a fixed linear teacher: linearly realizable soft labels
  const std::vector<double> teacher = {1.5, -2.0, 0.5, 1.0, -1.0, 0.5, 2.0, -0.5};
  Tensor t({16, 2});
  for (std::size_t b = 0; b < 16; ++b)
    for (std::size_t k = 0; k < 2; ++k) {
      double z = 0.0;
      for (std::size_t j = 0; j < 4; ++j) z += teacher[k * 4 + j] * x[b * 4 + j];
      t[b * 2 + k] = sigmoid(z);
    }
  const SgdConfig cfg{0.5, 1.0, 1000, 0.0, 16, 100};
  double prev = 1e300;
  for (std::size_t it = 0; it < 100; ++it) {
    const auto fwd = forward(s, params, x);
    const auto loss = sigmoid_cross_entropy(fwd.logits, t);
    REQUIRE(loss.loss < prev);
    prev = loss.loss;
    sgd_step(params, backward(s, params, fwd.cache, loss.grad), cfg, it);
  }
}

TEST_CASE("weights file round trip") {
  const auto spec = small_net(4);
  auto params = init_params(spec, 9);
  params.velocity[0].weight[3] = 0.25;
  const auto bytes = serialize_weights(spec, params, {{"seed", 9}, {"iteration", 12}});
  CHECK(bytes.substr(0, 8) == std::string("TTNNET1\0", 8));
  const auto back = deserialize_weights(bytes);
  CHECK(back.spec == spec);
  CHECK(back.params == params);
  CHECK(back.header.at("iteration") == 12);
  CHECK(code_of([&] { deserialize_weights(bytes.substr(0, bytes.size() - 8)); }) == ErrorCode::CorruptFile);
  auto wrong = bytes;
  wrong[0] = 'X';
  CHECK(code_of([&] { deserialize_weights(wrong); }) == ErrorCode::FormatVersionMismatch);
}
