#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "fortattack/nn.hpp"
#include "fortattack/rng.hpp"
#include "fortattack/tape.hpp"
#include "testutil.hpp"

using namespace fortattack;
using namespace fortattack::nn;

namespace {

Mlp single_layer(Tensor w, Tensor b, Activation act) {
  Mlp net;
  net.layers.push_back({std::move(w), std::move(b), act});
  return net;
}

}  // namespace

TEST_CASE("mlp_forward identity layer passes input through") {
  Mlp net = single_layer(Tensor::matrix(2, 2, {1, 0, 0, 1}),
                         Tensor::vec({0, 0}), Activation::Identity);
  Tensor out = mlp_forward(net, Tensor::vec({3, 4}));
  CHECK(out.at(0) == 3.0);
  CHECK(out.at(1) == 4.0);
}

TEST_CASE("mlp_forward zero weights yield the bias") {
  Mlp net = single_layer(Tensor::matrix(2, 3, {0, 0, 0, 0, 0, 0}),
                         Tensor::vec({1, 2}), Activation::Identity);
  for (auto input : {Tensor::vec({5, -1, 2}), Tensor::vec({0, 100, -7})}) {
    Tensor out = mlp_forward(net, input);
    CHECK(out.at(0) == 1.0);
    CHECK(out.at(1) == 2.0);
  }
}

TEST_CASE("mlp_forward two-layer net matches hand evaluation") {
  Mlp net;
  net.layers.push_back({Tensor::matrix(2, 2, {0.5, -0.25, 0.75, 0.125}),
                        Tensor::vec({0.1, -0.2}), Activation::Tanh});
  net.layers.push_back({Tensor::matrix(1, 2, {1.5, -0.5}),
                        Tensor::vec({0.25}), Activation::Identity});
  const double x0 = 0.3, x1 = -0.7;
  // Oracle: evaluate the two matrix products explicitly.
  const double h0 = std::tanh(0.5 * x0 + -0.25 * x1 + 0.1);
  const double h1 = std::tanh(0.75 * x0 + 0.125 * x1 + -0.2);
  const double expected = 1.5 * h0 + -0.5 * h1 + 0.25;
  Tensor out = mlp_forward(net, Tensor::vec({x0, x1}));
  CHECK(out.numel() == 1);
  CHECK(out.at(0) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("mlp_forward supports batched rows") {
  Mlp net = single_layer(Tensor::matrix(1, 2, {2, 3}), Tensor::vec({1}),
                         Activation::Identity);
  Tensor out = mlp_forward(net, Tensor::matrix(2, 2, {1, 1, 0, -1}));
  CHECK(out.shape == std::vector<int>{2, 1});
  CHECK(out.at(0, 0) == 6.0);
  CHECK(out.at(1, 0) == -2.0);
}

TEST_CASE("mlp_forward rejects dimension mismatch") {
  Mlp net = single_layer(Tensor::matrix(2, 2, {1, 0, 0, 1}),
                         Tensor::vec({0, 0}), Activation::Identity);
  CHECK_THROWS_AS(mlp_forward(net, Tensor::vec({1, 2, 3})), DimensionError);
}

TEST_CASE("mlp_forward is deterministic") {
  Rng rng(7);
  Mlp net = make_mlp(4, {8, 8}, 3, Activation::Tanh, Activation::Identity, rng);
  Tensor input = Tensor::vec({0.2, -0.4, 0.9, 1.3});
  Tensor a = mlp_forward(net, input);
  Tensor b = mlp_forward(net, input);
  CHECK(std::memcmp(a.data.data(), b.data.data(), a.numel() * 8) == 0);
}

TEST_CASE("backward on identity layer: weight grad is outer product") {
  // loss = sum(W x) with zero bias, identity activation.
  Mlp net = single_layer(Tensor::matrix(2, 3, {0.1, 0.2, 0.3, -0.1, 0.4, 0.0}),
                         Tensor::vec({0, 0}), Activation::Identity);
  Tensor input = Tensor::vec({1.5, -2.0, 0.5});

  Tape tape;
  auto vars = tape.register_mlp(net);
  auto x = tape.constant(input);
  auto y = tape.mlp(vars, net, x);
  auto loss = tape.sum(y);
  tape.backward(loss);

  const Tensor& gw = tape.grad(vars.layers[0].first);
  for (int o = 0; o < 2; ++o)
    for (int i = 0; i < 3; ++i)
      CHECK(gw.at(o, i) == doctest::Approx(input.at(i)).epsilon(1e-12));

  // Cross-check against central finite differences, step 1e-5.
  Mlp probe = net;
  auto eval = [&]() {
    Tensor out = mlp_forward(probe, input);
    return out.at(0) + out.at(1);
  };
  for (std::size_t k = 0; k < probe.layers[0].weight.data.size(); ++k) {
    const double fd =
        testutil::central_diff(eval, probe.layers[0].weight.data[k]);
    CHECK(testutil::rel_err(fd, gw.data[k]) < 1e-6);
  }
}

TEST_CASE("backward of a constant loss leaves all gradients at zero") {
  Rng rng(3);
  Mlp net = make_mlp(2, {4}, 2, Activation::Tanh, Activation::Identity, rng);
  Tape tape;
  auto vars = tape.register_mlp(net);
  auto c = tape.constant(Tensor::vec({5.0}));
  auto loss = tape.sum(c);
  tape.backward(loss);
  for (const auto& [w, b] : vars.layers) {
    for (double g : tape.grad(w).data) CHECK(g == 0.0);
    for (double g : tape.grad(b).data) CHECK(g == 0.0);
  }
}

TEST_CASE("backward of w^2 at w=3 gives gradient 6") {
  Tape tape;
  auto w = tape.param(Tensor::vec({3.0}));
  auto loss = tape.mul(w, w);
  tape.backward(loss);
  CHECK(tape.grad(w).at(0) == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("backward rejects losses that are not on the tape") {
  Tape tape;
  auto w = tape.param(Tensor::vec({1.0}));
  (void)w;
  CHECK_THROWS_AS(tape.backward(17), UsageError);
  CHECK_THROWS_AS(tape.backward(-1), UsageError);
  auto v = tape.param(Tensor::vec({1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(v), UsageError);  // not a scalar
}

TEST_CASE("gradient check: random small MLPs vs central differences") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(mix_seed(42, "gradcheck", seed));
    const int n_hidden = rng.uniform_int(3);
    std::vector<int> hidden;
    for (int i = 0; i < n_hidden; ++i) hidden.push_back(2 + rng.uniform_int(15));
    const int in = 1 + rng.uniform_int(6);
    const int out = 1 + rng.uniform_int(6);
    Mlp net = make_mlp(in, hidden, out, Activation::Tanh, Activation::Tanh, rng);
    Tensor input = Tensor::zeros({in});
    for (auto& v : input.data) v = rng.uniform(-1.5, 1.5);

    Tape tape;
    auto vars = tape.register_mlp(net);
    auto y = tape.mlp(vars, net, tape.constant(input));
    tape.backward(tape.sum(y));

    Mlp probe = net;
    auto eval = [&]() {
      Tensor o = mlp_forward(probe, input);
      double s = 0;
      for (double v : o.data) s += v;
      return s;
    };
    for (std::size_t li = 0; li < probe.layers.size(); ++li) {
      auto check_block = [&](Tensor& block, const Tensor& analytic) {
        for (std::size_t k = 0; k < block.data.size(); ++k) {
          const double fd = testutil::central_diff(eval, block.data[k]);
          CHECK(testutil::rel_err(fd, analytic.data[k]) < 1e-4);
        }
      };
      check_block(probe.layers[li].weight, tape.grad(vars.layers[li].first));
      check_block(probe.layers[li].bias, tape.grad(vars.layers[li].second));
    }
  }
}

TEST_CASE("tape replay reproduces forward values bit-exactly") {
  Rng rng(11);
  Mlp net = make_mlp(3, {8}, 2, Activation::Tanh, Activation::Identity, rng);
  Tensor input = Tensor::vec({0.1, -0.2, 0.3});
  auto build = [&](Tape& t) {
    auto vars = t.register_mlp(net);
    return t.sum(t.mlp(vars, net, t.constant(input)));
  };
  Tape t1, t2;
  auto l1 = build(t1);
  auto l2 = build(t2);
  CHECK(std::memcmp(t1.value(l1).data.data(), t2.value(l2).data.data(), 8) ==
        0);
}

TEST_CASE("softmax of equal logits is uniform") {
  Tensor p = softmax(Tensor::vec({0, 0, 0}));
  for (int i = 0; i < 3; ++i)
    CHECK(p.at(i) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax (1, 0) matches scalar evaluation") {
  Tensor p = softmax(Tensor::vec({1, 0}));
  const double e = std::exp(1.0);
  CHECK(p.at(0) == doctest::Approx(e / (e + 1)).epsilon(1e-14));
  CHECK(p.at(1) == doctest::Approx(1 / (e + 1)).epsilon(1e-14));
}

TEST_CASE("masked softmax zeroes excluded entries exactly") {
  Tensor p = softmax_masked(Tensor::vec({5, 5, 5}), {false, true, false});
  CHECK(p.at(0) == 0.5);
  CHECK(p.at(1) == 0.0);
  CHECK(p.at(2) == 0.5);
}

TEST_CASE("softmax rejects fully masked input") {
  CHECK_THROWS_AS(softmax_masked(Tensor::vec({1, 2}), {true, true}),
                  UsageError);
}

TEST_CASE("softmax properties: normalization and shift invariance") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + rng.uniform_int(12);
    Tensor logits = Tensor::zeros({n});
    for (auto& v : logits.data) v = rng.uniform(-30, 30);
    Tensor p = softmax(logits);
    double s = 0;
    for (int i = 0; i < n; ++i) {
      CHECK(p.at(i) > 0);
      s += p.at(i);
    }
    CHECK(std::abs(s - 1.0) < 1e-9);

    const double shift = rng.uniform(-1e3, 1e3);
    Tensor shifted = logits;
    for (auto& v : shifted.data) v += shift;
    Tensor q = softmax(shifted);
    CHECK(testutil::max_abs_diff(p.data, q.data) < 1e-9);
  }
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Tensor w = Tensor::vec({1.0, -2.0, 3.0});
  std::vector<Tensor*> params{&w};
  AdamState st = make_adam_state({&w});
  Tensor before = w;
  adam_step(params, {Tensor::zeros({3})}, st, AdamConfig{});
  CHECK(st.step == 1);
  CHECK(std::memcmp(w.data.data(), before.data.data(), 3 * 8) == 0);
}

TEST_CASE("adam: one step on w^2 decreases w") {
  Tensor w = Tensor::vec({1.0});
  std::vector<Tensor*> params{&w};
  AdamState st = make_adam_state({&w});
  adam_step(params, {Tensor::vec({2.0})}, st, AdamConfig{});  // grad of w^2 at 1
  CHECK(w.at(0) < 1.0);
}

TEST_CASE("adam: three steps match an independent scalar recurrence") {
  const AdamConfig cfg;
  // Oracle: scalar Adam on f(w) = w^2, coded from the update equations.
  double w_ref = 1.0, m = 0, v = 0;
  for (int t = 1; t <= 3; ++t) {
    const double g = 2.0 * w_ref;
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double m_hat = m / (1 - std::pow(cfg.beta1, t));
    const double v_hat = v / (1 - std::pow(cfg.beta2, t));
    w_ref -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }

  Tensor w = Tensor::vec({1.0});
  std::vector<Tensor*> params{&w};
  AdamState st = make_adam_state({&w});
  for (int t = 0; t < 3; ++t)
    adam_step(params, {Tensor::vec({2.0 * w.at(0)})}, st, cfg);
  CHECK(w.at(0) == doctest::Approx(w_ref).epsilon(1e-14));
}

TEST_CASE("adam refuses non-finite gradients and leaves state untouched") {
  Tensor w = Tensor::vec({1.0});
  std::vector<Tensor*> params{&w};
  AdamState st = make_adam_state({&w});
  Tensor bad = Tensor::vec({std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(adam_step(params, {bad}, st, AdamConfig{}), NumericError);
  CHECK(st.step == 0);
  CHECK(w.at(0) == 1.0);
}

TEST_CASE("grad norm clipping rescales to the requested norm") {
  std::vector<Tensor> grads{Tensor::vec({3.0}), Tensor::vec({4.0})};
  CHECK(grad_norm(grads) == doctest::Approx(5.0));
  clip_grad_norm(grads, 1.0);
  CHECK(grad_norm(grads) == doctest::Approx(1.0).epsilon(1e-12));
  // Already-small gradients are untouched.
  std::vector<Tensor> small{Tensor::vec({0.1})};
  clip_grad_norm(small, 1.0);
  CHECK(small[0].at(0) == 0.1);
}

TEST_CASE("mlp binary serialization round-trips bit-exactly") {
  Rng rng(5);
  Mlp net = make_mlp(6, {16, 8}, 4, Activation::Tanh, Activation::Identity,
                     rng);
  std::stringstream ss;
  write_mlp(ss, net);
  Mlp back = read_mlp(ss);
  REQUIRE(back.layers.size() == net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(back.layers[i].act == net.layers[i].act);
    CHECK(std::memcmp(back.layers[i].weight.data.data(),
                      net.layers[i].weight.data.data(),
                      net.layers[i].weight.numel() * 8) == 0);
    CHECK(std::memcmp(back.layers[i].bias.data.data(),
                      net.layers[i].bias.data.data(),
                      net.layers[i].bias.numel() * 8) == 0);
  }
}

TEST_CASE("tape ops used by the losses differentiate correctly") {
  // exp, log_softmax, softplus, clamp, min2, mix, pack, pick, concat, dot.
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = Tensor::zeros({4});
    Tensor b = Tensor::zeros({4});
    for (auto& v : a.data) v = rng.uniform(-2, 2);
    for (auto& v : b.data) v = rng.uniform(-2, 2);

    auto build = [&](const Tensor& av, const Tensor& bv, Tape& t,
                     Tape::VarId& pa, Tape::VarId& pb) {
      pa = t.param(av);
      pb = t.param(bv);
      auto sm = t.log_softmax_vec(pa);
      auto e = t.exp_(t.scale(pb, 0.5));
      auto mixres = t.mix(t.softmax_vec(pb), {sm, e, pa, pb});
      auto packed = t.pack({t.pick(mixres, 0), t.dot(pa, pb),
                            t.sum(t.softplus_(pa))});
      auto cat = t.concat(packed, t.clamp(t.min2(pa, pb), -0.9, 0.9));
      return t.mean(t.tanh_(cat));
    };

    Tape tape;
    Tape::VarId pa, pb;
    auto loss = build(a, b, tape, pa, pb);
    tape.backward(loss);

    Tensor pa_probe = a, pb_probe = b;
    auto eval = [&]() {
      Tape t;
      Tape::VarId qa, qb;
      auto l = build(pa_probe, pb_probe, t, qa, qb);
      return t.value(l).at(0);
    };
    for (std::size_t k = 0; k < a.data.size(); ++k) {
      const double fd = testutil::central_diff(eval, pa_probe.data[k]);
      CHECK(testutil::rel_err(fd, tape.grad(pa).data[k]) < 1e-4);
    }
    for (std::size_t k = 0; k < b.data.size(); ++k) {
      const double fd = testutil::central_diff(eval, pb_probe.data[k]);
      CHECK(testutil::rel_err(fd, tape.grad(pb).data[k]) < 1e-4);
    }
  }
}
