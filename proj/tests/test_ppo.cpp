#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>

#include "fortattack/ppo.hpp"
#include "fortattack/replay.hpp"
#include "testutil.hpp"

using namespace fortattack;
using namespace fortattack::ppo;

namespace {

// Brute-force oracle: the lambda-weighted mixture of n-step advantages,
// truncated at the first done flag (or the end of the array, where the
// bootstrap value is zero by convention).
std::vector<double> gae_oracle(const std::vector<double>& rewards,
                               const std::vector<double>& values,
                               const std::vector<bool>& dones, double gamma,
                               double lambda) {
  const int n = static_cast<int>(rewards.size());
  std::vector<double> out(n, 0.0);
  for (int t = 0; t < n; ++t) {
    int d = t;
    while (d < n - 1 && !dones[d]) ++d;
    const int horizon = d - t + 1;  // steps remaining in this segment
    double mix = 0;
    for (int steps = 1; steps <= horizon; ++steps) {
      double a = -values[t];
      double gamma_pow = 1.0;
      for (int i = 0; i < steps; ++i) {
        a += gamma_pow * rewards[t + i];
        gamma_pow *= gamma;
      }
      if (steps < horizon) a += gamma_pow * values[t + steps];
      const double weight = steps < horizon
                                ? (1.0 - lambda) * std::pow(lambda, steps - 1)
                                : std::pow(lambda, steps - 1);
      mix += weight * a;
    }
    out[t] = mix;
  }
  return out;
}

policy::GraphConfig tiny_graph() {
  policy::GraphConfig cfg;
  cfg.d1 = 8;
  cfg.d2 = 8;
  cfg.embed_self_hidden = {16};
  cfg.embed_opponent_hidden = {16};
  cfg.propagate_hidden = {16};
  cfg.policy_head_hidden = {16};
  cfg.value_head_hidden = {16};
  return cfg;
}

env::EnvConfig small_env() {
  env::EnvConfig cfg;
  cfg.n_guards = 2;
  cfg.n_attackers = 2;
  cfg.episode_length = 40;
  return cfg;
}

struct Setup {
  env::EnvConfig env_cfg = small_env();
  env::RewardConfig rew_cfg;
  policy::GraphConfig graph = tiny_graph();
  policy::PolicyParams guard_params;
  policy::PolicyParams attacker_params;
  TeamActor guards;
  TeamActor attackers;

  explicit Setup(std::uint64_t seed) {
    guard_params = policy::init_policy(graph, mix_seed(seed, "g"));
    attacker_params = policy::init_policy(graph, mix_seed(seed, "a"));
    guards = {TeamActor::Mode::Learned, &guard_params, &graph, 0.1, nullptr};
    attackers = {TeamActor::Mode::Learned, &attacker_params, &graph, 0.1,
                 nullptr};
  }
};

bool batches_equal(const RolloutBatch& a, const RolloutBatch& b) {
  if (a.transitions.size() != b.transitions.size()) return false;
  for (std::size_t i = 0; i < a.transitions.size(); ++i) {
    const auto& x = a.transitions[i];
    const auto& y = b.transitions[i];
    if (x.agent_id != y.agent_id || x.team != y.team || x.move != y.move ||
        x.shoot != y.shoot || x.log_prob != y.log_prob ||
        x.reward != y.reward || x.value != y.value || x.done != y.done ||
        x.t != y.t || x.episode != y.episode)
      return false;
    if (x.obs.self_features != y.obs.self_features) return false;
  }
  return a.advantages == b.advantages && a.returns == b.returns;
}

}  // namespace

TEST_CASE("gae: undiscounted sums with lambda=1") {
  auto res = compute_gae({1, 1, 1}, {0, 0, 0}, {false, false, true}, 1.0, 1.0);
  CHECK(res.advantages == std::vector<double>{3, 2, 1});
  CHECK(res.returns == std::vector<double>{3, 2, 1});
}

TEST_CASE("gae: zero rewards and values give zero advantages") {
  auto res = compute_gae({0, 0, 0, 0}, {0, 0, 0, 0},
                         {false, false, false, true}, 0.9, 0.7);
  for (double a : res.advantages) CHECK(a == 0.0);
}

TEST_CASE("gae: single-step base case") {
  // A = r + gamma * V(next) * (1 - done) - V(s); with a one-entry stream the
  // next value is 0 whether or not done is set.
  auto done_case = compute_gae({2.0}, {0.5}, {true}, 0.9, 0.95);
  CHECK(done_case.advantages[0] == doctest::Approx(2.0 - 0.5).epsilon(1e-15));
  auto cut_case = compute_gae({2.0}, {0.5}, {false}, 0.9, 0.95);
  CHECK(cut_case.advantages[0] == doctest::Approx(2.0 - 0.5).epsilon(1e-15));
}

TEST_CASE("gae matches the brute-force n-step mixture on random sequences") {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + rng.uniform_int(10);
    std::vector<double> rewards(n), values(n);
    std::vector<bool> dones(n);
    for (int i = 0; i < n; ++i) {
      rewards[i] = rng.uniform(-2, 2);
      values[i] = rng.uniform(-2, 2);
      dones[i] = rng.bernoulli(0.25);
    }
    const double gamma = rng.uniform(0, 1);
    const double lambda = rng.uniform(0, 1);
    auto fast = compute_gae(rewards, values, dones, gamma, lambda);
    auto slow = gae_oracle(rewards, values, dones, gamma, lambda);
    for (int i = 0; i < n; ++i)
      CHECK(std::abs(fast.advantages[i] - slow[i]) < 1e-10);
  }
}

TEST_CASE("collect_rollouts with zero steps returns empty batches") {
  Setup s(1);
  auto res = collect_rollouts(s.env_cfg, s.rew_cfg, s.guards, s.attackers, 0, 9);
  CHECK(res.guard.empty());
  CHECK(res.attacker.empty());
  CHECK(res.stats.episodes.empty());
}

TEST_CASE("collect_rollouts is deterministic for a fixed seed") {
  Setup s(2);
  auto a = collect_rollouts(s.env_cfg, s.rew_cfg, s.guards, s.attackers, 120, 5);
  auto b = collect_rollouts(s.env_cfg, s.rew_cfg, s.guards, s.attackers, 120, 5);
  CHECK(batches_equal(a.guard, b.guard));
  CHECK(batches_equal(a.attacker, b.attacker));
  CHECK(a.stats.env_steps == b.stats.env_steps);
  CHECK(a.stats.env_steps >= 120);
  REQUIRE(a.stats.episodes.size() == b.stats.episodes.size());
  for (std::size_t i = 0; i < a.stats.episodes.size(); ++i) {
    CHECK(a.stats.episodes[i].seed == b.stats.episodes[i].seed);
    CHECK(a.stats.episodes[i].guard_mean_reward ==
          b.stats.episodes[i].guard_mean_reward);
  }
}

TEST_CASE("collect_rollouts with workers=2 is deterministic too") {
  Setup s(3);
  auto a = collect_rollouts(s.env_cfg, s.rew_cfg, s.guards, s.attackers, 160,
                            11, 2);
  auto b = collect_rollouts(s.env_cfg, s.rew_cfg, s.guards, s.attackers, 160,
                            11, 2);
  CHECK(batches_equal(a.guard, b.guard));
  CHECK(batches_equal(a.attacker, b.attacker));
}

TEST_CASE("per-episode stats agree with a recomputation from transitions") {
  Setup s(4);
  auto res =
      collect_rollouts(s.env_cfg, s.rew_cfg, s.guards, s.attackers, 200, 13);

  std::map<int, double> guard_sum, attacker_sum;
  for (const auto& tr : res.guard.transitions) guard_sum[tr.episode] += tr.reward;
  for (const auto& tr : res.attacker.transitions)
    attacker_sum[tr.episode] += tr.reward;

  for (std::size_t ep = 0; ep < res.stats.episodes.size(); ++ep) {
    const auto& rec = res.stats.episodes[ep];
    const double guard_expected = rec.guard_mean_reward * s.env_cfg.n_guards;
    const double attacker_expected =
        rec.attacker_mean_reward * s.env_cfg.n_attackers;
    CHECK(std::abs(guard_sum[static_cast<int>(ep)] - guard_expected) < 1e-9);
    CHECK(std::abs(attacker_sum[static_cast<int>(ep)] - attacker_expected) <
          1e-9);
  }
}

TEST_CASE("every agent stream ends with done and advantages are present") {
  Setup s(5);
  auto res =
      collect_rollouts(s.env_cfg, s.rew_cfg, s.guards, s.attackers, 150, 17);
  REQUIRE_FALSE(res.guard.empty());
  CHECK(res.guard.advantages.size() == res.guard.transitions.size());
  CHECK(res.guard.returns.size() == res.guard.transitions.size());
  // Within each (episode, agent) stream the last transition carries done.
  std::map<std::pair<int, int>, const Transition*> last;
  for (const auto& tr : res.guard.transitions)
    last[{tr.episode, tr.agent_id}] = &tr;
  for (const auto& [key, tr] : last) CHECK(tr->done);
}

TEST_CASE("clipped surrogate matches a scalar hand computation") {
  // Toy policy: two actions with logits (w, 0); a single scalar parameter.
  const double w = 0.4;
  const double logp_old = std::log(0.5);
  const double eps = 0.2;

  auto build = [&](double wv, double adv, nn::Tape& tape, nn::Tape::VarId& pw) {
    pw = tape.param(nn::Tensor::vec({wv}));
    auto logits = tape.concat(pw, tape.constant(nn::Tensor::vec({0.0})));
    auto logp = tape.pick(tape.log_softmax_vec(logits), 0);
    return clipped_surrogate(tape, logp, logp_old, adv, eps);
  };

  for (double adv : {1.5, -1.5}) {
    nn::Tape tape;
    nn::Tape::VarId pw;
    auto obj = build(w, adv, tape, pw);

    // Hand computation with scalar arithmetic.
    const double p0 = std::exp(w) / (std::exp(w) + 1.0);
    const double ratio = std::exp(std::log(p0) - logp_old);
    const double clipped = std::min(std::max(ratio, 1 - eps), 1 + eps);
    const double expected = std::min(ratio * adv, clipped * adv);
    CHECK(tape.value(obj).at(0) == doctest::Approx(expected).epsilon(1e-12));

    // Gradient through the exact update path, against finite differences.
    tape.backward(obj);
    const double analytic = tape.grad(pw).at(0);
    double probe = w;
    auto eval = [&]() {
      nn::Tape t;
      nn::Tape::VarId q;
      auto o = build(probe, adv, t, q);
      return t.value(o).at(0);
    };
    const double fd = testutil::central_diff(eval, probe);
    CHECK(testutil::rel_err(fd, analytic) < 1e-6);
  }
}

TEST_CASE("clipping only engages outside the trust region") {
  // ratio inside [1-eps, 1+eps]: objective equals the unclipped value exactly.
  const double eps = 0.2;
  nn::Tape tape;
  auto logp = tape.constant(nn::Tensor::vec({std::log(0.55)}));
  auto obj = clipped_surrogate(tape, logp, std::log(0.5), 2.0, eps);
  const double ratio = 0.55 / 0.5;  // 1.1, inside the region
  CHECK(tape.value(obj).at(0) == doctest::Approx(ratio * 2.0).epsilon(1e-12));

  // ratio far outside: positive advantage pins the objective at the clip.
  nn::Tape tape2;
  auto logp2 = tape2.constant(nn::Tensor::vec({std::log(0.9)}));
  auto obj2 = clipped_surrogate(tape2, logp2, std::log(0.3), 2.0, eps);
  CHECK(tape2.value(obj2).at(0) == doctest::Approx((1 + eps) * 2.0).epsilon(1e-12));
}

TEST_CASE("first update epoch sees unit ratios") {
  Setup s(6);
  auto res =
      collect_rollouts(s.env_cfg, s.rew_cfg, s.guards, s.attackers, 80, 19);
  PPOConfig cfg;
  cfg.epochs = 1;
  cfg.minibatch_size =
      static_cast<int>(res.guard.transitions.size());  // one minibatch
  nn::AdamState adam = nn::make_adam_state(
      policy::param_tensors(std::as_const(s.guard_params)));
  TrainStats stats =
      ppo_update(s.guard_params, s.graph, res.guard, cfg, adam, 23);
  CHECK(stats.minibatches == 1);
  CHECK(stats.clip_fraction == 0.0);
  // Normalized advantages have zero mean, so with unit ratios the policy
  // term vanishes up to rounding.
  CHECK(std::abs(stats.policy_loss) < 1e-9);
}

TEST_CASE("zero advantages leave only value and entropy pressure") {
  Setup s(7);
  auto res =
      collect_rollouts(s.env_cfg, s.rew_cfg, s.guards, s.attackers, 80, 29);
  RolloutBatch batch = res.guard;
  std::fill(batch.advantages.begin(), batch.advantages.end(), 0.0);
  PPOConfig cfg;
  cfg.epochs = 1;
  nn::AdamState adam = nn::make_adam_state(
      policy::param_tensors(std::as_const(s.guard_params)));
  const auto before = policy::serialize_params(s.guard_params);
  TrainStats stats = ppo_update(s.guard_params, s.graph, batch, cfg, adam, 31);
  CHECK(stats.policy_loss == 0.0);
  CHECK(policy::serialize_params(s.guard_params) != before);  // value/entropy moved
}

TEST_CASE("non-finite inputs abort the update with a diagnostic") {
  Setup s(8);
  auto res =
      collect_rollouts(s.env_cfg, s.rew_cfg, s.guards, s.attackers, 40, 37);
  RolloutBatch batch = res.guard;
  REQUIRE_FALSE(batch.empty());
  batch.transitions[0].log_prob = -std::numeric_limits<double>::infinity();
  PPOConfig cfg;
  cfg.epochs = 1;
  nn::AdamState adam = nn::make_adam_state(
      policy::param_tensors(std::as_const(s.guard_params)));
  CHECK_THROWS_AS(ppo_update(s.guard_params, s.graph, batch, cfg, adam, 41),
                  NumericError);
}

TEST_CASE("ppo_update is deterministic for a fixed seed") {
  Setup s(9);
  auto res =
      collect_rollouts(s.env_cfg, s.rew_cfg, s.guards, s.attackers, 100, 43);
  PPOConfig cfg;
  cfg.epochs = 2;
  cfg.minibatch_size = 32;

  auto run = [&]() {
    policy::PolicyParams params = s.guard_params;
    nn::AdamState adam =
        nn::make_adam_state(policy::param_tensors(std::as_const(params)));
    TrainStats stats = ppo_update(params, s.graph, res.guard, cfg, adam, 47);
    return std::make_pair(policy::serialize_params(params), stats);
  };
  auto [bytes_a, stats_a] = run();
  auto [bytes_b, stats_b] = run();
  CHECK(bytes_a == bytes_b);
  CHECK(stats_a.policy_loss == stats_b.policy_loss);
  CHECK(stats_a.value_loss == stats_b.value_loss);
  CHECK(stats_a.entropy == stats_b.entropy);
  CHECK(stats_a.grad_norm == stats_b.grad_norm);
}

TEST_CASE("updating one team never touches the other team's parameters") {
  Setup s(10);
  auto res =
      collect_rollouts(s.env_cfg, s.rew_cfg, s.guards, s.attackers, 100, 53);
  PPOConfig cfg;
  cfg.epochs = 1;

  policy::PolicyParams guard_a = s.guard_params;
  policy::PolicyParams guard_b = s.guard_params;
  policy::PolicyParams attacker = s.attacker_params;

  nn::AdamState adam_a =
      nn::make_adam_state(policy::param_tensors(std::as_const(guard_a)));
  ppo_update(guard_a, s.graph, res.guard, cfg, adam_a, 59);

  // Same guard update with an interleaved attacker update.
  nn::AdamState adam_b =
      nn::make_adam_state(policy::param_tensors(std::as_const(guard_b)));
  nn::AdamState adam_att =
      nn::make_adam_state(policy::param_tensors(std::as_const(attacker)));
  ppo_update(attacker, s.graph, res.attacker, cfg, adam_att, 61);
  ppo_update(guard_b, s.graph, res.guard, cfg, adam_b, 59);

  CHECK(policy::serialize_params(guard_a) == policy::serialize_params(guard_b));
}

TEST_CASE("train smoke run emits one curve row per team per iteration") {
  env::EnvConfig env_cfg = small_env();
  env::RewardConfig rew_cfg;
  policy::GraphConfig graph = tiny_graph();
  PPOConfig ppo_cfg;
  ppo_cfg.steps_per_iteration = 64;
  ppo_cfg.minibatch_size = 64;
  ppo_cfg.epochs = 1;
  TrainConfig train_cfg;
  train_cfg.iterations = 2;

  int curve_calls = 0;
  TrainCallbacks cb;
  cb.on_curve = [&](const CurveRow&) { ++curve_calls; };
  TrainResult res =
      train(env_cfg, rew_cfg, graph, ppo_cfg, train_cfg, 71, cb);
  CHECK(res.curve.size() == 4);  // 2 iterations x 2 teams
  CHECK(curve_calls == 4);
  int guard_rows = 0;
  for (const auto& row : res.curve)
    if (row.team == Team::Guard) ++guard_rows;
  CHECK(guard_rows == 2);
  for (const auto& row : res.curve) {
    CHECK(row.win_rate >= 0.0);
    CHECK(row.win_rate <= 1.0);
    CHECK(std::isfinite(row.mean_episode_reward));
  }
}

TEST_CASE("scripted opponents act without recording transitions") {
  Setup s(11);
  s.attackers.mode = TeamActor::Mode::Scripted;
  s.attackers.params = nullptr;
  s.attackers.config = nullptr;
  auto res =
      collect_rollouts(s.env_cfg, s.rew_cfg, s.guards, s.attackers, 60, 67);
  CHECK_FALSE(res.guard.empty());
  CHECK(res.attacker.empty());
}

TEST_CASE("guard and attacker rewards move in rough opposition in self-play") {
  // Desk-scale stand-in for the co-evolution curves: a short self-play run
  // whose smoothed team curves should be negatively correlated.
  env::EnvConfig env_cfg = small_env();
  env_cfg.episode_length = 60;
  env::RewardConfig rew_cfg;
  policy::GraphConfig graph = tiny_graph();
  PPOConfig ppo_cfg;
  ppo_cfg.steps_per_iteration = 512;
  ppo_cfg.minibatch_size = 128;
  ppo_cfg.epochs = 2;
  ppo_cfg.adam.lr = 1e-3;
  TrainConfig train_cfg;
  train_cfg.iterations = 30;

  TrainResult res = train(env_cfg, rew_cfg, graph, ppo_cfg, train_cfg, 6021);

  std::vector<double> guard_curve, attacker_curve;
  for (const auto& row : res.curve)
    (row.team == Team::Guard ? guard_curve : attacker_curve)
        .push_back(row.mean_episode_reward);
  auto guard_smooth = replay::smooth_curve(guard_curve, 2.0);
  auto attacker_smooth = replay::smooth_curve(attacker_curve, 2.0);

  const auto n = guard_smooth.size();
  double mg = 0, ma = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mg += guard_smooth[i];
    ma += attacker_smooth[i];
  }
  mg /= n;
  ma /= n;
  double cov = 0;
  for (std::size_t i = 0; i < n; ++i)
    cov += (guard_smooth[i] - mg) * (attacker_smooth[i] - ma);
  CHECK(cov < 0);
}
