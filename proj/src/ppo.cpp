#include "fortattack/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "fortattack/rng.hpp"

namespace fortattack::ppo {

using nn::Tape;
using nn::Tensor;
using policy::PolicyParams;

void PPOConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw ConfigError("config field 'ppo." + field + "': " + why);
  };
  if (steps_per_iteration < 0) bad("steps_per_iteration", "must be >= 0");
  if (epochs < 1) bad("epochs", "must be >= 1");
  if (minibatch_size < 1) bad("minibatch_size", "must be >= 1");
  if (clip_ratio <= 0 || clip_ratio >= 1) bad("clip_ratio", "must be in (0, 1)");
  if (discount < 0 || discount > 1) bad("discount", "must be in [0, 1]");
  if (gae_lambda < 0 || gae_lambda > 1) bad("gae_lambda", "must be in [0, 1]");
  if (value_loss_weight < 0) bad("value_loss_weight", "must be >= 0");
  if (entropy_weight < 0) bad("entropy_weight", "must be >= 0");
  if (max_grad_norm <= 0) bad("max_grad_norm", "must be positive");
  if (adam.lr <= 0) bad("adam.lr", "must be positive");
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw ConfigError("config field 'train." + field + "': " + why);
  };
  if (iterations < 1) bad("iterations", "must be >= 1");
  if (checkpoint_every < 1) bad("checkpoint_every", "must be >= 1");
  if (workers < 1) bad("workers", "must be >= 1");
  if (guard_mode != "learned" && guard_mode != "scripted")
    bad("guard_mode", "must be 'learned' or 'scripted'");
  if (attacker_mode != "learned" && attacker_mode != "scripted")
    bad("attacker_mode", "must be 'learned' or 'scripted'");
  if (scripted_shoot_prob < 0 || scripted_shoot_prob > 1)
    bad("scripted_shoot_prob", "must be in [0, 1]");
}

GaeResult compute_gae(const std::vector<double>& rewards,
                      const std::vector<double>& values,
                      const std::vector<bool>& dones, double discount,
                      double lambda) {
  if (rewards.size() != values.size() || rewards.size() != dones.size())
    throw UsageError("compute_gae: sequences are not aligned");
  const int n = static_cast<int>(rewards.size());
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double carry = 0;
  for (int t = n - 1; t >= 0; --t) {
    const double not_done = dones[t] ? 0.0 : 1.0;
    const double next_value = t + 1 < n ? values[t + 1] : 0.0;
    const double delta =
        rewards[t] + discount * not_done * next_value - values[t];
    carry = delta + discount * lambda * not_done * carry;
    out.advantages[t] = carry;
    out.returns[t] = carry + values[t];
  }
  return out;
}

namespace {

env::AgentAction scripted_action(const TeamActor& actor, Rng& rng) {
  env::AgentAction act;
  act.move = static_cast<env::MoveAction>(rng.uniform_int(env::kNumMoveActions));
  act.shoot = rng.bernoulli(actor.scripted_shoot_prob);
  return act;
}

struct AgentStream {
  std::vector<Transition> transitions;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<bool> dones;
};

// Plays whole episodes until the step budget is spent, appending transitions
// of Learned teams (with advantages) into the per-team batches.
void collect_worker(const env::EnvConfig& env_config,
                    const env::RewardConfig& reward_config,
                    const TeamActor& guards, const TeamActor& attackers,
                    int step_budget, double discount, double gae_lambda,
                    std::uint64_t seed, int worker_index, CollectResult& out) {
  long collected = 0;
  int episode_index = 0;
  while (collected < step_budget) {
    const std::uint64_t episode_seed =
        mix_seed(seed, "episode", static_cast<std::uint64_t>(worker_index),
                 static_cast<std::uint64_t>(episode_index));
    env::WorldState state = env::reset(env_config, episode_seed);
    Rng action_rng(mix_seed(episode_seed, "actions"));

    const PolicyParams* guard_params =
        guards.sampler ? guards.sampler(episode_seed) : guards.params;
    const PolicyParams* attacker_params =
        attackers.sampler ? attackers.sampler(episode_seed) : attackers.params;

    std::vector<AgentStream> streams(state.agents.size());
    std::vector<double> episode_reward(state.agents.size(), 0.0);

    EpisodeRecord record;
    record.seed = episode_seed;

    while (!state.done) {
      std::vector<std::optional<env::AgentAction>> actions(state.agents.size());
      std::vector<int> recorded;  // agents whose transition awaits a reward
      for (const auto& agent : state.agents) {
        if (!agent.alive) continue;
        const bool is_guard = agent.team == Team::Guard;
        const TeamActor& actor = is_guard ? guards : attackers;
        if (actor.mode == TeamActor::Mode::Scripted) {
          actions[agent.id] = scripted_action(actor, action_rng);
          continue;
        }
        const PolicyParams* params =
            is_guard ? guard_params : attacker_params;
        const ObservationView obs = env::observation_of(state, agent.id);
        const policy::ForwardResult fwd =
            policy::forward(obs, *params, *actor.config);
        const policy::SampledAction sampled =
            policy::sample_action(fwd.dist, action_rng);
        actions[agent.id] =
            env::AgentAction{static_cast<env::MoveAction>(sampled.move),
                             sampled.shoot};
        if (actor.mode == TeamActor::Mode::Learned) {
          Transition tr;
          tr.agent_id = agent.id;
          tr.team = agent.team;
          tr.obs = obs;
          tr.move = sampled.move;
          tr.shoot = sampled.shoot;
          tr.log_prob = sampled.log_prob;
          tr.value = fwd.value;
          tr.t = state.t;
          auto& stream = streams[agent.id];
          stream.transitions.push_back(std::move(tr));
          stream.values.push_back(fwd.value);
          recorded.push_back(agent.id);
        }
      }

      const env::StepOutcome outcome =
          env::step(state, actions, env_config, reward_config);
      collected += 1;
      for (std::size_t i = 0; i < outcome.rewards.size(); ++i)
        episode_reward[i] += outcome.rewards[i];
      for (int id : recorded) {
        auto& stream = streams[id];
        const bool died = !state.agents[id].alive;
        stream.rewards.push_back(outcome.rewards[id]);
        stream.dones.push_back(died || outcome.done);
        stream.transitions.back().reward = outcome.rewards[id];
        stream.transitions.back().done = died || outcome.done;
      }
    }

    record.length = state.t;
    record.winner = *state.winner;
    double guard_sum = 0, attacker_sum = 0;
    for (const auto& agent : state.agents)
      (agent.team == Team::Guard ? guard_sum : attacker_sum) +=
          episode_reward[agent.id];
    record.guard_mean_reward = guard_sum / env_config.n_guards;
    record.attacker_mean_reward = attacker_sum / env_config.n_attackers;
    out.stats.episodes.push_back(record);

    for (auto& stream : streams) {
      if (stream.transitions.empty()) continue;
      GaeResult gae = compute_gae(stream.rewards, stream.values, stream.dones,
                                  discount, gae_lambda);
      RolloutBatch& batch =
          stream.transitions.front().team == Team::Guard ? out.guard
                                                         : out.attacker;
      for (std::size_t k = 0; k < stream.transitions.size(); ++k) {
        stream.transitions[k].episode = episode_index;
        batch.transitions.push_back(std::move(stream.transitions[k]));
        batch.advantages.push_back(gae.advantages[k]);
        batch.returns.push_back(gae.returns[k]);
      }
    }
    episode_index += 1;
  }
  out.stats.env_steps = collected;
}

}  // namespace

CollectResult collect_rollouts(const env::EnvConfig& env_config,
                               const env::RewardConfig& reward_config,
                               const TeamActor& guards,
                               const TeamActor& attackers, int steps,
                               std::uint64_t seed, int workers,
                               double discount, double gae_lambda) {
  if (workers < 1) throw UsageError("collect_rollouts: workers must be >= 1");
  for (const TeamActor* actor : {&guards, &attackers}) {
    if (actor->mode != TeamActor::Mode::Scripted) {
      if ((actor->params == nullptr && !actor->sampler) ||
          actor->config == nullptr)
        throw UsageError("collect_rollouts: policy actor missing params/config");
    }
  }

  if (steps <= 0) return {};

  const int per_worker = (steps + workers - 1) / workers;
  std::vector<CollectResult> partial(static_cast<std::size_t>(workers));
  if (workers == 1) {
    collect_worker(env_config, reward_config, guards, attackers, steps,
                   discount, gae_lambda, seed, 0, partial[0]);
  } else {
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
      threads.emplace_back([&, w]() {
        try {
          collect_worker(env_config, reward_config, guards, attackers,
                         per_worker, discount, gae_lambda, seed, w,
                         partial[static_cast<std::size_t>(w)]);
        } catch (...) {
          errors[static_cast<std::size_t>(w)] = std::current_exception();
        }
      });
    for (auto& t : threads) t.join();
    for (const auto& err : errors)
      if (err) std::rethrow_exception(err);
  }

  // Deterministic merge by worker index; episode ordinals are re-based so
  // they stay unique across workers.
  CollectResult merged;
  int episode_base = 0;
  for (auto& part : partial) {
    for (RolloutBatch* batch : {&part.guard, &part.attacker}) {
      RolloutBatch& dst =
          batch == &part.guard ? merged.guard : merged.attacker;
      for (std::size_t k = 0; k < batch->transitions.size(); ++k) {
        batch->transitions[k].episode += episode_base;
        dst.transitions.push_back(std::move(batch->transitions[k]));
        dst.advantages.push_back(batch->advantages[k]);
        dst.returns.push_back(batch->returns[k]);
      }
    }
    merged.stats.env_steps += part.stats.env_steps;
    episode_base += static_cast<int>(part.stats.episodes.size());
    for (const auto& ep : part.stats.episodes)
      merged.stats.episodes.push_back(ep);
  }
  return merged;
}

Tape::VarId clipped_surrogate(Tape& tape, Tape::VarId logp_new,
                              double logp_old, double advantage,
                              double clip_ratio) {
  auto ratio = tape.exp_(tape.add_const(logp_new, -logp_old));
  auto unclipped = tape.scale(ratio, advantage);
  auto clipped =
      tape.scale(tape.clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio),
                 advantage);
  return tape.min2(unclipped, clipped);
}

TrainStats ppo_update(PolicyParams& params,
                      const policy::GraphConfig& config,
                      const RolloutBatch& batch, const PPOConfig& cfg,
                      nn::AdamState& adam, std::uint64_t seed) {
  cfg.validate();
  TrainStats stats;
  if (batch.empty()) return stats;
  const int n = static_cast<int>(batch.transitions.size());

  std::vector<int> indices(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) indices[static_cast<std::size_t>(i)] = i;

  auto params_mutable = policy::param_tensors(params);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i)
      std::swap(indices[static_cast<std::size_t>(i)],
                indices[static_cast<std::size_t>(shuffle_rng.uniform_int(i + 1))]);

    for (int start = 0; start < n; start += cfg.minibatch_size) {
      const int end = std::min(n, start + cfg.minibatch_size);
      const int m = end - start;

      // Per-minibatch advantage normalization.
      double mean = 0;
      for (int i = start; i < end; ++i)
        mean += batch.advantages[static_cast<std::size_t>(indices[i])];
      mean /= m;
      double var = 0;
      for (int i = start; i < end; ++i) {
        const double d =
            batch.advantages[static_cast<std::size_t>(indices[i])] - mean;
        var += d * d;
      }
      const double stddev = std::sqrt(var / m);

      Tape tape;
      policy::TapedPolicy taped = policy::register_policy(tape, params);
      std::vector<Tape::VarId> objectives, value_losses, entropies;
      objectives.reserve(m);
      value_losses.reserve(m);
      entropies.reserve(m);
      int clipped_count = 0;

      for (int i = start; i < end; ++i) {
        const Transition& tr =
            batch.transitions[static_cast<std::size_t>(indices[i])];
        const double adv =
            (batch.advantages[static_cast<std::size_t>(indices[i])] - mean) /
            (stddev + 1e-8);
        const double ret = batch.returns[static_cast<std::size_t>(indices[i])];

        policy::TapedForward fwd =
            policy::forward_on_tape(tape, taped, params, config, tr.obs);
        auto move_logp = tape.pick(fwd.move_log_probs, tr.move);
        // log prob of the shoot channel: -softplus(-x) when shooting,
        // -softplus(x) otherwise.
        auto shoot_logp = tape.neg(tape.softplus_(
            tr.shoot ? tape.neg(fwd.shoot_logit) : fwd.shoot_logit));
        auto logp = tape.add(move_logp, shoot_logp);

        objectives.push_back(
            clipped_surrogate(tape, logp, tr.log_prob, adv, cfg.clip_ratio));
        const double ratio =
            std::exp(tape.value(logp).at(0) - tr.log_prob);
        if (std::abs(ratio - 1.0) > cfg.clip_ratio) ++clipped_count;

        auto verr = tape.add_const(fwd.value, -ret);
        value_losses.push_back(tape.mul(verr, verr));

        auto probs = tape.exp_(fwd.move_log_probs);
        auto move_ent = tape.neg(tape.sum(tape.mul(probs, fwd.move_log_probs)));
        auto sig = tape.sigmoid_(fwd.shoot_logit);
        auto shoot_ent = tape.add(
            tape.mul(sig, tape.softplus_(tape.neg(fwd.shoot_logit))),
            tape.mul(tape.add_const(tape.neg(sig), 1.0),
                     tape.softplus_(fwd.shoot_logit)));
        entropies.push_back(tape.add(move_ent, shoot_ent));
      }

      auto policy_term = tape.neg(tape.mean(tape.pack(objectives)));
      auto value_term =
          tape.scale(tape.mean(tape.pack(value_losses)), cfg.value_loss_weight);
      auto entropy_mean = tape.mean(tape.pack(entropies));
      auto loss = tape.add(tape.add(policy_term, value_term),
                           tape.scale(entropy_mean, -cfg.entropy_weight));

      const double loss_value = tape.value(loss).at(0);
      if (!std::isfinite(loss_value))
        throw NumericError(
            "ppo_update aborted: non-finite minibatch loss (epoch " +
            std::to_string(epoch) + ", offset " + std::to_string(start) + ")");

      tape.backward(loss);
      std::vector<Tensor> grads = policy::zero_grads_like(params);
      policy::accumulate_policy_grads(tape, taped, grads);

      stats.grad_norm += nn::grad_norm(grads);
      nn::clip_grad_norm(grads, cfg.max_grad_norm);
      nn::adam_step(params_mutable, grads, adam, cfg.adam);

      stats.policy_loss += tape.value(policy_term).at(0);
      stats.value_loss += tape.value(value_term).at(0);
      stats.entropy += tape.value(entropy_mean).at(0);
      stats.clip_fraction += static_cast<double>(clipped_count) / m;
      stats.minibatches += 1;
    }
  }

  if (stats.minibatches > 0) {
    stats.policy_loss /= stats.minibatches;
    stats.value_loss /= stats.minibatches;
    stats.entropy /= stats.minibatches;
    stats.clip_fraction /= stats.minibatches;
    stats.grad_norm /= stats.minibatches;
  }
  return stats;
}

TrainResult train(const env::EnvConfig& env_config,
                  const env::RewardConfig& reward_config,
                  const policy::GraphConfig& graph_config,
                  const PPOConfig& ppo_config, const TrainConfig& train_config,
                  std::uint64_t seed, const TrainCallbacks& callbacks,
                  const TeamActor* guard_override,
                  const TeamActor* attacker_override) {
  env_config.validate();
  reward_config.validate();
  graph_config.validate();
  ppo_config.validate();
  train_config.validate();

  TrainResult result;
  result.guard = policy::init_policy(graph_config, mix_seed(seed, "init/guard"));
  result.attacker =
      policy::init_policy(graph_config, mix_seed(seed, "init/attacker"));

  auto make_actor = [&](Team team, const TeamActor* override_actor,
                        const std::string& mode) {
    if (override_actor) return *override_actor;
    TeamActor actor;
    actor.config = &graph_config;
    actor.params = team == Team::Guard ? &result.guard : &result.attacker;
    actor.scripted_shoot_prob = train_config.scripted_shoot_prob;
    actor.mode = mode == "scripted" ? TeamActor::Mode::Scripted
                                    : TeamActor::Mode::Learned;
    return actor;
  };
  const TeamActor guard_actor =
      make_actor(Team::Guard, guard_override, train_config.guard_mode);
  const TeamActor attacker_actor =
      make_actor(Team::Attacker, attacker_override, train_config.attacker_mode);

  const bool update_guards = train_config.train_guards &&
                             guard_actor.mode == TeamActor::Mode::Learned;
  const bool update_attackers = train_config.train_attackers &&
                                attacker_actor.mode == TeamActor::Mode::Learned;

  nn::AdamState guard_adam =
      nn::make_adam_state(policy::param_tensors(std::as_const(result.guard)));
  nn::AdamState attacker_adam = nn::make_adam_state(
      policy::param_tensors(std::as_const(result.attacker)));

  for (int iter = 0; iter < train_config.iterations; ++iter) {
    CollectResult rollout = collect_rollouts(
        env_config, reward_config, guard_actor, attacker_actor,
        ppo_config.steps_per_iteration,
        mix_seed(seed, "collect", static_cast<std::uint64_t>(iter)),
        train_config.workers, ppo_config.discount, ppo_config.gae_lambda);

    if (update_guards) {
      TrainStats stats = ppo_update(
          result.guard, graph_config, rollout.guard, ppo_config, guard_adam,
          mix_seed(seed, "update/guard", static_cast<std::uint64_t>(iter)));
      if (callbacks.on_stats) callbacks.on_stats(iter, Team::Guard, stats);
    }
    if (update_attackers) {
      TrainStats stats = ppo_update(
          result.attacker, graph_config, rollout.attacker, ppo_config,
          attacker_adam,
          mix_seed(seed, "update/attacker", static_cast<std::uint64_t>(iter)));
      if (callbacks.on_stats) callbacks.on_stats(iter, Team::Attacker, stats);
    }

    const auto& episodes = rollout.stats.episodes;
    double guard_reward = 0, attacker_reward = 0, guard_wins = 0;
    for (const auto& ep : episodes) {
      guard_reward += ep.guard_mean_reward;
      attacker_reward += ep.attacker_mean_reward;
      guard_wins += ep.winner == Team::Guard ? 1.0 : 0.0;
    }
    const double n_eps = episodes.empty() ? 1.0 : episodes.size();
    CurveRow guard_row{iter, Team::Guard, guard_reward / n_eps,
                       guard_wins / n_eps};
    CurveRow attacker_row{iter, Team::Attacker, attacker_reward / n_eps,
                          1.0 - guard_wins / n_eps};
    result.curve.push_back(guard_row);
    result.curve.push_back(attacker_row);
    if (callbacks.on_curve) {
      callbacks.on_curve(guard_row);
      callbacks.on_curve(attacker_row);
    }

    const bool checkpoint_now =
        (iter + 1) % train_config.checkpoint_every == 0 ||
        iter + 1 == train_config.iterations;
    if (checkpoint_now && callbacks.on_checkpoint) {
      if (update_guards)
        callbacks.on_checkpoint(iter, Team::Guard, result.guard,
                                guard_row.mean_episode_reward);
      if (update_attackers)
        callbacks.on_checkpoint(iter, Team::Attacker, result.attacker,
                                attacker_row.mean_episode_reward);
    }
  }
  return result;
}

}  // namespace fortattack::ppo
