#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fortattack/env.hpp"
#include "fortattack/policy.hpp"
#include "fortattack/tape.hpp"

namespace fortattack::ppo {

struct Transition {
  int agent_id = 0;
  Team team = Team::Guard;
  ObservationView obs;
  int move = 0;
  bool shoot = false;
  double log_prob = 0;
  double reward = 0;
  double value = 0;
  bool done = false;  // this agent's stream ended here (death or episode end)
  int t = 0;
  int episode = 0;  // ordinal within the collection
};

struct RolloutBatch {
  std::vector<Transition> transitions;
  std::vector<double> advantages;  // aligned with transitions
  std::vector<double> returns;

  bool empty() const { return transitions.empty(); }
};

struct PPOConfig {
  int steps_per_iteration = 4096;
  int epochs = 4;
  int minibatch_size = 256;
  double clip_ratio = 0.2;
  double discount = 0.99;
  double gae_lambda = 0.95;
  double value_loss_weight = 0.5;
  double entropy_weight = 0.01;
  double max_grad_norm = 0.5;
  nn::AdamConfig adam{};

  void validate() const;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Backward-recursion GAE over one agent's stream. The value after the last
// entry is treated as zero; interior `done` flags cut the recursion.
GaeResult compute_gae(const std::vector<double>& rewards,
                      const std::vector<double>& values,
                      const std::vector<bool>& dones, double discount,
                      double lambda);

// How one team produces actions during collection.
struct TeamActor {
  enum class Mode {
    Learned,   // acts with `params`, transitions recorded
    Frozen,    // acts with `params` (or per-episode sample), not recorded
    Scripted,  // uniform random movement + Bernoulli shooting
  };

  Mode mode = Mode::Learned;
  const policy::PolicyParams* params = nullptr;
  const policy::GraphConfig* config = nullptr;
  double scripted_shoot_prob = 0.1;
  // Optional per-episode parameter override keyed by the episode seed; this
  // is how ensemble training swaps frozen opponents between episodes.
  std::function<const policy::PolicyParams*(std::uint64_t)> sampler;
};

struct EpisodeRecord {
  std::uint64_t seed = 0;
  int length = 0;
  Team winner = Team::Guard;
  double guard_mean_reward = 0;     // episode reward summed per agent / team size
  double attacker_mean_reward = 0;
};

struct CollectStats {
  std::vector<EpisodeRecord> episodes;
  long env_steps = 0;
};

struct CollectResult {
  RolloutBatch guard;
  RolloutBatch attacker;
  CollectStats stats;
};

// Runs whole episodes until at least `steps` environment ticks have been
// collected (the final episode is played to completion), recording
// transitions for Learned teams with GAE advantages attached. With
// workers > 1 the episode stream is partitioned across threads and merged by
// worker index, so results are deterministic for a fixed worker count.
CollectResult collect_rollouts(const env::EnvConfig& env_config,
                               const env::RewardConfig& reward_config,
                               const TeamActor& guards,
                               const TeamActor& attackers, int steps,
                               std::uint64_t seed, int workers = 1,
                               double discount = 0.99,
                               double gae_lambda = 0.95);

struct TrainStats {
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double clip_fraction = 0;
  double grad_norm = 0;
  int minibatches = 0;
};

// The per-sample PPO objective: min(ratio * A, clip(ratio, 1 +- eps) * A)
// with ratio = exp(logp_new - logp_old). Exposed so tests can evaluate the
// exact code path on scalar toys.
nn::Tape::VarId clipped_surrogate(nn::Tape& tape, nn::Tape::VarId logp_new,
                                  double logp_old, double advantage,
                                  double clip_ratio);

// Clipped-surrogate update with per-minibatch advantage normalization,
// entropy bonus, value regression and gradient-norm clipping. Throws
// NumericError if a minibatch loss turns non-finite.
TrainStats ppo_update(policy::PolicyParams& params,
                      const policy::GraphConfig& config,
                      const RolloutBatch& batch, const PPOConfig& cfg,
                      nn::AdamState& adam, std::uint64_t seed);

struct CurveRow {
  int iteration = 0;
  Team team = Team::Guard;
  double mean_episode_reward = 0;
  double win_rate = 0;

  bool operator==(const CurveRow&) const = default;
};

struct TrainConfig {
  int iterations = 100;
  int checkpoint_every = 50;
  bool train_guards = true;
  bool train_attackers = true;
  std::string guard_mode = "learned";     // learned | scripted
  std::string attacker_mode = "learned";  // learned | scripted
  double scripted_shoot_prob = 0.1;
  int workers = 1;

  void validate() const;
};

struct TrainCallbacks {
  std::function<void(const CurveRow&)> on_curve;
  std::function<void(int, Team, const TrainStats&)> on_stats;
  std::function<void(int, Team, const policy::PolicyParams&, double)>
      on_checkpoint;  // iteration, team, params, mean episode reward
};

struct TrainResult {
  policy::PolicyParams guard;
  policy::PolicyParams attacker;
  std::vector<CurveRow> curve;
};

// Alternating collect/update loop; each Learned team is updated from its own
// batch every iteration. Optional actor overrides replace a team's default
// actor (used by ensemble training to pin frozen, sampled opponents).
TrainResult train(const env::EnvConfig& env_config,
                  const env::RewardConfig& reward_config,
                  const policy::GraphConfig& graph_config,
                  const PPOConfig& ppo_config, const TrainConfig& train_config,
                  std::uint64_t seed, const TrainCallbacks& callbacks = {},
                  const TeamActor* guard_override = nullptr,
                  const TeamActor* attacker_override = nullptr);

}  // namespace fortattack::ppo
