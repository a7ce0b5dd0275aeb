#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fortattack/policy.hpp"
#include "fortattack/ppo.hpp"

namespace fortattack::curriculum {

struct Extremum {
  int index = 0;
  bool is_max = true;

  bool operator==(const Extremum&) const = default;
};

// Local extrema of the Gaussian-smoothed curve: an index is reported when it
// strictly dominates (or is dominated by) everything within +-window.
// Endpoints are excluded.
std::vector<Extremum> detect_extrema(const std::vector<double>& curve,
                                     double smoothing_sigma, int window);

// A frozen policy snapshot in the opponent library.
struct StrategySnapshot {
  std::string path;        // checkpoint file
  policy::Checkpoint checkpoint;
  std::string label;       // human-assigned ("sneak", "deceive", ...)
  double weight = 1.0;
  int iteration = -1;
  double mean_reward = 0;
};

struct OpponentLibrary {
  Team team = Team::Attacker;  // the team all snapshots belong to
  std::vector<StrategySnapshot> snapshots;

  // Weighted draw over snapshots; weights are normalized on load.
  std::size_t sample_index(Rng& rng) const;
};

// Human-editable JSON manifest listing (path, team, label, weight, ...).
// Checkpoint paths are resolved relative to the manifest's directory.
OpponentLibrary load_library(const std::filesystem::path& manifest_path);
void save_library_manifest(const std::filesystem::path& manifest_path,
                           const OpponentLibrary& library);

struct EnsembleResult {
  policy::PolicyParams trained;
  std::vector<ppo::CurveRow> curve;
};

// Trains `train_team` from scratch against frozen opponents drawn i.i.d.
// from the library at every episode reset. Only the training team's
// parameters ever change.
EnsembleResult ensemble_train(Team train_team, const OpponentLibrary& library,
                              const env::EnvConfig& env_config,
                              const env::RewardConfig& reward_config,
                              const policy::GraphConfig& graph_config,
                              const ppo::PPOConfig& ppo_config,
                              const ppo::TrainConfig& train_config,
                              std::uint64_t seed,
                              const ppo::TrainCallbacks& callbacks = {});

struct MatchReport {
  int episodes = 0;
  int guard_wins = 0;
  double guard_win_rate = 0;
  double mean_guard_reward = 0;     // per-agent episode mean
  double mean_attacker_reward = 0;
};

// Plays `episodes` seeded episodes between two policies and tallies wins and
// per-agent mean rewards. Deterministic given the seed.
MatchReport evaluate_matchup(const policy::PolicyParams& guard_params,
                             const policy::GraphConfig& guard_graph,
                             const policy::PolicyParams& attacker_params,
                             const policy::GraphConfig& attacker_graph,
                             const env::EnvConfig& env_config,
                             const env::RewardConfig& reward_config,
                             int episodes, std::uint64_t seed);

}  // namespace fortattack::curriculum
