#include "fortattack/curriculum.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "fortattack/replay.hpp"

namespace fortattack::curriculum {

using nlohmann::json;

std::vector<Extremum> detect_extrema(const std::vector<double>& curve,
                                     double smoothing_sigma, int window) {
  if (window < 1) throw UsageError("detect_extrema: window must be >= 1");
  const int n = static_cast<int>(curve.size());
  if (n <= window)
    throw UsageError("detect_extrema: curve length must exceed the window");
  const std::vector<double> smooth =
      replay::smooth_curve(curve, smoothing_sigma);

  std::vector<Extremum> out;
  for (int i = 1; i + 1 < n; ++i) {
    bool is_max = true, is_min = true;
    for (int j = std::max(0, i - window); j <= std::min(n - 1, i + window);
         ++j) {
      if (j == i) continue;
      if (smooth[j] >= smooth[i]) is_max = false;
      if (smooth[j] <= smooth[i]) is_min = false;
      if (!is_max && !is_min) break;
    }
    if (is_max) out.push_back({i, true});
    if (is_min) out.push_back({i, false});
  }
  return out;
}

std::size_t OpponentLibrary::sample_index(Rng& rng) const {
  if (snapshots.empty()) throw ConfigError("opponent library is empty");
  std::vector<double> weights;
  weights.reserve(snapshots.size());
  for (const auto& s : snapshots) weights.push_back(s.weight);
  return static_cast<std::size_t>(rng.weighted_index(weights));
}

OpponentLibrary load_library(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw IoError("cannot open library manifest: " +
                         manifest_path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw IoError("corrupt library manifest " + manifest_path.string() + ": " +
                  e.what());
  }

  OpponentLibrary lib;
  lib.team = team_from_name(j.at("team").get<std::string>());
  if (!j.contains("entries") || !j.at("entries").is_array() ||
      j.at("entries").empty())
    throw ConfigError("config field 'library.entries': must be a non-empty list");

  const auto base = manifest_path.parent_path();
  double total_weight = 0;
  for (const auto& entry : j.at("entries")) {
    StrategySnapshot snap;
    snap.path = entry.at("path").get<std::string>();
    snap.label = entry.value("label", std::string{});
    snap.weight = entry.value("weight", 1.0);
    snap.iteration = entry.value("iteration", -1);
    snap.mean_reward = entry.value("mean_reward", 0.0);
    if (snap.weight <= 0)
      throw ConfigError("config field 'library.entries.weight': must be positive");
    std::filesystem::path ck_path = snap.path;
    if (ck_path.is_relative()) ck_path = base / ck_path;
    snap.checkpoint = policy::load_checkpoint(ck_path);
    if (snap.checkpoint.team != lib.team)
      throw ConfigError("library checkpoint '" + snap.path +
                        "' belongs to team " +
                        team_name(snap.checkpoint.team) +
                        ", manifest says " + team_name(lib.team));
    total_weight += snap.weight;
    lib.snapshots.push_back(std::move(snap));
  }
  for (auto& snap : lib.snapshots) snap.weight /= total_weight;
  return lib;
}

void save_library_manifest(const std::filesystem::path& manifest_path,
                           const OpponentLibrary& library) {
  json entries = json::array();
  for (const auto& snap : library.snapshots)
    entries.push_back(json{{"path", snap.path},
                           {"label", snap.label},
                           {"weight", snap.weight},
                           {"iteration", snap.iteration},
                           {"mean_reward", snap.mean_reward}});
  json j{{"team", team_name(library.team)}, {"entries", entries}};
  std::ofstream os(manifest_path);
  if (!os) throw IoError("cannot write library manifest: " +
                         manifest_path.string());
  os << j.dump(2) << "\n";
}

EnsembleResult ensemble_train(Team train_team, const OpponentLibrary& library,
                              const env::EnvConfig& env_config,
                              const env::RewardConfig& reward_config,
                              const policy::GraphConfig& graph_config,
                              const ppo::PPOConfig& ppo_config,
                              const ppo::TrainConfig& train_config,
                              std::uint64_t seed,
                              const ppo::TrainCallbacks& callbacks) {
  if (library.snapshots.empty())
    throw ConfigError("ensemble training needs a non-empty opponent library");
  if (library.team != opponent_of(train_team))
    throw ConfigError("opponent library is for team " +
                      team_name(library.team) + ", but the training team is " +
                      team_name(train_team));
  // A single graph config drives every sampled opponent, so the snapshots
  // must agree on architecture.
  for (const auto& snap : library.snapshots)
    if (!(snap.checkpoint.config == library.snapshots.front().checkpoint.config))
      throw ConfigError("library checkpoint '" + snap.path +
                        "' disagrees with the rest of the library on the "
                        "policy architecture");

  // One frozen opponent per episode, drawn from a stream keyed off the
  // episode seed so the draw is i.i.d. and does not disturb action sampling.
  ppo::TeamActor opponent;
  opponent.mode = ppo::TeamActor::Mode::Frozen;
  opponent.config = &library.snapshots.front().checkpoint.config;
  opponent.sampler =
      [&library](std::uint64_t episode_seed) -> const policy::PolicyParams* {
    Rng draw(mix_seed(episode_seed, "library-draw"));
    const auto& snap = library.snapshots[library.sample_index(draw)];
    return &snap.checkpoint.params;
  };

  ppo::TrainConfig cfg = train_config;
  cfg.train_guards = train_team == Team::Guard;
  cfg.train_attackers = train_team == Team::Attacker;

  ppo::TrainResult result =
      train_team == Team::Guard
          ? ppo::train(env_config, reward_config, graph_config, ppo_config,
                       cfg, seed, callbacks, nullptr, &opponent)
          : ppo::train(env_config, reward_config, graph_config, ppo_config,
                       cfg, seed, callbacks, &opponent, nullptr);

  EnsembleResult out;
  out.trained =
      train_team == Team::Guard ? std::move(result.guard)
                                : std::move(result.attacker);
  out.curve = std::move(result.curve);
  return out;
}

MatchReport evaluate_matchup(const policy::PolicyParams& guard_params,
                             const policy::GraphConfig& guard_graph,
                             const policy::PolicyParams& attacker_params,
                             const policy::GraphConfig& attacker_graph,
                             const env::EnvConfig& env_config,
                             const env::RewardConfig& reward_config,
                             int episodes, std::uint64_t seed) {
  if (episodes <= 0)
    throw UsageError("evaluate_matchup: episodes must be positive");

  MatchReport report;
  report.episodes = episodes;
  for (int ep = 0; ep < episodes; ++ep) {
    const std::uint64_t episode_seed =
        mix_seed(seed, "eval-episode", static_cast<std::uint64_t>(ep));
    env::WorldState state = env::reset(env_config, episode_seed);
    Rng action_rng(mix_seed(episode_seed, "actions"));
    std::vector<double> episode_reward(state.agents.size(), 0.0);
    while (!state.done) {
      std::vector<std::optional<env::AgentAction>> actions(state.agents.size());
      for (const auto& agent : state.agents) {
        if (!agent.alive) continue;
        const bool is_guard = agent.team == Team::Guard;
        const policy::ForwardResult fwd = policy::forward(
            env::observation_of(state, agent.id),
            is_guard ? guard_params : attacker_params,
            is_guard ? guard_graph : attacker_graph);
        const policy::SampledAction sampled =
            policy::sample_action(fwd.dist, action_rng);
        actions[agent.id] = env::AgentAction{
            static_cast<env::MoveAction>(sampled.move), sampled.shoot};
      }
      const env::StepOutcome outcome =
          env::step(state, actions, env_config, reward_config);
      for (std::size_t i = 0; i < outcome.rewards.size(); ++i)
        episode_reward[i] += outcome.rewards[i];
    }
    if (*state.winner == Team::Guard) report.guard_wins += 1;
    double guard_sum = 0, attacker_sum = 0;
    for (const auto& agent : state.agents)
      (agent.team == Team::Guard ? guard_sum : attacker_sum) +=
          episode_reward[agent.id];
    report.mean_guard_reward += guard_sum / env_config.n_guards;
    report.mean_attacker_reward += attacker_sum / env_config.n_attackers;
  }
  report.guard_win_rate =
      static_cast<double>(report.guard_wins) / report.episodes;
  report.mean_guard_reward /= report.episodes;
  report.mean_attacker_reward /= report.episodes;
  return report;
}

}  // namespace fortattack::curriculum
