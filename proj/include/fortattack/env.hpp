#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fortattack/observation.hpp"
#include "fortattack/types.hpp"

namespace fortattack::env {

struct Vec2 {
  double x = 0;
  double y = 0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;
};

double norm(Vec2 v);
double dot(Vec2 a, Vec2 b);

struct AgentState {
  Vec2 pos;
  double orientation = 0;  // radians, normalized to [-pi, pi)
  Vec2 vel;
  bool alive = true;
  Team team = Team::Guard;
  int id = 0;

  bool operator==(const AgentState&) const = default;
};

// The 7 movement actions. Shooting is a separate binary channel fired
// alongside the movement choice.
enum class MoveAction : int {
  AccelPosX = 0,
  AccelNegX = 1,
  AccelPosY = 2,
  AccelNegY = 3,
  RotateCw = 4,
  RotateCcw = 5,
  Noop = 6,
};

inline constexpr int kNumMoveActions = 7;

struct AgentAction {
  MoveAction move = MoveAction::Noop;
  bool shoot = false;
};

struct SpawnRegion {
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
};

struct EnvConfig {
  int n_guards = 5;
  int n_attackers = 5;
  double arena_half_extent = 1.0;
  Vec2 fort_center{0.0, 1.0};
  double fort_radius = 0.28;
  // Guards count as "at the fort" within this larger disc around the fort
  // center; crossing its boundary triggers the leave/return rewards.
  double guard_zone_radius = 0.56;
  double laser_range = 0.7;
  double laser_half_angle = 0.35;  // radians
  double accel = 0.012;
  double rot_step = 0.39269908169872414;  // pi/8
  double damping = 0.12;   // per-step velocity decay factor
  double max_speed = 0.1;
  double agent_radius = 0.045;
  int episode_length = 100;
  SpawnRegion guard_spawn{-0.35, 0.35, 0.6, 0.9};
  SpawnRegion attacker_spawn{-0.85, 0.85, -0.9, -0.6};

  void validate() const;  // throws ConfigError naming the offending field
};

// One signed magnitude per reward-table row. Signs are validated: shaped and
// terminal rewards must keep their table signs, and the wasted-shot penalty
// must sting attackers more than guards.
struct RewardConfig {
  double guard_leave_fort = -0.2;
  double guard_return_fort = 0.2;
  double attacker_approach_scale = 0.5;  // per unit of distance closed
  double shoot_hit_bonus = 1.0;
  double shot_hit_penalty = -1.0;
  double wasted_shot_guard = -0.1;
  double wasted_shot_attacker = -0.3;
  double all_attackers_dead_guard = 10.0;
  double all_attackers_dead_attacker = -10.0;  // attackers killed on the final step
  double fort_reached_attacker = 10.0;
  double fort_reached_guard = -10.0;

  void validate() const;
};

enum class EventKind : int {
  GuardLeftFort = 0,
  GuardReturnedFort = 1,
  ShotHit = 2,      // actor killed target
  ShotWasted = 3,   // actor fired and hit nothing
  AllAttackersDead = 4,
  FortReached = 5,  // actor is the attacker that reached the fort
};

std::string event_kind_name(EventKind k);
EventKind event_kind_from_name(const std::string& s);

struct Event {
  int t = 0;
  EventKind kind = EventKind::ShotWasted;
  int actor = -1;
  int target = -1;

  bool operator==(const Event&) const = default;
};

struct WorldState {
  std::vector<AgentState> agents;  // guards 0..N1-1, attackers N1..N1+N2-1
  int t = 0;
  bool done = false;
  std::optional<Team> winner;

  bool operator==(const WorldState&) const = default;
};

struct StepOutcome {
  // observations[id] is populated for living agents only.
  std::vector<std::optional<ObservationView>> observations;
  std::vector<double> rewards;  // indexed by agent id
  std::vector<Event> events;
  bool done = false;
  std::optional<Team> winner;
};

// Spawns both teams in their regions with non-overlapping placements.
// Identical (config, seed) gives a bit-identical state.
WorldState reset(const EnvConfig& config, std::uint64_t seed);

// Advances the world one tick: physics, simultaneous laser resolution against
// the pre-death snapshot, rewards, terminal checks. Exactly one action per
// living agent; an action supplied for a dead agent is a contract error.
StepOutcome step(WorldState& state,
                 const std::vector<std::optional<AgentAction>>& actions,
                 const EnvConfig& config, const RewardConfig& rewards);

// True iff the target is alive, on the opposing team, within laser range and
// within the beam's angular window of the shooter's heading.
bool laser_hit_test(const AgentState& shooter, const AgentState& target,
                    const EnvConfig& config);

// Maps this step's events plus the state transition onto per-agent rewards.
// Approach shaping for attackers is read off the two states; everything else
// comes from the event list.
std::vector<double> compute_rewards(const std::vector<Event>& events,
                                    const WorldState& prev,
                                    const WorldState& next,
                                    const EnvConfig& config,
                                    const RewardConfig& rewards);

ObservationView observation_of(const WorldState& state, int agent_id);

std::vector<double> agent_features(const AgentState& a);

bool in_guard_zone(Vec2 pos, const EnvConfig& config);
bool in_fort(Vec2 pos, const EnvConfig& config);

}  // namespace fortattack::env
