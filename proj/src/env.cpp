#include "fortattack/env.hpp"

#include <algorithm>
#include <cmath>

#include "fortattack/rng.hpp"

namespace fortattack::env {

double norm(Vec2 v) { return std::sqrt(v.x * v.x + v.y * v.y); }
double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap_angle(double a) {
  while (a >= kPi) a -= 2 * kPi;
  while (a < -kPi) a += 2 * kPi;
  return a;
}

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ConfigError("config field '" + field + "': " + why);
}

}  // namespace

void EnvConfig::validate() const {
  require(n_guards >= 1, "env.n_guards", "must be >= 1");
  require(n_attackers >= 1, "env.n_attackers", "must be >= 1");
  require(arena_half_extent > 0, "env.arena_half_extent", "must be positive");
  require(fort_radius > 0, "env.fort_radius", "must be positive");
  require(guard_zone_radius >= fort_radius, "env.guard_zone_radius",
          "must be >= fort_radius");
  require(laser_range > 0, "env.laser_range", "must be positive");
  require(laser_half_angle > 0 && laser_half_angle < kPi,
          "env.laser_half_angle", "must be in (0, pi)");
  require(accel > 0, "env.accel", "must be positive");
  require(rot_step > 0, "env.rot_step", "must be positive");
  require(damping >= 0 && damping < 1, "env.damping", "must be in [0, 1)");
  require(max_speed > 0, "env.max_speed", "must be positive");
  require(agent_radius > 0, "env.agent_radius", "must be positive");
  require(episode_length >= 1, "env.episode_length", "must be >= 1");
  auto check_region = [&](const SpawnRegion& r, const std::string& name) {
    require(r.x_max >= r.x_min && r.y_max >= r.y_min, name,
            "region extents are inverted");
    require(r.x_min >= -arena_half_extent && r.x_max <= arena_half_extent &&
                r.y_min >= -arena_half_extent && r.y_max <= arena_half_extent,
            name, "region exceeds the arena");
  };
  check_region(guard_spawn, "env.guard_spawn");
  check_region(attacker_spawn, "env.attacker_spawn");
}

void RewardConfig::validate() const {
  require(guard_leave_fort < 0, "rewards.guard_leave_fort", "must be negative");
  require(guard_return_fort > 0, "rewards.guard_return_fort",
          "must be positive");
  require(attacker_approach_scale > 0, "rewards.attacker_approach_scale",
          "must be positive");
  require(shoot_hit_bonus > 0, "rewards.shoot_hit_bonus", "must be positive");
  require(shot_hit_penalty < 0, "rewards.shot_hit_penalty", "must be negative");
  require(wasted_shot_guard < 0, "rewards.wasted_shot_guard",
          "must be negative");
  require(wasted_shot_attacker < 0, "rewards.wasted_shot_attacker",
          "must be negative");
  require(std::abs(wasted_shot_attacker) > std::abs(wasted_shot_guard),
          "rewards.wasted_shot_attacker",
          "must exceed the guard wasted-shot penalty in magnitude");
  require(all_attackers_dead_guard > 0, "rewards.all_attackers_dead_guard",
          "must be positive");
  require(all_attackers_dead_attacker < 0,
          "rewards.all_attackers_dead_attacker", "must be negative");
  require(fort_reached_attacker > 0, "rewards.fort_reached_attacker",
          "must be positive");
  require(fort_reached_guard < 0, "rewards.fort_reached_guard",
          "must be negative");
}

std::string event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::GuardLeftFort: return "guard_left_fort";
    case EventKind::GuardReturnedFort: return "guard_returned_fort";
    case EventKind::ShotHit: return "shot_hit";
    case EventKind::ShotWasted: return "shot_wasted";
    case EventKind::AllAttackersDead: return "all_attackers_dead";
    case EventKind::FortReached: return "fort_reached";
  }
  throw UsageError("unknown event kind");
}

EventKind event_kind_from_name(const std::string& s) {
  if (s == "guard_left_fort") return EventKind::GuardLeftFort;
  if (s == "guard_returned_fort") return EventKind::GuardReturnedFort;
  if (s == "shot_hit") return EventKind::ShotHit;
  if (s == "shot_wasted") return EventKind::ShotWasted;
  if (s == "all_attackers_dead") return EventKind::AllAttackersDead;
  if (s == "fort_reached") return EventKind::FortReached;
  throw IoError("unknown event kind name: " + s);
}

bool in_guard_zone(Vec2 pos, const EnvConfig& config) {
  return norm(pos - config.fort_center) <= config.guard_zone_radius;
}

bool in_fort(Vec2 pos, const EnvConfig& config) {
  return norm(pos - config.fort_center) <= config.fort_radius;
}

std::vector<double> agent_features(const AgentState& a) {
  return {a.pos.x,
          a.pos.y,
          std::cos(a.orientation),
          std::sin(a.orientation),
          a.vel.x,
          a.vel.y};
}

WorldState reset(const EnvConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, "env/reset"));
  WorldState state;
  const int total = config.n_guards + config.n_attackers;
  state.agents.reserve(total);

  auto place = [&](Team team, const SpawnRegion& region, int count,
                   const std::string& region_name) {
    for (int i = 0; i < count; ++i) {
      AgentState agent;
      agent.team = team;
      agent.id = static_cast<int>(state.agents.size());
      agent.alive = true;
      bool placed = false;
      for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
        Vec2 candidate{rng.uniform(region.x_min, region.x_max),
                       rng.uniform(region.y_min, region.y_max)};
        placed = true;
        for (const auto& other : state.agents)
          if (norm(other.pos - candidate) < 2 * config.agent_radius) {
            placed = false;
            break;
          }
        if (placed) agent.pos = candidate;
      }
      if (!placed)
        throw ConfigError("config field '" + region_name +
                          "': spawn region too small for non-overlapping "
                          "placement of " +
                          std::to_string(count) + " agents");
      agent.orientation = rng.uniform(-kPi, kPi);
      agent.vel = {0, 0};
      state.agents.push_back(agent);
    }
  };

  place(Team::Guard, config.guard_spawn, config.n_guards, "env.guard_spawn");
  place(Team::Attacker, config.attacker_spawn, config.n_attackers,
        "env.attacker_spawn");
  return state;
}

bool laser_hit_test(const AgentState& shooter, const AgentState& target,
                    const EnvConfig& config) {
  if (!target.alive || !shooter.alive) return false;
  if (target.team == shooter.team) return false;
  const Vec2 d = target.pos - shooter.pos;
  const double dist = norm(d);
  if (dist > config.laser_range) return false;
  if (dist == 0.0) return true;  // muzzle contact
  const Vec2 heading{std::cos(shooter.orientation),
                     std::sin(shooter.orientation)};
  const double cos_angle = dot(heading, d) / dist;
  return cos_angle >= std::cos(config.laser_half_angle);
}

std::vector<double> compute_rewards(const std::vector<Event>& events,
                                    const WorldState& prev,
                                    const WorldState& next,
                                    const EnvConfig& config,
                                    const RewardConfig& rewards) {
  std::vector<double> out(next.agents.size(), 0.0);

  // Approach shaping: attackers earn the signed distance they closed toward
  // the fort this step. Only agents alive at the start of the step earn
  // anything.
  for (std::size_t i = 0; i < next.agents.size(); ++i) {
    const auto& before = prev.agents[i];
    if (!before.alive || before.team != Team::Attacker) continue;
    const double d_prev = norm(before.pos - config.fort_center);
    const double d_next = norm(next.agents[i].pos - config.fort_center);
    out[i] += rewards.attacker_approach_scale * (d_prev - d_next);
  }

  for (const auto& ev : events) {
    switch (ev.kind) {
      case EventKind::GuardLeftFort:
        out[ev.actor] += rewards.guard_leave_fort;
        break;
      case EventKind::GuardReturnedFort:
        out[ev.actor] += rewards.guard_return_fort;
        break;
      case EventKind::ShotHit:
        out[ev.actor] += rewards.shoot_hit_bonus;
        out[ev.target] += rewards.shot_hit_penalty;
        break;
      case EventKind::ShotWasted:
        out[ev.actor] += prev.agents[ev.actor].team == Team::Guard
                             ? rewards.wasted_shot_guard
                             : rewards.wasted_shot_attacker;
        break;
      case EventKind::AllAttackersDead:
        for (const auto& agent : next.agents) {
          if (agent.team == Team::Guard && agent.alive)
            out[agent.id] += rewards.all_attackers_dead_guard;
          if (agent.team == Team::Attacker && !agent.alive &&
              prev.agents[agent.id].alive)
            out[agent.id] += rewards.all_attackers_dead_attacker;
        }
        break;
      case EventKind::FortReached:
        out[ev.actor] += rewards.fort_reached_attacker;
        for (const auto& agent : next.agents)
          if (agent.team == Team::Guard && agent.alive)
            out[agent.id] += rewards.fort_reached_guard;
        break;
    }
  }
  return out;
}

StepOutcome step(WorldState& state,
                 const std::vector<std::optional<AgentAction>>& actions,
                 const EnvConfig& config, const RewardConfig& rewards) {
  if (state.done) throw UsageError("step called on a finished episode");
  if (actions.size() != state.agents.size())
    throw UsageError("need one action slot per agent, got " +
                     std::to_string(actions.size()));
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (state.agents[i].alive && !actions[i])
      throw UsageError("missing action for living agent " + std::to_string(i));
    if (!state.agents[i].alive && actions[i])
      throw UsageError("action supplied for dead agent " + std::to_string(i));
  }

  const WorldState prev = state;

  // Physics: acceleration -> damped velocity (speed capped) -> position,
  // clamped to the arena.
  for (std::size_t i = 0; i < state.agents.size(); ++i) {
    auto& agent = state.agents[i];
    if (!agent.alive) continue;
    const AgentAction& act = *actions[i];
    Vec2 a{0, 0};
    switch (act.move) {
      case MoveAction::AccelPosX: a.x = config.accel; break;
      case MoveAction::AccelNegX: a.x = -config.accel; break;
      case MoveAction::AccelPosY: a.y = config.accel; break;
      case MoveAction::AccelNegY: a.y = -config.accel; break;
      case MoveAction::RotateCw:
        agent.orientation = wrap_angle(agent.orientation - config.rot_step);
        break;
      case MoveAction::RotateCcw:
        agent.orientation = wrap_angle(agent.orientation + config.rot_step);
        break;
      case MoveAction::Noop: break;
    }
    agent.vel = (agent.vel + a) * (1.0 - config.damping);
    const double speed = norm(agent.vel);
    if (speed > config.max_speed)
      agent.vel = agent.vel * (config.max_speed / speed);
    agent.pos = agent.pos + agent.vel;
    agent.pos.x = std::clamp(agent.pos.x, -config.arena_half_extent,
                             config.arena_half_extent);
    agent.pos.y = std::clamp(agent.pos.y, -config.arena_half_extent,
                             config.arena_half_extent);
  }

  std::vector<Event> events;

  // Guard-zone membership changes.
  for (std::size_t i = 0; i < state.agents.size(); ++i) {
    const auto& agent = state.agents[i];
    if (!agent.alive || agent.team != Team::Guard) continue;
    const bool was_in = in_guard_zone(prev.agents[i].pos, config);
    const bool is_in = in_guard_zone(agent.pos, config);
    if (was_in && !is_in)
      events.push_back({state.t, EventKind::GuardLeftFort, agent.id, -1});
    if (!was_in && is_in)
      events.push_back({state.t, EventKind::GuardReturnedFort, agent.id, -1});
  }

  // Simultaneous laser resolution: every shot is evaluated against the
  // pre-death snapshot of this tick, so mutual kills are possible and the
  // outcome does not depend on agent ordering.
  std::vector<bool> killed(state.agents.size(), false);
  for (std::size_t i = 0; i < state.agents.size(); ++i) {
    const auto& shooter = state.agents[i];
    if (!shooter.alive || !actions[i] || !actions[i]->shoot) continue;
    bool hit_any = false;
    for (const auto& target : state.agents) {
      if (laser_hit_test(shooter, target, config)) {
        killed[target.id] = true;
        hit_any = true;
        events.push_back({state.t, EventKind::ShotHit, shooter.id, target.id});
      }
    }
    if (!hit_any)
      events.push_back({state.t, EventKind::ShotWasted, shooter.id, -1});
  }
  for (std::size_t i = 0; i < state.agents.size(); ++i)
    if (killed[i]) {
      state.agents[i].alive = false;
      state.agents[i].vel = {0, 0};
    }

  // Terminal checks. A living attacker inside the fort wins outright; only
  // then can the all-dead and timeout rules hand the episode to the guards.
  const int event_t = state.t;
  state.t += 1;
  bool fort_reached = false;
  for (const auto& agent : state.agents)
    if (agent.alive && agent.team == Team::Attacker &&
        in_fort(agent.pos, config)) {
      fort_reached = true;
      events.push_back({event_t, EventKind::FortReached, agent.id, -1});
    }
  bool all_attackers_dead = true;
  for (const auto& agent : state.agents)
    if (agent.team == Team::Attacker && agent.alive) all_attackers_dead = false;

  if (fort_reached) {
    state.done = true;
    state.winner = Team::Attacker;
  } else if (all_attackers_dead) {
    state.done = true;
    state.winner = Team::Guard;
    events.push_back({event_t, EventKind::AllAttackersDead, -1, -1});
  } else if (state.t >= config.episode_length) {
    state.done = true;  // attackers kept away for the whole episode
    state.winner = Team::Guard;
  }

  StepOutcome outcome;
  outcome.rewards = compute_rewards(events, prev, state, config, rewards);
  outcome.events = std::move(events);
  outcome.done = state.done;
  outcome.winner = state.winner;
  outcome.observations.resize(state.agents.size());
  for (const auto& agent : state.agents)
    if (agent.alive)
      outcome.observations[agent.id] = observation_of(state, agent.id);
  return outcome;
}

ObservationView observation_of(const WorldState& state, int agent_id) {
  const auto& self = state.agents.at(agent_id);
  if (!self.alive)
    throw UsageError("observation requested for dead agent " +
                     std::to_string(agent_id));
  ObservationView obs;
  obs.self_features = agent_features(self);
  for (const auto& other : state.agents) {
    if (other.id == agent_id || !other.alive) continue;
    if (other.team == self.team)
      obs.teammates.push_back(agent_features(other));
    else
      obs.opponents.push_back(agent_features(other));
  }
  return obs;
}

}  // namespace fortattack::env
