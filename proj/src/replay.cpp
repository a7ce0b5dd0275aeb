#include "fortattack/replay.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "fortattack/rng.hpp"

namespace fortattack::replay {

using nlohmann::json;

namespace {

json agent_to_json(const env::AgentState& a) {
  return json{{"id", a.id},
              {"team", team_name(a.team)},
              {"pos", {a.pos.x, a.pos.y}},
              {"ori", a.orientation},
              {"vel", {a.vel.x, a.vel.y}},
              {"alive", a.alive}};
}

env::AgentState agent_from_json(const json& j) {
  env::AgentState a;
  a.id = j.at("id").get<int>();
  a.team = team_from_name(j.at("team").get<std::string>());
  a.pos = {j.at("pos").at(0).get<double>(), j.at("pos").at(1).get<double>()};
  a.orientation = j.at("ori").get<double>();
  a.vel = {j.at("vel").at(0).get<double>(), j.at("vel").at(1).get<double>()};
  a.alive = j.at("alive").get<bool>();
  return a;
}

json env_config_to_json(const env::EnvConfig& c) {
  return json{{"n_guards", c.n_guards},
              {"n_attackers", c.n_attackers},
              {"arena_half_extent", c.arena_half_extent},
              {"fort_center", {c.fort_center.x, c.fort_center.y}},
              {"fort_radius", c.fort_radius},
              {"guard_zone_radius", c.guard_zone_radius},
              {"laser_range", c.laser_range},
              {"laser_half_angle", c.laser_half_angle},
              {"accel", c.accel},
              {"rot_step", c.rot_step},
              {"damping", c.damping},
              {"max_speed", c.max_speed},
              {"agent_radius", c.agent_radius},
              {"episode_length", c.episode_length},
              {"guard_spawn",
               {c.guard_spawn.x_min, c.guard_spawn.x_max, c.guard_spawn.y_min,
                c.guard_spawn.y_max}},
              {"attacker_spawn",
               {c.attacker_spawn.x_min, c.attacker_spawn.x_max,
                c.attacker_spawn.y_min, c.attacker_spawn.y_max}}};
}

env::EnvConfig env_config_from_json(const json& j) {
  env::EnvConfig c;
  c.n_guards = j.at("n_guards").get<int>();
  c.n_attackers = j.at("n_attackers").get<int>();
  c.arena_half_extent = j.at("arena_half_extent").get<double>();
  c.fort_center = {j.at("fort_center").at(0).get<double>(),
                   j.at("fort_center").at(1).get<double>()};
  c.fort_radius = j.at("fort_radius").get<double>();
  c.guard_zone_radius = j.at("guard_zone_radius").get<double>();
  c.laser_range = j.at("laser_range").get<double>();
  c.laser_half_angle = j.at("laser_half_angle").get<double>();
  c.accel = j.at("accel").get<double>();
  c.rot_step = j.at("rot_step").get<double>();
  c.damping = j.at("damping").get<double>();
  c.max_speed = j.at("max_speed").get<double>();
  c.agent_radius = j.at("agent_radius").get<double>();
  c.episode_length = j.at("episode_length").get<int>();
  const auto& g = j.at("guard_spawn");
  c.guard_spawn = {g.at(0).get<double>(), g.at(1).get<double>(),
                   g.at(2).get<double>(), g.at(3).get<double>()};
  const auto& a = j.at("attacker_spawn");
  c.attacker_spawn = {a.at(0).get<double>(), a.at(1).get<double>(),
                      a.at(2).get<double>(), a.at(3).get<double>()};
  return c;
}

json reward_config_to_json(const env::RewardConfig& r) {
  return json{{"guard_leave_fort", r.guard_leave_fort},
              {"guard_return_fort", r.guard_return_fort},
              {"attacker_approach_scale", r.attacker_approach_scale},
              {"shoot_hit_bonus", r.shoot_hit_bonus},
              {"shot_hit_penalty", r.shot_hit_penalty},
              {"wasted_shot_guard", r.wasted_shot_guard},
              {"wasted_shot_attacker", r.wasted_shot_attacker},
              {"all_attackers_dead_guard", r.all_attackers_dead_guard},
              {"all_attackers_dead_attacker", r.all_attackers_dead_attacker},
              {"fort_reached_attacker", r.fort_reached_attacker},
              {"fort_reached_guard", r.fort_reached_guard}};
}

env::RewardConfig reward_config_from_json(const json& j) {
  env::RewardConfig r;
  r.guard_leave_fort = j.at("guard_leave_fort").get<double>();
  r.guard_return_fort = j.at("guard_return_fort").get<double>();
  r.attacker_approach_scale = j.at("attacker_approach_scale").get<double>();
  r.shoot_hit_bonus = j.at("shoot_hit_bonus").get<double>();
  r.shot_hit_penalty = j.at("shot_hit_penalty").get<double>();
  r.wasted_shot_guard = j.at("wasted_shot_guard").get<double>();
  r.wasted_shot_attacker = j.at("wasted_shot_attacker").get<double>();
  r.all_attackers_dead_guard = j.at("all_attackers_dead_guard").get<double>();
  r.all_attackers_dead_attacker =
      j.at("all_attackers_dead_attacker").get<double>();
  r.fort_reached_attacker = j.at("fort_reached_attacker").get<double>();
  r.fort_reached_guard = j.at("fort_reached_guard").get<double>();
  return r;
}

json step_to_json(const StepRecord& s) {
  json agents = json::array();
  for (const auto& a : s.agents) agents.push_back(agent_to_json(a));
  json actions = json::array();
  for (std::size_t id = 0; id < s.actions.size(); ++id) {
    if (!s.actions[id]) continue;
    actions.push_back(json{{"id", static_cast<int>(id)},
                           {"move", static_cast<int>(s.actions[id]->move)},
                           {"shoot", s.actions[id]->shoot}});
  }
  json events = json::array();
  for (const auto& ev : s.events)
    events.push_back(json{{"t", ev.t},
                          {"kind", env::event_kind_name(ev.kind)},
                          {"actor", ev.actor},
                          {"target", ev.target}});
  json out{{"t", s.t},         {"agents", agents},   {"actions", actions},
           {"rewards", s.rewards}, {"events", events},   {"done", s.done}};
  if (s.winner) out["winner"] = team_name(*s.winner);
  if (s.focus_attention) {
    out["attention"] = json{{"psi", s.focus_attention->opponent_weights},
                            {"phi", s.focus_attention->teammate_weights}};
  }
  return out;
}

StepRecord step_from_json(const json& j, int n_agents) {
  StepRecord s;
  s.t = j.at("t").get<int>();
  for (const auto& a : j.at("agents")) s.agents.push_back(agent_from_json(a));
  s.actions.resize(static_cast<std::size_t>(n_agents));
  for (const auto& act : j.at("actions")) {
    const int id = act.at("id").get<int>();
    if (id < 0 || id >= n_agents) throw IoError("trajectory action id out of range");
    s.actions[static_cast<std::size_t>(id)] =
        env::AgentAction{static_cast<env::MoveAction>(act.at("move").get<int>()),
                         act.at("shoot").get<bool>()};
  }
  s.rewards = j.at("rewards").get<std::vector<double>>();
  for (const auto& ev : j.at("events"))
    s.events.push_back(env::Event{
        ev.at("t").get<int>(),
        env::event_kind_from_name(ev.at("kind").get<std::string>()),
        ev.at("actor").get<int>(), ev.at("target").get<int>()});
  s.done = j.at("done").get<bool>();
  if (j.contains("winner"))
    s.winner = team_from_name(j.at("winner").get<std::string>());
  if (j.contains("attention")) {
    policy::AttentionReport report;
    report.opponent_weights =
        j.at("attention").at("psi").get<std::vector<double>>();
    report.teammate_weights =
        j.at("attention").at("phi").get<std::vector<std::vector<double>>>();
    s.focus_attention = std::move(report);
  }
  return s;
}

}  // namespace

TrajectoryRecord record_episode(const env::EnvConfig& env_config,
                                const env::RewardConfig& reward_config,
                                const policy::PolicyParams& guard_params,
                                const policy::GraphConfig& guard_graph,
                                const policy::PolicyParams& attacker_params,
                                const policy::GraphConfig& attacker_graph,
                                std::uint64_t seed, int focus_agent) {
  TrajectoryRecord record;
  record.env_config = env_config;
  record.reward_config = reward_config;
  record.seed = seed;
  record.focus_agent = focus_agent;

  env::WorldState state = env::reset(env_config, seed);
  if (focus_agent < 0 || focus_agent >= static_cast<int>(state.agents.size()))
    throw UsageError("focus agent id out of range");
  record.initial_agents = state.agents;
  Rng action_rng(mix_seed(seed, "actions"));

  while (!state.done) {
    StepRecord step;
    step.t = state.t;
    std::vector<std::optional<env::AgentAction>> actions(state.agents.size());
    for (const auto& agent : state.agents) {
      if (!agent.alive) continue;
      const bool is_guard = agent.team == Team::Guard;
      const ObservationView obs = env::observation_of(state, agent.id);
      const policy::ForwardResult fwd = policy::forward(
          obs, is_guard ? guard_params : attacker_params,
          is_guard ? guard_graph : attacker_graph);
      const policy::SampledAction sampled =
          policy::sample_action(fwd.dist, action_rng);
      actions[agent.id] = env::AgentAction{
          static_cast<env::MoveAction>(sampled.move), sampled.shoot};
      if (agent.id == focus_agent) step.focus_attention = fwd.attention;
    }

    const env::StepOutcome outcome =
        env::step(state, actions, env_config, reward_config);
    step.actions = std::move(actions);
    step.agents = state.agents;
    step.rewards = outcome.rewards;
    step.events = outcome.events;
    step.done = outcome.done;
    step.winner = outcome.winner;
    record.steps.push_back(std::move(step));
  }
  return record;
}

void save_trajectory(const std::filesystem::path& path,
                     const TrajectoryRecord& record) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open trajectory for writing: " + path.string());
  json header{{"format", "fortattack-trajectory"},
              {"version", record.version},
              {"seed", record.seed},
              {"focus_agent", record.focus_agent},
              {"guard_checkpoint", record.guard_checkpoint},
              {"attacker_checkpoint", record.attacker_checkpoint},
              {"env", env_config_to_json(record.env_config)},
              {"rewards", reward_config_to_json(record.reward_config)}};
  json initial = json::array();
  for (const auto& a : record.initial_agents)
    initial.push_back(agent_to_json(a));
  header["initial_agents"] = initial;
  os << header.dump() << "\n";
  for (const auto& step : record.steps) os << step_to_json(step).dump() << "\n";
  if (!os) throw IoError("failed writing trajectory: " + path.string());
}

TrajectoryRecord load_trajectory(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open trajectory: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty trajectory file");
  TrajectoryRecord record;
  try {
    json header = json::parse(line);
    if (header.at("format").get<std::string>() != "fortattack-trajectory")
      throw IoError("not a trajectory file: " + path.string());
    record.version = header.at("version").get<int>();
    record.seed = header.at("seed").get<std::uint64_t>();
    record.focus_agent = header.at("focus_agent").get<int>();
    record.guard_checkpoint = header.at("guard_checkpoint").get<std::string>();
    record.attacker_checkpoint =
        header.at("attacker_checkpoint").get<std::string>();
    record.env_config = env_config_from_json(header.at("env"));
    record.reward_config = reward_config_from_json(header.at("rewards"));
    for (const auto& a : header.at("initial_agents"))
      record.initial_agents.push_back(agent_from_json(a));
    const int n_agents = static_cast<int>(record.initial_agents.size());
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      record.steps.push_back(step_from_json(json::parse(line), n_agents));
    }
  } catch (const json::exception& e) {
    throw IoError("corrupt trajectory " + path.string() + ": " + e.what());
  }
  return record;
}

std::vector<double> smooth_curve(const std::vector<double>& values,
                                 double sigma) {
  if (sigma <= 0) throw UsageError("smooth_curve: sigma must be positive");
  const int n = static_cast<int>(values.size());
  const int half = std::max(1, static_cast<int>(std::ceil(4 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
  for (int k = -half; k <= half; ++k)
    kernel[static_cast<std::size_t>(k + half)] =
        std::exp(-0.5 * (k / sigma) * (k / sigma));

  std::vector<double> out(values.size());
  for (int i = 0; i < n; ++i) {
    double acc = 0, weight = 0;
    for (int k = -half; k <= half; ++k) {
      const int j = i + k;
      if (j < 0 || j >= n) continue;  // edge renormalization
      const double w = kernel[static_cast<std::size_t>(k + half)];
      acc += w * values[static_cast<std::size_t>(j)];
      weight += w;
    }
    out[static_cast<std::size_t>(i)] = acc / weight;
  }
  return out;
}

namespace {

struct WorldToCanvas {
  double scale;
  double half_extent;
  int px;

  double x(double wx) const { return (wx + half_extent) * scale; }
  double y(double wy) const { return (half_extent - wy) * scale; }  // +y is up
};

}  // namespace

Canvas render_step(const TrajectoryRecord& record, const StepRecord& step,
                   const RenderStyle& style) {
  const auto& cfg = record.env_config;
  Canvas canvas(style.canvas_px, style.canvas_px, style.background);
  const WorldToCanvas map{style.canvas_px / (2 * cfg.arena_half_extent),
                          cfg.arena_half_extent, style.canvas_px};

  // Fort disc (its center sits on the arena edge, so it shows as the
  // semicircle at the top).
  canvas.fill_circle(map.x(cfg.fort_center.x), map.y(cfg.fort_center.y),
                     cfg.fort_radius * map.scale, style.fort_color);

  // Laser sectors under the agents.
  for (std::size_t id = 0; id < step.actions.size(); ++id) {
    if (!step.actions[id] || !step.actions[id]->shoot) continue;
    const auto& shooter = step.agents[id];
    canvas.fill_sector(map.x(shooter.pos.x), map.y(shooter.pos.y),
                       cfg.laser_range * map.scale, -shooter.orientation,
                       cfg.laser_half_angle, style.laser_color);
  }

  // Attention rings around everyone the focus agent is watching. Ring radius
  // is affine in the attention weight.
  if (step.focus_attention) {
    const auto& focus = step.agents[static_cast<std::size_t>(record.focus_agent)];
    auto ring_radius = [&](double w) {
      return style.ring_min_radius_px +
             w * (style.ring_max_radius_px - style.ring_min_radius_px);
    };
    std::vector<const env::AgentState*> mates, opponents;
    for (const auto& a : step.agents) {
      if (!a.alive || a.id == focus.id) continue;
      (a.team == focus.team ? mates : opponents).push_back(&a);
    }
    const auto& psi = step.focus_attention->opponent_weights;
    for (std::size_t j = 0; j < opponents.size() && j < psi.size(); ++j)
      canvas.draw_ring(map.x(opponents[j]->pos.x), map.y(opponents[j]->pos.y),
                       ring_radius(psi[j]), style.ring_thickness_px,
                       style.ring_color);
    if (!step.focus_attention->teammate_weights.empty()) {
      const auto& phi = step.focus_attention->teammate_weights.back();
      for (std::size_t i = 0; i < mates.size() && i < phi.size(); ++i)
        canvas.draw_ring(map.x(mates[i]->pos.x), map.y(mates[i]->pos.y),
                         ring_radius(phi[i]), style.ring_thickness_px,
                         style.ring_color);
    }
  }

  // Agents with heading ticks; the focus agent gets its center dot.
  const double agent_px = cfg.agent_radius * map.scale;
  for (const auto& a : step.agents) {
    if (!a.alive) continue;
    const double cx = map.x(a.pos.x), cy = map.y(a.pos.y);
    canvas.fill_circle(cx, cy, agent_px,
                       a.team == Team::Guard ? style.guard_color
                                             : style.attacker_color);
    canvas.draw_line(cx, cy, cx + 1.6 * agent_px * std::cos(a.orientation),
                     cy - 1.6 * agent_px * std::sin(a.orientation),
                     style.heading_color);
    if (a.id == record.focus_agent)
      canvas.fill_circle(cx, cy, agent_px * 0.4, style.focus_dot_color);
  }
  return canvas;
}

std::vector<std::filesystem::path> render_frames(
    const TrajectoryRecord& record, const RenderStyle& style,
    const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> frames;
  for (std::size_t i = 0; i < record.steps.size(); ++i) {
    Canvas canvas = render_step(record, record.steps[i], style);
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.ppm", i);
    const auto path = out_dir / name;
    canvas.write_ppm(path);
    frames.push_back(path);
  }
  json index{{"format", "fortattack-frames"},
             {"count", frames.size()},
             {"canvas_px", style.canvas_px}};
  json names = json::array();
  for (const auto& f : frames) names.push_back(f.filename().string());
  index["frames"] = names;
  std::ofstream os(out_dir / "index.json");
  if (!os) throw IoError("cannot write frame index in " + out_dir.string());
  os << index.dump(2) << "\n";
  return frames;
}

}  // namespace fortattack::replay
