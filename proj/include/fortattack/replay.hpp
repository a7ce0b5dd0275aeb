#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fortattack/env.hpp"
#include "fortattack/image.hpp"
#include "fortattack/policy.hpp"

namespace fortattack::replay {

struct StepRecord {
  int t = 0;
  std::vector<env::AgentState> agents;  // states after the step
  std::vector<std::optional<env::AgentAction>> actions;
  std::vector<double> rewards;
  std::vector<env::Event> events;
  // The focus agent's attention during this step, absent once it is dead.
  std::optional<policy::AttentionReport> focus_attention;
  bool done = false;
  std::optional<Team> winner;
};

// A fully replayable episode: stepping a fresh environment with the recorded
// actions reproduces the recorded states bit-exactly.
struct TrajectoryRecord {
  int version = 1;
  env::EnvConfig env_config;
  env::RewardConfig reward_config;
  std::uint64_t seed = 0;
  int focus_agent = 0;
  std::string guard_checkpoint;     // provenance labels, free text
  std::string attacker_checkpoint;
  std::vector<env::AgentState> initial_agents;
  std::vector<StepRecord> steps;
};

// Plays one episode with both policies sampling from their distributions and
// captures everything needed for playback and rendering.
TrajectoryRecord record_episode(const env::EnvConfig& env_config,
                                const env::RewardConfig& reward_config,
                                const policy::PolicyParams& guard_params,
                                const policy::GraphConfig& guard_graph,
                                const policy::PolicyParams& attacker_params,
                                const policy::GraphConfig& attacker_graph,
                                std::uint64_t seed, int focus_agent);

// Line-delimited JSON, one header line then one line per step.
void save_trajectory(const std::filesystem::path& path,
                     const TrajectoryRecord& record);
TrajectoryRecord load_trajectory(const std::filesystem::path& path);

struct RenderStyle {
  int canvas_px = 400;  // square canvas
  double ring_min_radius_px = 8;
  double ring_max_radius_px = 20;
  double ring_thickness_px = 2;
  Color background{255, 255, 255};
  Color guard_color{46, 155, 76};
  Color attacker_color{204, 54, 54};
  Color fort_color{102, 204, 221};
  Color laser_color{250, 220, 120};
  Color ring_color{240, 200, 40};
  Color focus_dot_color{20, 90, 35};
  Color heading_color{30, 30, 30};
};

// One image per recorded step: fort disc, laser sectors for shooters,
// attention rings around every other agent (radius affine in the weight),
// and a center dot marking the focus agent. Returns the frame paths and
// writes an index file alongside them.
std::vector<std::filesystem::path> render_frames(
    const TrajectoryRecord& record, const RenderStyle& style,
    const std::filesystem::path& out_dir);

// Renders a single step onto a canvas (exposed for pixel-level tests).
Canvas render_step(const TrajectoryRecord& record, const StepRecord& step,
                   const RenderStyle& style);

// Discrete Gaussian smoothing with edge renormalization; the output has the
// same length as the input and a constant sequence passes through unchanged.
std::vector<double> smooth_curve(const std::vector<double>& values,
                                 double sigma);

}  // namespace fortattack::replay
