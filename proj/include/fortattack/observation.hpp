#pragma once

#include <vector>

namespace fortattack {

// What one living agent sees: its own state plus the states of every living
// teammate and opponent, each encoded as
//   (pos_x, pos_y, cos(orientation), sin(orientation), vel_x, vel_y).
// List order carries no meaning; the policy is permutation invariant over
// both lists.
struct ObservationView {
  std::vector<double> self_features;
  std::vector<std::vector<double>> teammates;
  std::vector<std::vector<double>> opponents;
};

inline constexpr int kAgentFeatureDim = 6;

}  // namespace fortattack
