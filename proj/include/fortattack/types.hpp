#pragma once

#include <string>

#include "fortattack/errors.hpp"

namespace fortattack {

enum class Team : unsigned char { Guard = 0, Attacker = 1 };

inline Team opponent_of(Team t) {
  return t == Team::Guard ? Team::Attacker : Team::Guard;
}

inline std::string team_name(Team t) {
  return t == Team::Guard ? "guard" : "attacker";
}

inline Team team_from_name(const std::string& s) {
  if (s == "guard") return Team::Guard;
  if (s == "attacker") return Team::Attacker;
  throw ConfigError("unknown team name: '" + s + "' (expected 'guard' or 'attacker')");
}

}  // namespace fortattack
