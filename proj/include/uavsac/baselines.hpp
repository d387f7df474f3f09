#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>

#include "uavsac/agent.hpp"
#include "uavsac/environment.hpp"
#include "uavsac/errors.hpp"
#include "uavsac/rng.hpp"

namespace uavsac {

// A policy sees the environment and its observation window and returns the
// requested (unclamped) action.
using Policy = std::function<UavAction(const Environment&, const ObservationWindow&)>;

enum class BaselineKind { random, greedy_nearest, max_power_hover };

inline BaselineKind parse_baseline(const std::string& name) {
  if (name == "random") return BaselineKind::random;
  if (name == "greedy_nearest" || name == "greedy") return BaselineKind::greedy_nearest;
  if (name == "max_power_hover" || name == "hover") return BaselineKind::max_power_hover;
  throw ConfigError("policy", "unknown baseline '" + name + "'");
}

inline std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::random: return "random";
    case BaselineKind::greedy_nearest: return "greedy_nearest";
    case BaselineKind::max_power_hover: return "max_power_hover";
  }
  return "?";
}

// Full-speed move toward the nearest sensor with pending data, at maximum
// power; hovers when every queue is empty. The per-axis step stops exactly on
// the target once it is within reach.
inline UavAction greedy_nearest_action(const Environment& env) {
  const auto& cfg = env.config();
  const Vec2 at = env.uav().position;
  double best = std::numeric_limits<double>::infinity();
  const SensorNode* target = nullptr;
  for (const auto& s : env.sensors()) {
    if (s.pending_bits <= 0.0) continue;
    const double d = std::hypot(s.position.x - at.x, s.position.y - at.y);
    if (d < best) {
      best = d;
      target = &s;
    }
  }
  if (!target) return {0.0, 0.0, cfg.power_max};
  return {std::clamp(target->position.x - at.x, -cfg.move_x_max, cfg.move_x_max),
          std::clamp(target->position.y - at.y, -cfg.move_y_max, cfg.move_y_max), cfg.power_max};
}

inline Policy baseline_policy(BaselineKind kind, std::uint64_t seed) {
  switch (kind) {
    case BaselineKind::random: {
      auto rng = std::make_shared<Rng>(seed);
      return [rng](const Environment& env, const ObservationWindow&) {
        const auto& c = env.config();
        UavAction a;
        a.dx = rng->uniform(-c.move_x_max, c.move_x_max);
        a.dy = rng->uniform(-c.move_y_max, c.move_y_max);
        a.power = rng->uniform(c.power_min, c.power_max);
        return a;
      };
    }
    case BaselineKind::greedy_nearest:
      return [](const Environment& env, const ObservationWindow&) { return greedy_nearest_action(env); };
    case BaselineKind::max_power_hover:
      return [](const Environment& env, const ObservationWindow&) {
        return UavAction{0.0, 0.0, env.config().power_max};
      };
  }
  throw ConfigError("policy", "unknown baseline");
}

}  // namespace uavsac
