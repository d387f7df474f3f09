#pragma once

// Experiment configuration: JSON load/dump, environment-variable overrides
// and a content hash.
//
// File schema (every key optional; defaults fill the rest):
//   {
//     "scenario": { "x_min", "x_max", "y_min", "y_max", "n_sensors", "altitude",
//                   "slot_duration", "horizon", "d_max", "move_x_max", "move_y_max",
//                   "power_min", "power_max", "start_x", "start_y",
//                   "weight_energy", "weight_data", "weight_fairness",
//                   "boundary_penalty", "arrival_prob", "data_mean", "data_std",
//                   "fixed_layout", "seed",
//                   "wpt": { "tx_gain", "rx_gain", "wavelength", "path_loss_exp",
//                            "p_min", "p_max", "rectifier_eff" },
//                   "channel": { "ref_path_loss", "nlos_atten", "env_c", "env_d",
//                                "noise_power", "total_bandwidth", "rate_threshold" },
//                   "propulsion": { "blade_profile_power", "induced_power", "tip_speed",
//                                   "mean_induced_velocity", "fuselage_drag_ratio",
//                                   "air_density", "rotor_solidity", "rotor_disc_area" } },
//     "agent": { "gamma", "tau", "lr_actor", "lr_critic", "lr_alpha", "batch_size",
//                "target_entropy", "warmup_steps", "updates_per_step", "initial_alpha",
//                "use_per", "use_performer", "history", "embed_dim", "num_features",
//                "actor_hidden": [..], "critic_hidden": [..],
//                "replay": { "capacity", "alpha", "beta_start", "beta_anneal_steps", "epsilon" } },
//     "run": { "episodes", "seeds": [..], "eval_episodes", "checkpoint_every",
//              "smoothing_window", "label" }
//   }
// Any power-valued key (p_min, p_max, noise_power, power_min, power_max) also
// accepts a "<key>_dbm" spelling. Environment variables named
// UAVSAC_<PATH> (path upper-cased, dots as underscores, e.g.
// UAVSAC_SCENARIO_N_SENSORS or UAVSAC_AGENT_REPLAY_ALPHA) override file values.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "uavsac/agent.hpp"
#include "uavsac/environment.hpp"
#include "uavsac/errors.hpp"
#include "uavsac/physics.hpp"

namespace uavsac {

struct RunOptions {
  int episodes = 300;
  std::vector<std::uint64_t> seeds{1};
  int eval_episodes = 50;
  int checkpoint_every = 50;
  int smoothing_window = 20;
  std::string label = "sac-pp";
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  AgentConfig agent;
  RunOptions run;

  void validate() const {
    scenario.validate();
    agent.validate();
    if (run.episodes < 1) throw ConfigError("run.episodes", "must be at least 1");
    if (run.seeds.empty()) throw ConfigError("run.seeds", "must list at least one seed");
    if (run.eval_episodes < 0) throw ConfigError("run.eval_episodes", "must be non-negative");
    if (run.checkpoint_every < 1) throw ConfigError("run.checkpoint_every", "must be at least 1");
    if (run.smoothing_window < 1) throw ConfigError("run.smoothing_window", "must be at least 1");
  }
};

namespace detail {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "config fields assume a 64-bit size_t");

using FieldRef = std::variant<double*, int*, std::uint64_t*, bool*, std::string*, std::vector<std::uint64_t>*>;

struct Field {
  std::string path;
  FieldRef ref;
  bool power = false;  // accepts a *_dbm spelling
};

inline std::vector<Field> scenario_fields(ScenarioConfig& s, const std::string& p) {
  auto& w = s.wpt;
  auto& c = s.channel;
  auto& q = s.propulsion;
  return {
      {p + "x_min", &s.x_min},
      {p + "x_max", &s.x_max},
      {p + "y_min", &s.y_min},
      {p + "y_max", &s.y_max},
      {p + "n_sensors", &s.n_sensors},
      {p + "altitude", &s.altitude},
      {p + "slot_duration", &s.slot_duration},
      {p + "horizon", &s.horizon},
      {p + "d_max", &s.d_max},
      {p + "move_x_max", &s.move_x_max},
      {p + "move_y_max", &s.move_y_max},
      {p + "power_min", &s.power_min, true},
      {p + "power_max", &s.power_max, true},
      {p + "start_x", &s.start.x},
      {p + "start_y", &s.start.y},
      {p + "weight_energy", &s.weight_energy},
      {p + "weight_data", &s.weight_data},
      {p + "weight_fairness", &s.weight_fairness},
      {p + "boundary_penalty", &s.boundary_penalty},
      {p + "arrival_prob", &s.arrival_prob},
      {p + "data_mean", &s.data_mean},
      {p + "data_std", &s.data_std},
      {p + "fixed_layout", &s.fixed_layout},
      {p + "seed", &s.seed},
      {p + "wpt.tx_gain", &w.tx_gain},
      {p + "wpt.rx_gain", &w.rx_gain},
      {p + "wpt.wavelength", &w.wavelength},
      {p + "wpt.path_loss_exp", &w.path_loss_exp},
      {p + "wpt.p_min", &w.p_min, true},
      {p + "wpt.p_max", &w.p_max, true},
      {p + "wpt.rectifier_eff", &w.rectifier_eff},
      {p + "channel.ref_path_loss", &c.ref_path_loss},
      {p + "channel.nlos_atten", &c.nlos_atten},
      {p + "channel.env_c", &c.env_c},
      {p + "channel.env_d", &c.env_d},
      {p + "channel.noise_power", &c.noise_power, true},
      {p + "channel.total_bandwidth", &c.total_bandwidth},
      {p + "channel.rate_threshold", &c.rate_threshold},
      {p + "propulsion.blade_profile_power", &q.blade_profile_power},
      {p + "propulsion.induced_power", &q.induced_power},
      {p + "propulsion.tip_speed", &q.tip_speed},
      {p + "propulsion.mean_induced_velocity", &q.mean_induced_velocity},
      {p + "propulsion.fuselage_drag_ratio", &q.fuselage_drag_ratio},
      {p + "propulsion.air_density", &q.air_density},
      {p + "propulsion.rotor_solidity", &q.rotor_solidity},
      {p + "propulsion.rotor_disc_area", &q.rotor_disc_area},
  };
}

inline std::vector<Field> agent_fields(AgentConfig& a, const std::string& p) {
  return {
      {p + "gamma", &a.gamma},
      {p + "tau", &a.tau},
      {p + "lr_actor", &a.lr_actor},
      {p + "lr_critic", &a.lr_critic},
      {p + "lr_alpha", &a.lr_alpha},
      {p + "batch_size", &a.batch_size},
      {p + "target_entropy", &a.target_entropy},
      {p + "warmup_steps", &a.warmup_steps},
      {p + "updates_per_step", &a.updates_per_step},
      {p + "initial_alpha", &a.initial_alpha},
      {p + "use_per", &a.use_per},
      {p + "use_performer", &a.use_performer},
      {p + "history", &a.history},
      {p + "embed_dim", &a.embed_dim},
      {p + "num_features", &a.num_features},
      {p + "actor_hidden", &a.actor_hidden},
      {p + "critic_hidden", &a.critic_hidden},
      {p + "replay.capacity", &a.replay.capacity},
      {p + "replay.alpha", &a.replay.alpha},
      {p + "replay.beta_start", &a.replay.beta_start},
      {p + "replay.beta_anneal_steps", &a.replay.beta_anneal_steps},
      {p + "replay.epsilon", &a.replay.epsilon},
  };
}

inline std::vector<Field> run_fields(RunOptions& r, const std::string& p) {
  return {
      {p + "episodes", &r.episodes},
      {p + "seeds", &r.seeds},
      {p + "eval_episodes", &r.eval_episodes},
      {p + "checkpoint_every", &r.checkpoint_every},
      {p + "smoothing_window", &r.smoothing_window},
      {p + "label", &r.label},
  };
}

inline std::vector<Field> all_fields(ExperimentConfig& c) {
  auto f = scenario_fields(c.scenario, "scenario.");
  auto a = agent_fields(c.agent, "agent.");
  auto r = run_fields(c.run, "run.");
  f.insert(f.end(), a.begin(), a.end());
  f.insert(f.end(), r.begin(), r.end());
  return f;
}

inline void flatten(const nlohmann::json& j, const std::string& prefix, std::vector<std::pair<std::string, nlohmann::json>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, path, out);
    } else {
      out.emplace_back(path, *it);
    }
  }
}

inline void assign(const Field& f, const nlohmann::json& v, bool from_dbm) {
  try {
    std::visit(
        [&](auto* ptr) {
          using U = std::remove_pointer_t<decltype(ptr)>;
          if constexpr (std::is_same_v<U, double>) {
            const double x = v.get<double>();
            *ptr = from_dbm ? physics::dbm_to_watts(x) : x;
          } else {
            *ptr = v.get<U>();
          }
        },
        f.ref);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(f.path, std::string("wrong type: ") + e.what());
  }
}

inline nlohmann::json parse_env_value(const std::string& s) {
  try {
    return nlohmann::json::parse(s);
  } catch (const nlohmann::json::exception&) {
    return nlohmann::json(s);
  }
}

inline std::string env_name(const std::string& path) {
  std::string n = "UAVSAC_";
  for (char ch : path) n += ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return n;
}

}  // namespace detail

// Applies JSON values onto `cfg`; unknown keys raise ConfigError.
inline void apply_json(ExperimentConfig& cfg, const nlohmann::json& j) {
  auto fields = detail::all_fields(cfg);
  std::vector<std::pair<std::string, nlohmann::json>> flat;
  detail::flatten(j, "", flat);
  for (const auto& [path, value] : flat) {
    bool matched = false;
    for (const auto& f : fields) {
      if (f.path == path) {
        detail::assign(f, value, false);
        matched = true;
      } else if (f.power && f.path + "_dbm" == path) {
        detail::assign(f, value, true);
        matched = true;
      }
      if (matched) break;
    }
    if (!matched) throw ConfigError(path, "unknown configuration key");
  }
}

// UAVSAC_* overrides from the process environment.
inline void apply_env_overrides(ExperimentConfig& cfg) {
  for (const auto& f : detail::all_fields(cfg)) {
    if (const char* v = std::getenv(detail::env_name(f.path).c_str())) detail::assign(f, detail::parse_env_value(v), false);
    if (f.power) {
      if (const char* v = std::getenv(detail::env_name(f.path + "_dbm").c_str()))
        detail::assign(f, detail::parse_env_value(v), true);
    }
  }
}

inline nlohmann::json to_json(const ExperimentConfig& cfg_in) {
  ExperimentConfig cfg = cfg_in;
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : detail::all_fields(cfg)) {
    nlohmann::json::json_pointer ptr("/" + [&] {
      std::string s = f.path;
      for (auto& ch : s)
        if (ch == '.') ch = '/';
      return s;
    }());
    std::visit([&](auto* v) { j[ptr] = *v; }, f.ref);
  }
  return j;
}

inline ExperimentConfig load_config(const std::string& path, bool env_overrides = true) {
  ExperimentConfig cfg;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config", "cannot open " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is, nullptr, true, true);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config", std::string("parse error: ") + e.what());
    }
    apply_json(cfg, j);
  }
  if (env_overrides) apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

// FNV-1a 64 over the canonical (sorted-key) JSON dump.
inline std::string content_hash(const nlohmann::json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string config_hash(const ExperimentConfig& cfg) { return content_hash(to_json(cfg)); }
inline std::string scenario_hash(const ExperimentConfig& cfg) { return content_hash(to_json(cfg)["scenario"]); }

}  // namespace uavsac
