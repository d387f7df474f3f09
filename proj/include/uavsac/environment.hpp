#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uavsac/errors.hpp"
#include "uavsac/physics.hpp"
#include "uavsac/rng.hpp"

namespace uavsac {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct ScenarioConfig {
  double x_min = 0.0, x_max = 400.0;
  double y_min = 0.0, y_max = 400.0;
  int n_sensors = 20;
  double altitude = 50.0;          // m
  double slot_duration = 1.0;      // s
  int horizon = 200;               // slots per episode
  double d_max = 100.0;            // service/charging radius (3D), m
  double move_x_max = 15.0;        // m per slot
  double move_y_max = 15.0;
  double power_min = 1.0;          // UAV transmit power limits, W
  double power_max = 40.0;
  Vec2 start{100.0, 100.0};
  double weight_energy = 1e-3;     // per joule
  double weight_data = 1e-6;       // per bit
  double weight_fairness = 1.0;
  double boundary_penalty = 10.0;
  double arrival_prob = 0.2;
  double data_mean = 1e6;          // bits per arrival
  double data_std = 2e5;
  physics::WptParams wpt;
  physics::ChannelParams channel;
  physics::PropulsionParams propulsion;
  // When set, sensor positions come from `seed` and stay fixed across
  // episodes; only arrivals vary with the reset seed.
  bool fixed_layout = true;
  std::uint64_t seed = 1;

  // Throws ConfigError naming the first offending field.
  void validate() const;

  std::size_t observation_size() const { return 2 + 3 * static_cast<std::size_t>(n_sensors); }
};

// Reduced scenario used by the learning smoke checks: 100x100 m, 5 sensors, 100 slots.
inline ScenarioConfig reduced_scenario() {
  ScenarioConfig cfg;
  cfg.x_max = 100.0;
  cfg.y_max = 100.0;
  cfg.n_sensors = 5;
  cfg.horizon = 100;
  cfg.d_max = 70.0;
  cfg.move_x_max = 10.0;
  cfg.move_y_max = 10.0;
  cfg.start = {100.0, 100.0};
  return cfg;
}

struct SensorNode {
  Vec2 position;
  double pending_bits = 0.0;
  double cum_harvest_j = 0.0;
  bool upload_done = true;
};

struct UavAction {
  double dx = 0.0;
  double dy = 0.0;
  double power = 0.0;
};

struct UavState {
  Vec2 position;
  UavAction last_action;
  double cum_energy_j = 0.0;
};

struct RewardParts {
  double energy = 0.0;    // -w_E * E
  double data = 0.0;      // w_D * D
  double fairness = 0.0;  // w_F * F
  double penalty = 0.0;   // -penalty when the move left the area
  double total() const { return energy + data + fairness + penalty; }
};

struct StepOutcome {
  int slot = 0;  // 1-based index of the slot just executed
  std::vector<double> observation;
  double reward = 0.0;
  RewardParts parts;
  double collected_bits = 0.0;
  double energy_j = 0.0;
  double fairness = 0.0;
  bool boundary_violated = false;
  bool all_uploaded = false;  // terminated because every sensor is drained
  bool done = false;
  UavAction executed;         // clamped action
  Vec2 position;              // post-step UAV position
  std::vector<int> served;    // sensor indices served this slot
};

inline void ScenarioConfig::validate() const {
  auto require = [](bool ok, const char* field, const char* what) {
    if (!ok) throw ConfigError(field, what);
  };
  require(x_min < x_max, "x_max", "must exceed x_min");
  require(y_min < y_max, "y_max", "must exceed y_min");
  require(n_sensors >= 1, "n_sensors", "must be at least 1");
  require(altitude > 0.0, "altitude", "must be positive");
  require(slot_duration > 0.0, "slot_duration", "must be positive");
  require(horizon >= 1, "horizon", "must be at least 1");
  require(d_max > altitude, "d_max", "must exceed altitude");
  require(move_x_max >= 0.0, "move_x_max", "must be non-negative");
  require(move_y_max >= 0.0, "move_y_max", "must be non-negative");
  require(power_min >= 0.0 && power_min <= power_max, "power_min", "must satisfy 0 <= power_min <= power_max");
  require(start.x >= x_min && start.x <= x_max, "start_x", "must lie inside the area");
  require(start.y >= y_min && start.y <= y_max, "start_y", "must lie inside the area");
  require(weight_energy >= 0.0, "weight_energy", "must be non-negative");
  require(weight_data >= 0.0, "weight_data", "must be non-negative");
  require(weight_fairness >= 0.0, "weight_fairness", "must be non-negative");
  require(boundary_penalty >= 0.0, "boundary_penalty", "must be non-negative");
  require(arrival_prob > 0.0 && arrival_prob <= 1.0, "arrival_prob", "must lie in (0, 1]");
  require(data_mean >= 0.0, "data_mean", "must be non-negative");
  require(data_std >= 0.0, "data_std", "must be non-negative");
  require(wpt.tx_gain > 0.0, "wpt.tx_gain", "must be positive");
  require(wpt.rx_gain > 0.0, "wpt.rx_gain", "must be positive");
  require(wpt.wavelength > 0.0, "wpt.wavelength", "must be positive");
  require(wpt.path_loss_exp >= 2.0, "wpt.path_loss_exp", "must be at least 2");
  require(wpt.p_min > 0.0 && wpt.p_min < wpt.p_max, "wpt.p_min", "must satisfy 0 < p_min < p_max");
  require(wpt.rectifier_eff > 0.0 && wpt.rectifier_eff <= 1.0, "wpt.rectifier_eff", "must lie in (0, 1]");
  require(channel.ref_path_loss > 0.0, "channel.ref_path_loss", "must be positive");
  require(channel.nlos_atten > 0.0 && channel.nlos_atten <= 1.0, "channel.nlos_atten", "must lie in (0, 1]");
  require(channel.env_c > 0.0, "channel.env_c", "must be positive");
  require(channel.env_d > 0.0, "channel.env_d", "must be positive");
  require(channel.noise_power > 0.0, "channel.noise_power", "must be positive");
  require(channel.total_bandwidth > 0.0, "channel.total_bandwidth", "must be positive");
  require(channel.rate_threshold >= 0.0, "channel.rate_threshold", "must be non-negative");
  const auto& pp = propulsion;
  require(pp.blade_profile_power > 0.0, "propulsion.blade_profile_power", "must be positive");
  require(pp.induced_power > 0.0, "propulsion.induced_power", "must be positive");
  require(pp.tip_speed > 0.0, "propulsion.tip_speed", "must be positive");
  require(pp.mean_induced_velocity > 0.0, "propulsion.mean_induced_velocity", "must be positive");
  require(pp.fuselage_drag_ratio > 0.0, "propulsion.fuselage_drag_ratio", "must be positive");
  require(pp.air_density > 0.0, "propulsion.air_density", "must be positive");
  require(pp.rotor_solidity > 0.0, "propulsion.rotor_solidity", "must be positive");
  require(pp.rotor_disc_area > 0.0, "propulsion.rotor_disc_area", "must be positive");
}

// ---------------------------------------------------------------------------
// Stateless pieces of the slot update.

// Jain's index over cumulative harvested energy; 0 when nothing was harvested yet.
// Values are scaled by their maximum first, which makes equal vectors give
// exactly 1 and one-hot vectors exactly 1/N.
inline double fairness_index(std::span<const double> harvest) {
  double peak = 0.0;
  for (double h : harvest) peak = std::max(peak, h);
  if (harvest.empty() || peak <= 0.0) return 0.0;
  double sum = 0.0, sum_sq = 0.0;
  for (double h : harvest) {
    const double u = h / peak;
    sum += u;
    sum_sq += u * u;
  }
  return (sum * sum) / (static_cast<double>(harvest.size()) * sum_sq);
}

inline double fairness_index(std::span<const SensorNode> sensors) {
  std::vector<double> harvest;
  harvest.reserve(sensors.size());
  for (const auto& s : sensors) harvest.push_back(s.cum_harvest_j);
  return fairness_index(std::span<const double>(harvest));
}

// Equal OFDMA split. Shares are B/n each; the last share absorbs rounding so they sum to B.
inline std::vector<double> allocate_bandwidth(std::size_t n_served, double total_bandwidth) {
  std::vector<double> shares(n_served, 0.0);
  if (n_served == 0) return shares;
  const double share = total_bandwidth / static_cast<double>(n_served);
  double assigned = 0.0;
  for (std::size_t i = 0; i + 1 < n_served; ++i) {
    shares[i] = share;
    assigned += share;
  }
  shares.back() = total_bandwidth - assigned;
  return shares;
}

// Per-sensor link quantities for one slot, computed from the UAV position and power.
struct LinkBudget {
  double distance = 0.0;
  double harvested_power = 0.0;  // W, zero outside the service radius
  double gain = 0.0;
  bool in_range = false;
};

inline LinkBudget link_budget(const ScenarioConfig& cfg, Vec2 uav, Vec2 sensor, double p_tx) {
  LinkBudget lb;
  const double dx = uav.x - sensor.x;
  const double dy = uav.y - sensor.y;
  lb.distance = std::sqrt(dx * dx + dy * dy + cfg.altitude * cfg.altitude);
  lb.in_range = lb.distance <= cfg.d_max;
  lb.gain = physics::expected_channel_gain(lb.distance, cfg.altitude, cfg.channel, cfg.wpt.path_loss_exp);
  if (lb.in_range) {
    lb.harvested_power =
        physics::harvested_power(physics::received_power(p_tx, lb.distance, cfg.wpt), cfg.wpt);
  }
  return lb;
}

// Sensors served in this slot. Candidates are in range with pending data; the
// lowest-rate sensor under the current equal split that misses the rate
// threshold is dropped (ties to the lower index) and the split is recomputed
// until every remaining sensor meets the threshold. Result is in index order.
inline std::vector<int> served_set(const ScenarioConfig& cfg, std::span<const SensorNode> sensors,
                                   std::span<const LinkBudget> links) {
  std::vector<int> served;
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    if (links[i].in_range && sensors[i].pending_bits > 0.0) served.push_back(static_cast<int>(i));
  }
  while (!served.empty()) {
    const double share = cfg.channel.total_bandwidth / static_cast<double>(served.size());
    std::optional<std::size_t> worst;
    double worst_rate = 0.0;
    for (std::size_t k = 0; k < served.size(); ++k) {
      const auto& lb = links[static_cast<std::size_t>(served[k])];
      const double rate =
          physics::achievable_rate(lb.harvested_power, lb.gain, share, cfg.channel.noise_power);
      if (rate < cfg.channel.rate_threshold && (!worst || rate < worst_rate)) {
        worst = k;
        worst_rate = rate;
      }
    }
    if (!worst) break;
    served.erase(served.begin() + static_cast<std::ptrdiff_t>(*worst));
  }
  return served;
}

// Bernoulli arrivals with truncated-normal volumes. Returns the bits added.
inline double data_arrivals(const ScenarioConfig& cfg, std::span<SensorNode> sensors, Rng& rng) {
  double added = 0.0;
  for (auto& s : sensors) {
    if (!rng.bernoulli(cfg.arrival_prob)) continue;
    const double bits = std::max(0.0, rng.normal(cfg.data_mean, cfg.data_std));
    s.pending_bits += bits;
    added += bits;
    s.upload_done = s.pending_bits <= 0.0;
  }
  return added;
}

// Observation layout (length 2 + 3N):
//   [0, 2)        UAV (x, y) normalised to [0, 1] by the area bounds
//   [2, 2 + 2N)   sensor i (x, y) normalised, interleaved x0 y0 x1 y1 ...
//   [2 + 2N, 2+3N) upload-complete flags f_i in {0, 1}
inline std::vector<double> encode_observation(const ScenarioConfig& cfg, const UavState& uav,
                                              std::span<const SensorNode> sensors) {
  const double wx = cfg.x_max - cfg.x_min;
  const double wy = cfg.y_max - cfg.y_min;
  std::vector<double> obs;
  obs.reserve(2 + 3 * sensors.size());
  obs.push_back((uav.position.x - cfg.x_min) / wx);
  obs.push_back((uav.position.y - cfg.y_min) / wy);
  for (const auto& s : sensors) {
    obs.push_back((s.position.x - cfg.x_min) / wx);
    obs.push_back((s.position.y - cfg.y_min) / wy);
  }
  for (const auto& s : sensors) obs.push_back(s.upload_done ? 1.0 : 0.0);
  return obs;
}

struct DecodedObservation {
  Vec2 uav;
  std::vector<Vec2> sensors;
  std::vector<bool> upload_done;
};

inline DecodedObservation decode_observation(const ScenarioConfig& cfg, std::span<const double> obs) {
  const auto n = static_cast<std::size_t>(cfg.n_sensors);
  if (obs.size() != 2 + 3 * n) throw TopologyError("decode_observation: length does not match layout");
  const double wx = cfg.x_max - cfg.x_min;
  const double wy = cfg.y_max - cfg.y_min;
  DecodedObservation d;
  d.uav = {cfg.x_min + obs[0] * wx, cfg.y_min + obs[1] * wy};
  for (std::size_t i = 0; i < n; ++i)
    d.sensors.push_back({cfg.x_min + obs[2 + 2 * i] * wx, cfg.y_min + obs[3 + 2 * i] * wy});
  for (std::size_t i = 0; i < n; ++i) d.upload_done.push_back(obs[2 + 2 * n + i] > 0.5);
  return d;
}

inline RewardParts compute_reward(const ScenarioConfig& cfg, double energy_j, double bits, double fairness,
                                  bool boundary_violated) {
  RewardParts p;
  p.energy = -cfg.weight_energy * energy_j;
  p.data = cfg.weight_data * bits;
  p.fairness = cfg.weight_fairness * fairness;
  p.penalty = boundary_violated ? -cfg.boundary_penalty : 0.0;
  return p;
}

inline UavAction clamp_action(const ScenarioConfig& cfg, UavAction a) {
  a.dx = std::clamp(a.dx, -cfg.move_x_max, cfg.move_x_max);
  a.dy = std::clamp(a.dy, -cfg.move_y_max, cfg.move_y_max);
  a.power = std::clamp(a.power, cfg.power_min, cfg.power_max);
  return a;
}

// ---------------------------------------------------------------------------

// Single-UAV episodic environment. Not thread-safe; use one instance per worker.
class Environment {
 public:
  explicit Environment(ScenarioConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const ScenarioConfig& config() const { return cfg_; }
  const UavState& uav() const { return uav_; }
  const std::vector<SensorNode>& sensors() const { return sensors_; }
  int slot() const { return slot_; }
  bool done() const { return done_; }
  double arrived_bits() const { return arrived_bits_; }
  double collected_bits() const { return collected_bits_; }
  int boundary_violations() const { return violations_; }
  std::size_t observation_size() const { return cfg_.observation_size(); }

  // Places sensors uniformly (from cfg.seed when the layout is fixed,
  // otherwise from `seed`), gives each one an initial data volume, and puts
  // the UAV at the configured start.
  std::vector<double> reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    Rng layout(cfg_.fixed_layout ? splitmix64(cfg_.seed) : splitmix64(seed));
    sensors_.assign(static_cast<std::size_t>(cfg_.n_sensors), SensorNode{});
    for (auto& s : sensors_) {
      s.position = {layout.uniform(cfg_.x_min, cfg_.x_max), layout.uniform(cfg_.y_min, cfg_.y_max)};
    }
    arrived_bits_ = 0.0;
    for (auto& s : sensors_) {
      const double bits = std::max(0.0, rng_.normal(cfg_.data_mean, cfg_.data_std));
      s.pending_bits = bits;
      s.upload_done = bits <= 0.0;
      arrived_bits_ += bits;
    }
    uav_ = UavState{};
    uav_.position = cfg_.start;
    slot_ = 0;
    done_ = false;
    collected_bits_ = 0.0;
    violations_ = 0;
    return observation();
  }

  std::vector<double> reset() { return reset(cfg_.seed); }

  std::vector<double> observation() const { return encode_observation(cfg_, uav_, sensors_); }

  StepOutcome step(UavAction requested) {
    if (sensors_.empty()) throw StateError("step: environment not reset");
    if (done_) throw StateError("step: episode already finished");
    StepOutcome out;
    const UavAction a = clamp_action(cfg_, requested);

    const Vec2 before = uav_.position;
    Vec2 tentative{before.x + a.dx, before.y + a.dy};
    Vec2 after{std::clamp(tentative.x, cfg_.x_min, cfg_.x_max),
               std::clamp(tentative.y, cfg_.y_min, cfg_.y_max)};
    out.boundary_violated = !(after == tentative);
    if (out.boundary_violated) ++violations_;
    uav_.position = after;
    uav_.last_action = a;

    std::vector<LinkBudget> links(sensors_.size());
    for (std::size_t i = 0; i < sensors_.size(); ++i) {
      links[i] = link_budget(cfg_, after, sensors_[i].position, a.power);
      sensors_[i].cum_harvest_j += links[i].harvested_power * cfg_.slot_duration;
    }

    out.served = served_set(cfg_, sensors_, links);
    const auto shares = allocate_bandwidth(out.served.size(), cfg_.channel.total_bandwidth);
    for (std::size_t k = 0; k < out.served.size(); ++k) {
      auto& s = sensors_[static_cast<std::size_t>(out.served[k])];
      const auto& lb = links[static_cast<std::size_t>(out.served[k])];
      const double rate =
          physics::achievable_rate(lb.harvested_power, lb.gain, shares[k], cfg_.channel.noise_power);
      const double bits = std::min(rate * cfg_.slot_duration, s.pending_bits);
      s.pending_bits -= bits;
      if (s.pending_bits <= 0.0) {
        s.pending_bits = 0.0;
        s.upload_done = true;
      }
      out.collected_bits += bits;
    }
    collected_bits_ += out.collected_bits;

    arrived_bits_ += data_arrivals(cfg_, sensors_, rng_);

    const double moved = std::hypot(after.x - before.x, after.y - before.y);
    const double speed = moved / cfg_.slot_duration;
    out.energy_j = physics::charging_energy(a.power, cfg_.slot_duration) +
                   physics::propulsion_energy(speed, cfg_.slot_duration, cfg_.propulsion);
    uav_.cum_energy_j += out.energy_j;

    out.fairness = fairness_index(std::span<const SensorNode>(sensors_));
    out.parts = compute_reward(cfg_, out.energy_j, out.collected_bits, out.fairness, out.boundary_violated);
    out.reward = out.parts.total();

    ++slot_;
    out.slot = slot_;
    out.all_uploaded = std::all_of(sensors_.begin(), sensors_.end(),
                                   [](const SensorNode& s) { return s.upload_done; });
    done_ = slot_ >= cfg_.horizon || out.all_uploaded;
    out.done = done_;
    out.executed = a;
    out.position = after;
    out.observation = observation();
    return out;
  }

  double pending_bits() const {
    double total = 0.0;
    for (const auto& s : sensors_) total += s.pending_bits;
    return total;
  }

 private:
  ScenarioConfig cfg_;
  UavState uav_;
  std::vector<SensorNode> sensors_;
  Rng rng_;
  int slot_ = 0;
  bool done_ = false;
  double arrived_bits_ = 0.0;
  double collected_bits_ = 0.0;
  int violations_ = 0;
};

}  // namespace uavsac
