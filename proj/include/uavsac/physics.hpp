#pragma once

// Closed-form link and energy models for a UAV charging and polling ground
// sensors. Every function here is pure; all powers are in watts.

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace uavsac::physics {

// Far-field RF power transfer and rectifier parameters.
struct WptParams {
  double tx_gain = 1.0;            // UAV antenna gain (linear)
  double rx_gain = 1.0;            // sensor antenna gain (linear)
  double wavelength = 0.3276;      // m (915 MHz ISM band)
  double path_loss_exp = 2.0;
  double p_min = 1e-6;             // rectifier activation, W (-30 dBm)
  double p_max = 1e-3;             // rectifier saturation, W (0 dBm)
  double rectifier_eff = 0.6;      // constant conversion efficiency
};

// Probabilistic line-of-sight air-to-ground channel and uplink budget.
struct ChannelParams {
  double ref_path_loss = 1e-3;     // channel gain at 1 m (-30 dB)
  double nlos_atten = 0.2;         // extra NLoS attenuation factor
  double env_c = 10.0;             // LoS sigmoid parameters
  double env_d = 0.6;
  double noise_power = 1e-14;      // W (-110 dBm)
  double total_bandwidth = 1e6;    // Hz
  double rate_threshold = 1e5;     // bit/s
};

// Rotary-wing propulsion power curve (blade profile + induced + parasite).
struct PropulsionParams {
  double blade_profile_power = 79.86;  // W
  double induced_power = 88.63;        // W
  double tip_speed = 120.0;            // m/s
  double mean_induced_velocity = 4.03; // m/s, hover
  double fuselage_drag_ratio = 0.6;
  double air_density = 1.225;          // kg/m^3
  double rotor_solidity = 0.05;
  double rotor_disc_area = 0.503;      // m^2
};

inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

// Friis received power at `dist` metres for transmit power `p_tx`.
inline double received_power(double p_tx, double dist, const WptParams& wpt) {
  if (!(dist > 0.0)) throw std::domain_error("received_power: distance must be positive");
  if (p_tx < 0.0) throw std::domain_error("received_power: negative transmit power");
  constexpr double four_pi = 4.0 * std::numbers::pi;
  return p_tx * wpt.tx_gain * wpt.rx_gain * wpt.wavelength * wpt.wavelength /
         (four_pi * four_pi * std::pow(dist, wpt.path_loss_exp));
}

// Piecewise rectifier: dead below p_min, linear with constant efficiency up to
// p_max, clamped at the p_max output above it.
inline double harvested_power(double p_recv, const WptParams& wpt) {
  if (p_recv < 0.0) throw std::domain_error("harvested_power: negative received power");
  if (p_recv < wpt.p_min) return 0.0;
  if (p_recv < wpt.p_max) return wpt.rectifier_eff * p_recv;
  return wpt.rectifier_eff * wpt.p_max;
}

inline double elevation_angle_deg(double uav_alt, double dist) {
  if (!(uav_alt > 0.0)) throw std::domain_error("elevation_angle_deg: altitude must be positive");
  if (dist < uav_alt) throw std::domain_error("elevation_angle_deg: distance below altitude");
  return (180.0 / std::numbers::pi) * std::asin(uav_alt / dist);
}

inline double los_probability(double theta_deg, const ChannelParams& ch) {
  if (!(theta_deg > 0.0 && theta_deg <= 90.0))
    throw std::domain_error("los_probability: elevation must lie in (0, 90]");
  return 1.0 / (1.0 + ch.env_c * std::exp(-ch.env_d * (theta_deg - ch.env_c)));
}

inline double nlos_probability(double theta_deg, const ChannelParams& ch) {
  return 1.0 - los_probability(theta_deg, ch);
}

// Mean channel power gain averaged over LoS/NLoS state and unit-power small-scale fading.
inline double expected_channel_gain(double dist, double uav_alt, const ChannelParams& ch,
                                    double path_loss_exp) {
  const double p_los = los_probability(elevation_angle_deg(uav_alt, dist), ch);
  const double free_space = ch.ref_path_loss * std::pow(dist, -path_loss_exp);
  return p_los * free_space + (1.0 - p_los) * ch.nlos_atten * free_space;
}

// Shannon rate of a sensor transmitting its harvested power on `bandwidth` Hz.
inline double achievable_rate(double p_harvest, double gain, double bandwidth, double noise_power) {
  if (p_harvest < 0.0 || gain < 0.0 || bandwidth < 0.0)
    throw std::domain_error("achievable_rate: negative input");
  if (!(noise_power > 0.0)) throw std::domain_error("achievable_rate: noise power must be positive");
  return bandwidth * std::log2(1.0 + p_harvest * gain / noise_power);
}

// Propulsion power (W) at constant horizontal speed.
inline double propulsion_power(double speed, const PropulsionParams& pp) {
  if (speed < 0.0) throw std::domain_error("propulsion_power: negative speed");
  const double v2 = speed * speed;
  const double v0_2 = pp.mean_induced_velocity * pp.mean_induced_velocity;
  const double blade = pp.blade_profile_power * (1.0 + 3.0 * v2 / (pp.tip_speed * pp.tip_speed));
  const double induced =
      pp.induced_power * std::sqrt(std::sqrt(1.0 + v2 * v2 / (4.0 * v0_2 * v0_2)) - v2 / (2.0 * v0_2));
  const double parasite = 0.5 * pp.fuselage_drag_ratio * pp.air_density * pp.rotor_solidity *
                          pp.rotor_disc_area * v2 * speed;
  return blade + induced + parasite;
}

inline double propulsion_energy(double speed, double slot, const PropulsionParams& pp) {
  if (!(slot > 0.0)) throw std::domain_error("propulsion_energy: slot must be positive");
  return slot * propulsion_power(speed, pp);
}

inline double charging_energy(double p_tx, double slot) {
  if (p_tx < 0.0) throw std::domain_error("charging_energy: negative transmit power");
  if (!(slot > 0.0)) throw std::domain_error("charging_energy: slot must be positive");
  return p_tx * slot;
}

}  // namespace uavsac::physics
