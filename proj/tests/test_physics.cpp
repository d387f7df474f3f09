#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "oracles.hpp"
#include "uavsac/physics.hpp"
#include "uavsac/rng.hpp"

using namespace uavsac;
using namespace uavsac::physics;

namespace {
double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }
}  // namespace

TEST(ReceivedPower, ZeroTransmitPower) { EXPECT_EQ(received_power(0.0, 37.0, WptParams{}), 0.0); }

TEST(ReceivedPower, UnitHandValue) {
  WptParams w;
  w.wavelength = 1.0;
  const double expect = 1.0 / (16.0 * std::numbers::pi * std::numbers::pi);
  EXPECT_NEAR(received_power(1.0, 1.0, w), expect, 1e-15);
  EXPECT_NEAR(received_power(1.0, 1.0, w), 6.3326e-3, 1e-7);
}

TEST(ReceivedPower, DoublingDistanceQuarters) {
  Rng r(1);
  WptParams w;
  for (int i = 0; i < 1000; ++i) {
    const double p = r.uniform(0.1, 50.0), d = r.uniform(1.0, 500.0);
    EXPECT_NEAR(received_power(p, d, w) / received_power(p, 2 * d, w), 4.0, 1e-12);
  }
}

TEST(ReceivedPower, ProductWithDistancePowerIsConstant) {
  Rng r(2);
  WptParams w;
  w.path_loss_exp = 2.7;
  const double ref = received_power(3.0, 1.0, w);
  for (int i = 0; i < 1000; ++i) {
    const double d = r.uniform(1.0, 800.0);
    EXPECT_LT(rel(received_power(3.0, d, w) * std::pow(d, 2.7), ref), 1e-12);
  }
}

TEST(ReceivedPower, RejectsNonPositiveDistance) {
  EXPECT_THROW(received_power(1.0, 0.0, WptParams{}), std::domain_error);
  EXPECT_THROW(received_power(1.0, -2.0, WptParams{}), std::domain_error);
}

TEST(HarvestedPower, BelowActivation) {
  WptParams w;
  EXPECT_EQ(harvested_power(w.p_min / 2, w), 0.0);
}

TEST(HarvestedPower, SaturationClamp) {
  WptParams w;
  EXPECT_DOUBLE_EQ(harvested_power(w.p_max, w), w.rectifier_eff * w.p_max);
  EXPECT_DOUBLE_EQ(harvested_power(10 * w.p_max, w), w.rectifier_eff * w.p_max);
}

TEST(HarvestedPower, LinearRegionHandValue) {
  WptParams w;
  w.rectifier_eff = 0.5;
  EXPECT_DOUBLE_EQ(harvested_power((w.p_min + w.p_max) / 2, w), (w.p_min + w.p_max) / 4);
}

TEST(HarvestedPower, MonotoneAndBounded) {
  WptParams w;
  double prev = 0.0;
  for (double p = 0.0; p < 5e-3; p += 1e-6) {
    const double h = harvested_power(p, w);
    ASSERT_GE(h, prev);
    ASSERT_LE(h, w.rectifier_eff * w.p_max);
    prev = h;
  }
}

TEST(Elevation, HandValues) {
  EXPECT_NEAR(elevation_angle_deg(50, 100), 30.0, 1e-12);
  EXPECT_DOUBLE_EQ(elevation_angle_deg(50, 50), 90.0);
}

TEST(Elevation, MonotoneDecreasingTowardZero) {
  double prev = 90.0;
  for (double d = 50.0; d < 1e6; d *= 1.1) {
    const double a = elevation_angle_deg(50, d);
    ASSERT_LE(a, prev);
    ASSERT_GT(a, 0.0);
    prev = a;
  }
  EXPECT_LT(prev, 0.01);
}

TEST(Elevation, RejectsDistanceBelowAltitude) { EXPECT_THROW(elevation_angle_deg(50, 49), std::domain_error); }

TEST(LosProbability, AtThetaEqualC) {
  ChannelParams ch;
  EXPECT_NEAR(los_probability(ch.env_c, ch), 1.0 / (1.0 + ch.env_c), 1e-15);
}

TEST(LosProbability, SaturatesForLargeD) {
  ChannelParams ch;
  ch.env_d = 50.0;
  EXPECT_NEAR(los_probability(45.0, ch), 1.0, 1e-12);
}

TEST(LosProbability, ComplementAndMonotone) {
  ChannelParams ch;
  double prev = 0.0;
  for (double t = 0.5; t <= 90.0; t += 0.5) {
    const double p = los_probability(t, ch);
    EXPECT_EQ(p + nlos_probability(t, ch), 1.0);
    if (p < 1.0 - 1e-12) {
      ASSERT_GT(p, prev);
    } else {
      ASSERT_GE(p, prev);  // saturated in double precision
    }
    prev = p;
  }
}

TEST(ExpectedGain, KappaOneIsFreeSpace) {
  ChannelParams ch;
  ch.nlos_atten = 1.0;
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    const double d = r.uniform(50.0, 600.0);
    EXPECT_LT(rel(expected_channel_gain(d, 50.0, ch, 2.0), ch.ref_path_loss / (d * d)), 1e-14);
  }
}

TEST(ExpectedGain, OverheadMaximisesLos) {
  ChannelParams ch;
  // At fixed distance the LoS weight is largest when the UAV is overhead.
  const double d = 80.0;
  const double overhead = expected_channel_gain(d, d, ch, 2.0);
  for (double alt = 1.0; alt < d; alt += 1.0) EXPECT_GE(overhead, expected_channel_gain(d, alt, ch, 2.0));
}

TEST(ExpectedGain, Bracketing) {
  ChannelParams ch;
  Rng r(6);
  for (int i = 0; i < 10000; ++i) {
    const double alt = r.uniform(5.0, 150.0), d = alt + r.uniform(0.0, 700.0), a = r.uniform(2.0, 4.0);
    ch.nlos_atten = r.uniform(0.01, 1.0);
    const double fs = ch.ref_path_loss * std::pow(d, -a);
    const double g = expected_channel_gain(d, alt, ch, a);
    ASSERT_LE(g, fs * (1 + 1e-12));
    ASSERT_GE(g, ch.nlos_atten * fs * (1 - 1e-12));
  }
}

TEST(Rate, ZeroHarvest) { EXPECT_EQ(achievable_rate(0.0, 1e-6, 1e6, 1e-14), 0.0); }

TEST(Rate, SnrThreeGivesTwoBitsPerHertz) {
  EXPECT_NEAR(achievable_rate(3e-14, 1.0, 2.5e5, 1e-14), 5e5, 1e-6);
}

TEST(Rate, ZeroBandwidth) { EXPECT_EQ(achievable_rate(1e-4, 1e-6, 0.0, 1e-14), 0.0); }

TEST(Rate, ConcaveIncreasing) {
  const double h = 1e-6;
  double prev = -1.0;
  for (int k = 1; k < 200; ++k) {
    const double p = k * h;
    const double r0 = achievable_rate(p - h, 1e-7, 1e6, 1e-14);
    const double r1 = achievable_rate(p, 1e-7, 1e6, 1e-14);
    const double r2 = achievable_rate(p + h, 1e-7, 1e6, 1e-14);
    ASSERT_GT(r1, prev);
    ASSERT_LE(r2 - 2 * r1 + r0, 1e-6);
    prev = r1;
  }
}

TEST(Propulsion, HoverIsBladePlusInduced) {
  PropulsionParams pp;
  EXPECT_EQ(propulsion_energy(0.0, 1.0, pp), pp.blade_profile_power + pp.induced_power);
  EXPECT_EQ(propulsion_energy(0.0, 2.5, pp), 2.5 * (pp.blade_profile_power + pp.induced_power));
}

TEST(Propulsion, LinearInSlot) {
  PropulsionParams pp;
  for (double v : {0.0, 3.0, 10.0, 25.0}) EXPECT_NEAR(propulsion_energy(v, 3.0, pp), 3.0 * propulsion_energy(v, 1.0, pp), 1e-9);
}

TEST(Propulsion, EventuallyMonotoneAndCubic) {
  PropulsionParams pp;
  // Locate the power-curve minimum on a grid, then require growth beyond it.
  double vmin = 0.0, pmin = propulsion_power(0.0, pp);
  for (double v = 0.0; v <= 60.0; v += 0.01) {
    if (propulsion_power(v, pp) < pmin) {
      pmin = propulsion_power(v, pp);
      vmin = v;
    }
  }
  EXPECT_GT(vmin, 0.0);
  double prev = pmin;
  for (double v = vmin; v <= 200.0; v += 0.5) {
    ASSERT_GE(propulsion_power(v, pp), prev);
    prev = propulsion_power(v, pp);
  }
  const double v = 1000.0;
  const double parasite = 0.5 * pp.fuselage_drag_ratio * pp.air_density * pp.rotor_solidity * pp.rotor_disc_area * v * v * v;
  EXPECT_GT(parasite / propulsion_power(v, pp), 0.9);
}

TEST(ChargingEnergy, Definition) {
  EXPECT_EQ(charging_energy(0.0, 1.0), 0.0);
  EXPECT_EQ(charging_energy(5.0, 1.0), 5.0);
}

TEST(Units, DbmRoundTrip) {
  EXPECT_NEAR(dbm_to_watts(30.0), 1.0, 1e-15);
  EXPECT_NEAR(dbm_to_watts(-30.0), 1e-6, 1e-21);
  EXPECT_NEAR(watts_to_dbm(dbm_to_watts(-17.3)), -17.3, 1e-12);
}

TEST(Oracles, RandomInputsMatchIndependentForms) {
  Rng r(2024);
  for (int i = 0; i < 500; ++i) {
    WptParams w;
    w.tx_gain = r.uniform(0.5, 4.0);
    w.rx_gain = r.uniform(0.5, 4.0);
    w.wavelength = r.uniform(0.05, 1.0);
    w.path_loss_exp = r.uniform(2.0, 4.0);
    const double p = r.uniform(0.0, 40.0), d = r.uniform(1.0, 600.0);
    EXPECT_LT(rel(received_power(p, d, w),
                  oracle::received_power(p, d, w.tx_gain, w.rx_gain, w.wavelength, w.path_loss_exp)) *
                  (p > 0),
              1e-9);
    const double pr = r.uniform(0.0, 2e-3);
    EXPECT_DOUBLE_EQ(harvested_power(pr, w), oracle::harvested_power(pr, w.p_min, w.p_max, w.rectifier_eff));
    const double alt = r.uniform(1.0, 200.0), dist = alt + r.uniform(1e-3, 600.0);
    EXPECT_LT(rel(elevation_angle_deg(alt, dist), oracle::elevation_deg(alt, dist)), 1e-9);
  }
}

TEST(Purity, BitwiseRepeatable) {
  ChannelParams ch;
  PropulsionParams pp;
  for (double d = 50.0; d < 500.0; d += 7.3) {
    EXPECT_EQ(expected_channel_gain(d, 50.0, ch, 2.0), expected_channel_gain(d, 50.0, ch, 2.0));
    EXPECT_EQ(propulsion_power(d / 20, pp), propulsion_power(d / 20, pp));
  }
}
