#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "uavsac/replay.hpp"

using namespace uavsac;

namespace {

Transition<double> item(double tag) {
  Transition<double> t;
  t.reward = tag;
  t.obs = {tag};
  t.action = {0, 0, 0};
  t.next_obs = {tag};
  return t;
}

double brute_root(const PrioritizedReplay<double>& buf) {
  long double s = 0;
  for (std::size_t i = 0; i < buf.capacity(); ++i)
    if (buf.priority(i) > 0.0) s += std::pow(static_cast<long double>(buf.priority(i)), buf.config().alpha);
  return static_cast<double>(s);
}

std::vector<double> frequencies(const PrioritizedReplay<double>& buf, std::size_t draws, std::uint64_t seed) {
  std::vector<double> counts(buf.size(), 0.0);
  Rng r(seed);
  const std::size_t batch = std::min<std::size_t>(100, buf.size());
  const std::size_t rounds = draws / batch;
  for (std::size_t k = 0; k < rounds; ++k) {
    const auto b = buf.sample(batch, r, 0.4);
    for (const auto& ref : b.refs) counts.at(ref.slot) += 1.0;
  }
  for (auto& c : counts) c /= static_cast<double>(rounds * batch);
  return counts;
}

}  // namespace

TEST(Push, SizeAndRingEviction) {
  PrioritizedReplay<double> buf({.capacity = 3});
  buf.push(item(0), 1.0);
  EXPECT_EQ(buf.size(), 1u);
  for (int i = 1; i < 4; ++i) buf.push(item(i), 1.0);
  EXPECT_EQ(buf.size(), 3u);
  std::vector<double> tags;
  for (std::size_t s = 0; s < 3; ++s) tags.push_back(buf.at(s).reward);
  EXPECT_EQ(std::count(tags.begin(), tags.end(), 0.0), 0);
  EXPECT_EQ(buf.at(0).reward, 3.0);
}

TEST(Push, ZeroPriorityFloored) {
  PrioritizedReplay<double> buf({.capacity = 4, .epsilon = 1e-5});
  const auto slot = buf.push(item(0), 0.0);
  EXPECT_EQ(buf.priority(slot), 1e-5);
}

TEST(Push, DefaultIsCurrentMaximum) {
  PrioritizedReplay<double> buf({.capacity = 4});
  buf.push(item(0), 7.0);
  const auto slot = buf.push(item(1));
  EXPECT_EQ(buf.priority(slot), 7.0);
}

TEST(Sample, AlphaZeroIsUniform) {
  PrioritizedReplay<double> buf({.capacity = 8, .alpha = 0.0});
  for (int i = 0; i < 5; ++i) buf.push(item(i), 1.0 + 10.0 * i);
  for (std::size_t s = 0; s < 5; ++s) EXPECT_DOUBLE_EQ(buf.probability(s), 0.2);
}

TEST(Sample, HandNormalisation) {
  PrioritizedReplay<double> buf({.capacity = 2, .alpha = 1.0});
  buf.push(item(0), 1.0);
  buf.push(item(1), 3.0);
  EXPECT_DOUBLE_EQ(buf.probability(0), 0.25);
  EXPECT_DOUBLE_EQ(buf.probability(1), 0.75);
}

TEST(Sample, UnderfilledIsNotReady) {
  PrioritizedReplay<double> buf({.capacity = 8});
  buf.push(item(0), 1.0);
  Rng r(1);
  EXPECT_THROW(buf.sample(2, r, 0.4), NotReadyError);
}

TEST(Sample, EmpiricalFrequenciesMatchProbabilities) {
  PrioritizedReplay<double> buf({.capacity = 16, .alpha = 0.6});
  Rng pr(3);
  for (int i = 0; i < 10; ++i) buf.push(item(i), pr.uniform(0.1, 5.0));
  const auto f = frequencies(buf, 1000000, 11);
  for (std::size_t i = 0; i < 10; ++i) {
    const double p = std::pow(buf.priority(i), 0.6) / brute_root(buf);
    EXPECT_NEAR(f[i], p, 0.02 * p) << "slot " << i;
  }
}

TEST(Sample, EqualPrioritiesPassChiSquare) {
  PrioritizedReplay<double> buf({.capacity = 50});
  for (int i = 0; i < 50; ++i) buf.push(item(i), 2.0);
  const std::size_t draws = 1000000;
  const auto f = frequencies(buf, draws, 5);
  double chi2 = 0.0;
  const double expected = draws / 50.0;
  for (double x : f) chi2 += std::pow(x * draws - expected, 2) / expected;
  EXPECT_LT(chi2, 74.92);  // 0.99 quantile, 49 degrees of freedom
}

TEST(Sample, WeightsAtMostOneAndNeverEvicted) {
  PrioritizedReplay<double> buf({.capacity = 64});
  Rng r(2);
  for (int i = 0; i < 40; ++i) buf.push(item(i), r.uniform(0.0, 3.0));
  for (int k = 0; k < 200; ++k) {
    const auto b = buf.sample(16, r, r.uniform());
    double mx = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      ASSERT_LE(b.weights[j], 1.0);
      ASSERT_LT(b.refs[j].slot, 40u);
      ASSERT_EQ(b.items[j]->reward, static_cast<double>(b.refs[j].slot));
      mx = std::max(mx, b.weights[j]);
    }
    ASSERT_EQ(mx, 1.0);
  }
  for (int i = 40; i < 100; ++i) buf.push(item(i), r.uniform(0.0, 3.0));
  for (int k = 0; k < 200; ++k) {
    const auto b = buf.sample(16, r, 0.5);
    for (std::size_t j = 0; j < b.size(); ++j) ASSERT_GE(b.items[j]->reward, 36.0);
  }
}

TEST(ImportanceWeight, Examples) {
  EXPECT_EQ(importance_weight(0.37, 9, 0.0), 1.0);
  EXPECT_EQ(importance_weight(0.25, 4, 1.0), 1.0);
  EXPECT_EQ(importance_weight(0.5, 4, 1.0), 0.5);
}

TEST(ImportanceWeight, BatchWeightsFollowFormula) {
  PrioritizedReplay<double> buf({.capacity = 8, .alpha = 1.0});
  buf.push(item(0), 1.0);
  buf.push(item(1), 3.0);
  Rng r(4);
  for (int k = 0; k < 50; ++k) {
    const auto b = buf.sample(2, r, 1.0);
    double raw[2], mx = 0.0;
    for (int j = 0; j < 2; ++j) mx = std::max(mx, raw[j] = 1.0 / (2.0 * b.probabilities[j]));
    for (int j = 0; j < 2; ++j) {
      EXPECT_DOUBLE_EQ(b.probabilities[j], b.refs[j].slot == 0 ? 0.25 : 0.75);
      EXPECT_DOUBLE_EQ(b.weights[j], raw[j] / mx);
    }
  }
}

TEST(Beta, LinearAnnealClampedAtOne) {
  PrioritizedReplay<double> buf({.beta_start = 0.4, .beta_anneal_steps = 100});
  EXPECT_DOUBLE_EQ(buf.beta_at(0), 0.4);
  EXPECT_DOUBLE_EQ(buf.beta_at(50), 0.7);
  EXPECT_DOUBLE_EQ(buf.beta_at(100), 1.0);
  EXPECT_DOUBLE_EQ(buf.beta_at(10000), 1.0);
}

TEST(Update, TdZeroGivesEpsilonAndAbsolute) {
  PrioritizedReplay<double> buf({.capacity = 4, .epsilon = 1e-5});
  const auto a = buf.push(item(0), 1.0);
  const auto b = buf.push(item(1), 1.0);
  const std::vector<ReplayRef> refs{{a, buf.serial(a)}, {b, buf.serial(b)}};
  const std::vector<double> td{0.0, -2.0};
  buf.update_priorities(refs, td);
  EXPECT_EQ(buf.priority(a), 1e-5);
  EXPECT_EQ(buf.priority(b), 2.0 + 1e-5);
}

TEST(Update, StaleRefsSkippedAndCounted) {
  PrioritizedReplay<double> buf({.capacity = 2});
  buf.push(item(0), 1.0);
  buf.push(item(1), 1.0);
  const std::vector<ReplayRef> refs{{0, buf.serial(0)}};
  buf.push(item(2), 4.0);  // overwrites slot 0
  const std::vector<double> td{9.0};
  buf.update_priorities(refs, td);
  EXPECT_EQ(buf.stale_updates(), 1u);
  EXPECT_EQ(buf.priority(0), 4.0);
}

TEST(Update, RaisedItemSampledMoreOften) {
  PrioritizedReplay<double> buf({.capacity = 2});
  buf.push(item(0), 1.0);
  buf.push(item(1), 1.0);
  const auto before = frequencies(buf, 100000, 8);
  const std::vector<ReplayRef> refs{{1, buf.serial(1)}};
  const std::vector<double> td{5.0};
  buf.update_priorities(refs, td);
  const auto after = frequencies(buf, 100000, 8);
  EXPECT_GT(after[1], before[1] + 0.1);
}

TEST(SumTreeProperty, RootMatchesBruteForceAfterInterleavedOps) {
  PrioritizedReplay<double> buf({.capacity = 1000, .alpha = 0.6});
  Rng r(21);
  for (int op = 0; op < 100000; ++op) {
    if (buf.size() < 1 || r.bernoulli(0.5)) {
      buf.push(item(op), r.uniform(0.0, 10.0));
    } else {
      std::vector<ReplayRef> refs;
      std::vector<double> td;
      for (int k = 0; k < 4; ++k) {
        const auto slot = r.below(buf.size());
        refs.push_back({slot, buf.serial(slot)});
        td.push_back(r.normal(0.0, 3.0));
      }
      buf.update_priorities(refs, td);
    }
    if (op % 997 == 0) ASSERT_NEAR(buf.total_mass(), brute_root(buf), 1e-9 * brute_root(buf));
  }
  EXPECT_NEAR(buf.total_mass(), brute_root(buf), 1e-9 * brute_root(buf));
}

TEST(SumTreeProperty, FindLandsInInterval) {
  SumTree t(7);
  const std::vector<double> v{0.5, 0.0, 2.0, 1.0, 0.0, 0.25, 3.0};
  for (std::size_t i = 0; i < v.size(); ++i) t.set(i, v[i]);
  EXPECT_DOUBLE_EQ(t.total(), 6.75);
  double lo = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > 0.0) {
      EXPECT_EQ(t.find(lo), i);
      EXPECT_EQ(t.find(lo + 0.5 * v[i]), i);
    }
    lo += v[i];
  }
}

TEST(State, RestoreReproducesSampling) {
  PrioritizedReplay<double> a({.capacity = 32});
  Rng r(6);
  for (int i = 0; i < 50; ++i) a.push(item(i), r.uniform(0.1, 4.0));
  std::vector<Transition<double>> items;
  std::vector<double> pri;
  std::vector<std::uint64_t> ser;
  for (std::size_t i = 0; i < a.capacity(); ++i) {
    items.push_back(a.at(i));
    pri.push_back(a.priority(i));
    ser.push_back(a.serial(i));
  }
  PrioritizedReplay<double> b({.capacity = 32});
  b.restore(a.state(), items, pri, ser);
  EXPECT_EQ(a.total_mass(), b.total_mass());
  Rng ra(9), rb(9);
  for (int k = 0; k < 20; ++k) {
    const auto x = a.sample(8, ra, 0.6), y = b.sample(8, rb, 0.6);
    for (std::size_t j = 0; j < 8; ++j) {
      ASSERT_EQ(x.refs[j].slot, y.refs[j].slot);
      ASSERT_EQ(x.weights[j], y.weights[j]);
    }
  }
}

TEST(Config, InvalidValuesRejected) {
  EXPECT_THROW(PrioritizedReplay<double>({.capacity = 0}), ConfigError);
  EXPECT_THROW(PrioritizedReplay<double>({.alpha = 1.5}), ConfigError);
  EXPECT_THROW(PrioritizedReplay<double>({.epsilon = 0.0}), ConfigError);
}
