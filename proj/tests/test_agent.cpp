#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "uavsac/agent.hpp"

using namespace uavsac;

namespace {

constexpr std::size_t kObs = 5;

AgentConfig tiny(bool per = true, bool performer = true) {
  AgentConfig c;
  c.batch_size = 4;
  c.history = 3;
  c.embed_dim = 6;
  c.num_features = 5;
  c.actor_hidden = {8};
  c.critic_hidden = {8};
  c.replay.capacity = 64;
  c.warmup_steps = 0;
  c.use_per = per;
  c.use_performer = performer;
  return c;
}

Transition<double> random_transition(Rng& r, std::size_t window, bool done = false, double reward_scale = 1.0) {
  Transition<double> t;
  for (std::size_t i = 0; i < window * kObs; ++i) t.obs.push_back(r.uniform());
  for (std::size_t i = 0; i < window * kObs; ++i) t.next_obs.push_back(r.uniform());
  t.action = {r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1)};
  t.reward = r.normal(0.0, reward_scale);
  t.done = done;
  return t;
}

double q1_of(SacAgent<double>& agent, const Transition<double>& t) {
  std::vector<double> in(t.obs.end() - kObs, t.obs.end());
  in.insert(in.end(), t.action.begin(), t.action.end());
  return agent.critic1().forward(std::span<const double>(in))[0];
}

std::vector<double> all_params(SacAgent<double>& a) {
  std::vector<double> out;
  auto add = [&](const ParamSet<double>& s) {
    const auto f = s.flatten();
    out.insert(out.end(), f.begin(), f.end());
  };
  for (auto* s : a.actor().param_sets()) add(*s);
  add(a.critic1().params());
  add(a.critic2().params());
  add(a.target1().params());
  add(a.target2().params());
  add(a.log_alpha());
  return out;
}

}  // namespace

TEST(Rescale, EndpointsAndRange) {
  ScenarioConfig c;
  const auto lo = rescale_action(c, std::vector<double>{-1, -1, -1});
  const auto hi = rescale_action(c, std::vector<double>{1, 1, 1});
  EXPECT_EQ(lo.dx, -c.move_x_max);
  EXPECT_EQ(lo.dy, -c.move_y_max);
  EXPECT_EQ(lo.power, c.power_min);
  EXPECT_EQ(hi.dx, c.move_x_max);
  EXPECT_EQ(hi.power, c.power_max);
  Rng r(1);
  for (int k = 0; k < 10000; ++k) {
    const auto a = rescale_action(c, std::vector<double>{r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1)});
    ASSERT_LE(std::abs(a.dx), c.move_x_max);
    ASSERT_LE(std::abs(a.dy), c.move_y_max);
    ASSERT_GE(a.power, c.power_min);
    ASSERT_LE(a.power, c.power_max);
  }
}

TEST(Window, PadsWithFirstObservationAndSlides) {
  ObservationWindow w(3, 2);
  w.reset(std::vector<double>{1, 2});
  EXPECT_EQ(w.flat<double>(), (std::vector<double>{1, 2, 1, 2, 1, 2}));
  w.push(std::vector<double>{3, 4});
  EXPECT_EQ(w.flat<double>(), (std::vector<double>{1, 2, 1, 2, 3, 4}));
  w.push(std::vector<double>{5, 6});
  w.push(std::vector<double>{7, 8});
  EXPECT_EQ(w.flat<double>(), (std::vector<double>{3, 4, 5, 6, 7, 8}));
}

TEST(SelectAction, EvalIsDeterministicTrainStaysInside) {
  SacAgent<double> agent(tiny(), kObs, 1, 2, 3);
  Rng r(4);
  const auto t = random_transition(r, 3);
  EXPECT_EQ(agent.select_action(t.obs, ActionMode::eval), agent.select_action(t.obs, ActionMode::eval));
  for (int k = 0; k < 1000; ++k)
    for (double a : agent.select_action(t.obs, ActionMode::train)) {
      ASSERT_GT(a, -1.0);
      ASSERT_LT(a, 1.0);
    }
}

TEST(SelectAction, WarmupIsUniform) {
  auto cfg = tiny();
  cfg.warmup_steps = 100000;
  SacAgent<double> agent(cfg, kObs, 1, 2, 3);
  Rng r(4);
  const auto t = random_transition(r, 3);
  double mean = 0.0;
  for (int k = 0; k < 30000; ++k) {
    const auto a = agent.select_action(t.obs, ActionMode::train);
    for (double x : a) ASSERT_LE(std::abs(x), 1.0);
    mean += a[0] / 30000.0;
  }
  EXPECT_NEAR(mean, 0.0, 0.02);
}

TEST(Target, TerminalTransitionBootstrapsNothing) {
  SacAgent<double> agent(tiny(), kObs, 1, 2, 3);
  Rng r(5);
  std::vector<Transition<double>> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(random_transition(r, 3, true, 5.0));
  std::vector<const Transition<double>*> items;
  std::vector<double> expect;
  for (auto& t : batch) {
    items.push_back(&t);
    expect.push_back(std::abs(t.reward - q1_of(agent, t)));
  }
  const auto res = agent.update_on_batch(items, std::vector<double>(4, 1.0));
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(res.td_errors[i], expect[i], 1e-12);
}

TEST(Target, GammaZeroIsReward) {
  auto cfg = tiny();
  cfg.gamma = 0.0;
  SacAgent<double> agent(cfg, kObs, 1, 2, 3);
  Rng r(6);
  auto t = random_transition(r, 3, false, 5.0);
  const double expect = std::abs(t.reward - q1_of(agent, t));
  const auto res = agent.update_on_batch({&t}, std::vector<double>{1.0});
  EXPECT_NEAR(res.td_errors[0], expect, 1e-12);
}

TEST(Target, TwinCriticsHandComputedOneSample) {
  // Twins: copy critic1 into critic2 and target1 into target2.
  SacAgent<double> fresh(tiny(), kObs, 1, 2, 3);
  for (std::size_t k = 0; k < fresh.critic2().params().size(); ++k) {
    fresh.critic2().params()[k].value = fresh.critic1().params()[k].value;
    fresh.target2().params()[k].value = fresh.target1().params()[k].value;
  }
  Rng r(7);
  auto t = random_transition(r, 3, false, 1.0);
  // Next action from the same noise draw the update will use.
  Rng noise = fresh.update_rng();
  Matrix<double> xi(1, 3);
  for (auto& v : xi.data) v = noise.normal();
  Matrix<double> next_hist(3, kObs, t.next_obs);
  const auto [mean, log_std] = fresh.actor().forward(next_hist);
  std::vector<double> a(3);
  for (int j = 0; j < 3; ++j)
    a[j] = std::clamp(std::tanh(mean[j] + std::exp(log_std[j]) * xi.data[j]), -kActionBound, kActionBound);
  const double lp = squashed_log_prob(mean, log_std, xi.data);
  std::vector<double> in(t.next_obs.end() - kObs, t.next_obs.end());
  in.insert(in.end(), a.begin(), a.end());
  const double qt = fresh.target1().forward(std::span<const double>(in))[0];
  const double y = t.reward + fresh.config().gamma * (qt - fresh.alpha() * lp);
  const double expect = std::abs(y - q1_of(fresh, t));
  const auto res = fresh.update_on_batch({&t}, std::vector<double>{1.0});
  EXPECT_NEAR(res.td_errors[0], expect, 1e-12);
}

TEST(CriticLoss, ZeroWhenCriticsMatchTargets) {
  SacAgent<double> agent(tiny(), kObs, 1, 2, 3);
  for (std::size_t k = 0; k < agent.critic2().params().size(); ++k)
    agent.critic2().params()[k].value = agent.critic1().params()[k].value;
  Rng r(8);
  Matrix<double> s(4, kObs), a(4, 3);
  for (auto& v : s.data) v = r.uniform();
  for (auto& v : a.data) v = r.uniform(-1, 1);
  Tape<double> probe;
  Var in = probe.concat_cols(probe.constant(s), probe.constant(a));
  const auto q = probe.value(agent.critic1().forward(probe, in, false)).data;
  Tape<double> t;
  auto cl = agent.critic_loss(t, s, a, q, std::vector<double>(4, 1.0));
  EXPECT_EQ(t.scalar(cl.loss), 0.0);
}

TEST(CriticLoss, UnitWeightsArePlainMse) {
  SacAgent<double> agent(tiny(), kObs, 1, 2, 3);
  Rng r(9);
  Matrix<double> s(4, kObs), a(4, 3);
  for (auto& v : s.data) v = r.uniform();
  for (auto& v : a.data) v = r.uniform(-1, 1);
  const std::vector<double> y{1.0, -2.0, 0.5, 3.0};
  Tape<double> t;
  auto cl = agent.critic_loss(t, s, a, y, std::vector<double>(4, 1.0));
  double mse = 0.0;
  for (int i = 0; i < 4; ++i) {
    mse += std::pow(t.value(cl.q1).data[i] - y[i], 2) + std::pow(t.value(cl.q2).data[i] - y[i], 2);
  }
  EXPECT_NEAR(t.scalar(cl.loss), 0.5 * mse / 4.0, 1e-12);
}

TEST(CriticLoss, GradientMatchesDifferences) {
  SacAgent<double> agent(tiny(), kObs, 1, 2, 3);
  Rng r(10);
  Matrix<double> s(1, kObs), a(1, 3);
  for (auto& v : s.data) v = r.uniform();
  for (auto& v : a.data) v = r.uniform(-1, 1);
  std::vector<ParamSet<double>*> sets{&agent.critic1().params(), &agent.critic2().params()};
  auto loss = [&](bool grad) {
    Tape<double> t;
    auto cl = agent.critic_loss(t, s, a, std::vector<double>{0.7}, std::vector<double>{0.6});
    if (grad) t.backward(cl.loss);
    return t.scalar(cl.loss);
  };
  EXPECT_LE(gradcheck::max_param_error(sets, loss), 1e-4);
}

TEST(CriticLoss, OneStepReducesError) {
  SacAgent<double> agent(tiny(), kObs, 1, 2, 3);
  Rng r(11);
  auto t = random_transition(r, 3, true, 3.0);
  const double before = std::abs(t.reward - q1_of(agent, t));
  agent.update_on_batch({&t}, std::vector<double>{1.0});
  EXPECT_LT(std::abs(t.reward - q1_of(agent, t)), before);
}

TEST(ActorLoss, ZeroAlphaConstantCriticsGiveZeroGradient) {
  SacAgent<double> agent(tiny(), kObs, 1, 2, 3);
  for (auto* c : {&agent.critic1(), &agent.critic2()}) {
    auto& ps = c->params();
    ps[ps.size() - 2].value.fill(0.0);  // last weight matrix
  }
  Rng r(12);
  Matrix<double> hist(6, kObs), state(2, kObs), noise(2, 3);
  for (auto& v : hist.data) v = r.uniform();
  for (auto& v : state.data) v = r.uniform();
  for (auto& v : noise.data) v = r.normal();
  for (auto* s : agent.actor().param_sets()) s->zero_grad();
  Tape<double> t;
  auto al = agent.actor_loss(t, hist, state, noise, 0.0);
  t.backward(al.loss);
  for (auto* s : agent.actor().param_sets())
    for (double g : s->flatten_grad()) EXPECT_EQ(g, 0.0);
}

TEST(ActorLoss, GradientMatchesDifferences) {
  for (bool performer : {true, false}) {
    SacAgent<double> agent(tiny(true, performer), kObs, 1, 2, 3);
    const std::size_t h = agent.window();
    Rng r(13);
    Matrix<double> hist(h, kObs), state(1, kObs), noise(1, 3);
    for (auto& v : hist.data) v = r.uniform();
    std::copy(hist.row(h - 1), hist.row(h - 1) + kObs, state.data.begin());
    for (auto& v : noise.data) v = r.normal(0.0, 0.5);
    auto sets = agent.actor().param_sets();
    auto loss = [&](bool grad) {
      Tape<double> t;
      auto al = agent.actor_loss(t, hist, state, noise, 0.3);
      if (grad) t.backward(al.loss);
      return t.scalar(al.loss);
    };
    EXPECT_LE(gradcheck::max_param_error(sets, loss), 1e-3) << "performer " << performer;
  }
}

TEST(ActorLoss, EntropyTermRaisesLogStd) {
  SacAgent<double> agent(tiny(), kObs, 1, 2, 3);
  for (auto* c : {&agent.critic1(), &agent.critic2()}) {
    auto& ps = c->params();
    ps[ps.size() - 2].value.fill(0.0);
  }
  // Start narrow: the tanh Jacobian term favours shrinking an already wide policy.
  auto& trunk = agent.actor().trunk_params();
  auto& bias = trunk[trunk.size() - 1].value;
  for (std::size_t j = 3; j < 6; ++j) bias.data[j] = -3.0;
  Rng r(14);
  Matrix<double> hist(12, kObs), state(4, kObs);
  for (auto& v : hist.data) v = r.uniform();
  for (auto& v : state.data) v = r.uniform();
  auto mean_log_std = [&] {
    Tape<double> t;
    auto o = agent.actor().forward(t, hist, false);
    double s = 0;
    for (double v : t.value(o.log_std).data) s += v;
    return s;
  };
  const double before = mean_log_std();
  for (int k = 0; k < 50; ++k) {
    Matrix<double> noise(4, 3);
    for (auto& v : noise.data) v = r.normal();
    for (auto* s : agent.actor().param_sets()) s->zero_grad();
    Tape<double> t;
    t.backward(agent.actor_loss(t, hist, state, noise, 1.0).loss);
    for (auto* s : agent.actor().param_sets()) adaptive_update(*s, 1e-2);
  }
  EXPECT_GT(mean_log_std(), before);
}

TEST(Entropy, AtTargetGradientVanishes) {
  Rng r(15);
  std::vector<Transition<double>> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(random_transition(r, 3));
  std::vector<const Transition<double>*> items;
  for (auto& t : batch) items.push_back(&t);
  SacAgent<double> probe(tiny(), kObs, 1, 2, 3);
  const double lp = probe.update_on_batch(items, std::vector<double>(4, 1.0)).stats.mean_log_prob;
  auto cfg = tiny();
  cfg.target_entropy = -lp;
  SacAgent<double> agent(cfg, kObs, 1, 2, 3);
  const double alpha0 = agent.alpha();
  const auto res = agent.update_on_batch(items, std::vector<double>(4, 1.0));
  EXPECT_EQ(res.stats.mean_log_prob, lp);
  EXPECT_EQ(res.stats.alpha_grad, 0.0);
  EXPECT_EQ(agent.alpha(), alpha0);
}

TEST(Entropy, SignOfAlphaUpdate) {
  Rng r(16);
  auto t = random_transition(r, 3);
  for (double target : {100.0, -100.0}) {
    auto cfg = tiny();
    cfg.target_entropy = target;
    SacAgent<double> agent(cfg, kObs, 1, 2, 3);
    const double a0 = agent.alpha();
    for (int k = 0; k < 5; ++k) agent.update_on_batch({&t}, std::vector<double>{1.0});
    if (target > 0) {
      EXPECT_GT(agent.alpha(), a0);  // entropy far below target
    } else {
      EXPECT_LT(agent.alpha(), a0);
    }
    EXPECT_GT(agent.alpha(), 0.0);
  }
}

TEST(TrainStep, NoOpBelowBatch) {
  SacAgent<double> agent(tiny(), kObs, 1, 2, 3);
  Rng r(17);
  for (int i = 0; i < 3; ++i) agent.observe(random_transition(r, 3));
  const auto before = all_params(agent);
  const auto s = agent.train_step();
  EXPECT_FALSE(s.updated);
  EXPECT_EQ(all_params(agent), before);
  EXPECT_EQ(agent.update_count(), 0u);
}

TEST(TrainStep, SampledPrioritiesChange) {
  SacAgent<double> agent(tiny(), kObs, 1, 2, 3);
  Rng r(18);
  for (int i = 0; i < 4; ++i) agent.observe(random_transition(r, 3, false, 3.0));
  std::vector<double> before;
  for (std::size_t i = 0; i < 4; ++i) before.push_back(agent.replay().priority(i));
  agent.train_step();
  int changed = 0;
  for (std::size_t i = 0; i < 4; ++i) changed += agent.replay().priority(i) != before[i];
  EXPECT_GT(changed, 0);
}

TEST(TrainStep, VanillaAblationUsesUniformSamplingAndUnitWeights) {
  SacAgent<double> agent(tiny(false, false), kObs, 1, 2, 3);
  EXPECT_EQ(agent.window(), 1u);
  Rng r(19);
  for (int i = 0; i < 8; ++i) agent.observe(random_transition(r, 1, false, 3.0));
  const auto s = agent.train_step();
  EXPECT_TRUE(s.updated);
  EXPECT_EQ(s.mean_weight, 1.0);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(agent.replay().probability(i), 1.0 / 8.0);
}

TEST(TrainStep, StaysFiniteUnderFuzz) {
  auto cfg = tiny();
  cfg.lr_actor = cfg.lr_critic = cfg.lr_alpha = 1e-2;
  SacAgent<float> agent(cfg, kObs, 4, 5, 6);
  Rng r(20);
  for (int k = 0; k < 1000; ++k) {
    Transition<float> t;
    for (std::size_t i = 0; i < 3 * kObs; ++i) t.obs.push_back(static_cast<float>(r.uniform(-1, 2)));
    for (std::size_t i = 0; i < 3 * kObs; ++i) t.next_obs.push_back(static_cast<float>(r.uniform(-1, 2)));
    for (double a : agent.select_action(t.obs, ActionMode::train)) t.action.push_back(static_cast<float>(a));
    t.reward = static_cast<float>(r.normal(0.0, 50.0));
    t.done = r.bernoulli(0.05);
    agent.observe(std::move(t));
    ASSERT_NO_THROW(agent.train_step());
  }
  for (auto* s : agent.actor().param_sets()) EXPECT_NO_THROW(s->check_finite());
  EXPECT_NO_THROW(agent.critic1().params().check_finite());
  EXPECT_NO_THROW(agent.target2().params().check_finite());
  EXPECT_TRUE(std::isfinite(agent.alpha()) && agent.alpha() > 0.0);
}

TEST(Targets, ClosedFormBlendOnFrozenOnline) {
  SacAgent<double> agent(tiny(), kObs, 1, 2, 3);
  Rng r(21);
  for (auto& p : agent.target1().params().params())
    for (auto& v : p.value.data) v = r.uniform(-1, 1);
  const auto online = agent.critic1().params().flatten();
  const auto start = agent.target1().params().flatten();
  const double tau = 0.05;
  for (int k = 0; k < 30; ++k) soft_update(agent.target1().params(), agent.critic1().params(), tau);
  const auto got = agent.target1().params().flatten();
  const double decay = std::pow(1.0 - tau, 30);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], online[i] + decay * (start[i] - online[i]), 1e-12);
}

TEST(Checkpoint, BitwiseRoundTripAndIdenticalContinuation) {
  SacAgent<double> a(tiny(), kObs, 1, 2, 3);
  Rng r(22);
  for (int i = 0; i < 10; ++i) {
    a.observe(random_transition(r, 3));
    a.train_step();
  }
  const std::string bytes = a.to_full_checkpoint().serialize();
  SacAgent<double> b(tiny(), kObs, 1, 2, 3);
  b.load_checkpoint(Checkpoint<double>::deserialize(bytes));
  EXPECT_EQ(b.to_full_checkpoint().serialize(), bytes);
  Rng r2 = r;
  for (int i = 0; i < 5; ++i) {
    a.observe(random_transition(r, 3));
    b.observe(random_transition(r2, 3));
    const auto sa = a.train_step(), sb = b.train_step();
    ASSERT_EQ(sa.critic_loss, sb.critic_loss);
    ASSERT_EQ(sa.actor_loss, sb.actor_loss);
  }
  EXPECT_EQ(all_params(a), all_params(b));
}

TEST(Checkpoint, LayoutMismatchRejected) {
  SacAgent<double> a(tiny(), kObs, 1, 2, 3);
  SacAgent<double> b(tiny(true, false), kObs, 1, 2, 3);
  EXPECT_THROW(b.load_checkpoint(a.to_checkpoint()), CompatibilityError);
  SacAgent<double> c(tiny(), kObs + 1, 1, 2, 3);
  EXPECT_THROW(c.load_checkpoint(a.to_checkpoint()), CompatibilityError);
}

TEST(Config, InvalidValuesNamed) {
  auto c = tiny();
  c.gamma = 1.0;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "agent.gamma");
  }
  c = tiny();
  c.replay.capacity = 2;
  EXPECT_THROW(SacAgent<double>(c, kObs, 1, 2, 3), ConfigError);
}
