#pragma once

// Soft actor-critic learner with twin critics, automatic entropy tuning,
// prioritized replay and an optional random-feature attention actor.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "uavsac/autodiff.hpp"
#include "uavsac/checkpoint.hpp"
#include "uavsac/environment.hpp"
#include "uavsac/errors.hpp"
#include "uavsac/networks.hpp"
#include "uavsac/params.hpp"
#include "uavsac/replay.hpp"
#include "uavsac/rng.hpp"

namespace uavsac {

struct AgentConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  double lr_alpha = 3e-4;
  std::size_t batch_size = 256;
  double target_entropy = -3.0;
  std::size_t warmup_steps = 1000;      // uniform random actions before the policy acts
  std::size_t updates_per_step = 1;
  double initial_alpha = 1.0;
  bool use_per = true;
  bool use_performer = true;
  std::size_t history = 8;
  std::size_t embed_dim = 128;
  std::size_t num_features = 64;
  std::vector<std::size_t> actor_hidden{128, 128};
  std::vector<std::size_t> critic_hidden{256, 256};
  ReplayConfig replay;

  void validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("agent.gamma", "must lie in [0, 1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("agent.tau", "must lie in (0, 1]");
    if (!(lr_actor > 0.0)) throw ConfigError("agent.lr_actor", "must be positive");
    if (!(lr_critic > 0.0)) throw ConfigError("agent.lr_critic", "must be positive");
    if (!(lr_alpha > 0.0)) throw ConfigError("agent.lr_alpha", "must be positive");
    if (batch_size < 1) throw ConfigError("agent.batch_size", "must be at least 1");
    if (updates_per_step < 1) throw ConfigError("agent.updates_per_step", "must be at least 1");
    if (!(initial_alpha > 0.0)) throw ConfigError("agent.initial_alpha", "must be positive");
    if (history < 1) throw ConfigError("agent.history", "must be at least 1");
    if (embed_dim < 1) throw ConfigError("agent.embed_dim", "must be at least 1");
    if (num_features < 1) throw ConfigError("agent.num_features", "must be at least 1");
    if (replay.capacity < batch_size) throw ConfigError("agent.replay.capacity", "must hold at least one batch");
  }

  std::size_t window() const { return use_performer ? history : 1; }
};

// Network sizes used for the reduced-scenario learning checks on a single core.
inline AgentConfig compact_agent_config() {
  AgentConfig cfg;
  cfg.batch_size = 64;
  cfg.embed_dim = 32;
  cfg.num_features = 16;
  cfg.actor_hidden = {64, 64};
  cfg.critic_hidden = {64, 64};
  cfg.lr_actor = 1e-3;
  cfg.lr_critic = 1e-3;
  cfg.lr_alpha = 1e-3;
  cfg.initial_alpha = 0.2;
  cfg.warmup_steps = 1000;
  cfg.replay.capacity = 50000;
  cfg.replay.beta_anneal_steps = 30000;
  return cfg;
}

// Maps a policy action in [-1, 1]^3 onto the movement and power box.
inline UavAction rescale_action(const ScenarioConfig& cfg, std::span<const double> a) {
  auto lerp = [](double lo, double hi, double u) { return lo + (u + 1.0) * 0.5 * (hi - lo); };
  return {a[0] * cfg.move_x_max, a[1] * cfg.move_y_max, lerp(cfg.power_min, cfg.power_max, a[2])};
}

// Sliding window of the last H observations, padded with the first one.
class ObservationWindow {
 public:
  ObservationWindow(std::size_t length, std::size_t obs_dim) : length_(length), obs_dim_(obs_dim) {}

  void reset(std::span<const double> obs) {
    rows_.assign(length_, std::vector<double>(obs.begin(), obs.end()));
  }
  void push(std::span<const double> obs) {
    rows_.pop_front();
    rows_.emplace_back(obs.begin(), obs.end());
  }
  std::size_t length() const { return length_; }

  template <typename T>
  std::vector<T> flat() const {
    std::vector<T> out;
    out.reserve(length_ * obs_dim_);
    for (const auto& r : rows_)
      for (double x : r) out.push_back(static_cast<T>(x));
    return out;
  }

 private:
  std::size_t length_;
  std::size_t obs_dim_;
  std::deque<std::vector<double>> rows_;
};

enum class ActionMode { train, eval };

struct TrainStats {
  bool updated = false;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;        // entropy coefficient used in this update
  double alpha_grad = 0.0;   // d loss / d log(alpha)
  double mean_log_prob = 0.0;
  double mean_td = 0.0;
  double max_td = 0.0;
  double mean_weight = 0.0;
  double min_priority = 0.0;
  double max_priority = 0.0;
};

template <typename T>
class SacAgent {
 public:
  struct UpdateResult {
    TrainStats stats;
    std::vector<double> td_errors;  // |y - Q1(s, a)| per sample
  };

  SacAgent(AgentConfig cfg, std::size_t obs_dim, std::uint64_t init_seed, std::uint64_t noise_seed,
           std::uint64_t replay_seed)
      : cfg_(std::move(cfg)),
        obs_dim_(obs_dim),
        feature_seed_(splitmix64(init_seed ^ 0x66656174ULL)),
        action_rng_(noise_seed),
        update_rng_(splitmix64(noise_seed)),
        replay_rng_(replay_seed),
        replay_(replay_config(cfg_)),
        log_alpha_("log_alpha") {
    cfg_.validate();
    Rng init(init_seed);
    ActorConfig ac;
    ac.obs_dim = obs_dim_;
    ac.action_dim = kActionDim;
    ac.use_performer = cfg_.use_performer;
    ac.history = cfg_.history;
    ac.embed_dim = cfg_.embed_dim;
    ac.hidden = cfg_.actor_hidden;
    ac.num_features = cfg_.num_features;
    ac.feature_seed = feature_seed_;
    actor_ = Actor<T>(ac, init);
    std::vector<std::size_t> sizes{obs_dim_ + kActionDim};
    sizes.insert(sizes.end(), cfg_.critic_hidden.begin(), cfg_.critic_hidden.end());
    sizes.push_back(1);
    critic1_ = Mlp<T>("critic1", sizes, init);
    critic2_ = Mlp<T>("critic2", sizes, init);
    target1_ = critic1_;
    target2_ = critic2_;
    rename(target1_.params(), "target1");
    rename(target2_.params(), "target2");
    log_alpha_.add("log_alpha", 1, 1).value.data[0] = static_cast<T>(std::log(cfg_.initial_alpha));
  }

  static constexpr std::size_t kActionDim = 3;

  const AgentConfig& config() const { return cfg_; }
  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t window() const { return cfg_.window(); }
  std::uint64_t feature_seed() const { return feature_seed_; }
  double alpha() const { return std::exp(static_cast<double>(log_alpha_[0].value.data[0])); }
  std::uint64_t update_count() const { return updates_; }
  std::uint64_t env_steps() const { return env_steps_; }

  Actor<T>& actor() { return actor_; }
  Mlp<T>& critic1() { return critic1_; }
  Mlp<T>& critic2() { return critic2_; }
  Mlp<T>& target1() { return target1_; }
  Mlp<T>& target2() { return target2_; }
  ParamSet<T>& log_alpha() { return log_alpha_; }
  PrioritizedReplay<T>& replay() { return replay_; }
  const PrioritizedReplay<T>& replay() const { return replay_; }
  Rng& action_rng() { return action_rng_; }
  Rng& update_rng() { return update_rng_; }

  // Policy action in (-1, 1)^3 for one window (H x obs_dim, flattened).
  // Train mode samples; eval mode returns tanh(mean). During warmup, train
  // mode draws uniformly from the action box instead.
  std::vector<double> select_action(std::span<const T> window, ActionMode mode) {
    if (mode == ActionMode::train && env_steps_ < cfg_.warmup_steps) {
      std::vector<double> a(kActionDim);
      for (auto& x : a) x = action_rng_.uniform(-1.0, 1.0);
      return a;
    }
    Matrix<T> hist(this->window(), obs_dim_, std::vector<T>(window.begin(), window.end()));
    auto [mean, log_std] = actor_.forward(hist);
    std::vector<double> m(mean.begin(), mean.end());
    if (mode == ActionMode::eval) return deterministic_action(m);
    std::vector<double> ls(log_std.begin(), log_std.end());
    return sample_squashed(m, ls, action_rng_).action;
  }

  void observe(Transition<T> t) {
    replay_.push(std::move(t));
    ++env_steps_;
  }

  bool ready() const { return replay_.size() >= cfg_.batch_size; }

  // Sample, update critics, refresh priorities, update actor and entropy
  // coefficient, blend target critics. No-op until the buffer holds a batch.
  TrainStats train_step() {
    TrainStats last;
    if (!ready()) return last;
    for (std::size_t u = 0; u < cfg_.updates_per_step; ++u) {
      const double beta = cfg_.use_per ? replay_.beta_at(updates_) : 0.0;
      auto batch = replay_.sample(cfg_.batch_size, replay_rng_, beta);
      if (!cfg_.use_per) std::fill(batch.weights.begin(), batch.weights.end(), 1.0);
      auto result = update_on_batch(batch.items, batch.weights);
      if (cfg_.use_per) replay_.update_priorities(batch.refs, result.td_errors);
      last = result.stats;
      double pmin = 1e300, pmax = 0.0, wsum = 0.0;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        pmin = std::min(pmin, replay_.priority(batch.refs[k].slot));
        pmax = std::max(pmax, replay_.priority(batch.refs[k].slot));
        wsum += batch.weights[k];
      }
      last.min_priority = pmin;
      last.max_priority = pmax;
      last.mean_weight = wsum / static_cast<double>(batch.size());
    }
    return last;
  }

  // One full update on an explicit batch. Draws B x 3 target-policy noise and
  // then B x 3 actor noise from update_rng(), in that order, row-major.
  UpdateResult update_on_batch(const std::vector<const Transition<T>*>& items, std::span<const double> weights) {
    const std::size_t b = items.size();
    const std::size_t h = window();
    UpdateResult res;
    res.stats.updated = true;
    const double alpha = this->alpha();
    res.stats.alpha = alpha;

    Matrix<T> hist(b * h, obs_dim_), next_hist(b * h, obs_dim_);
    Matrix<T> state(b, obs_dim_), next_state(b, obs_dim_), actions(b, kActionDim);
    for (std::size_t i = 0; i < b; ++i) {
      const auto& t = *items[i];
      if (t.obs.size() != h * obs_dim_ || t.next_obs.size() != h * obs_dim_ || t.action.size() != kActionDim)
        throw TopologyError("update: transition does not match agent layout");
      std::copy(t.obs.begin(), t.obs.end(), hist.row(i * h));
      std::copy(t.next_obs.begin(), t.next_obs.end(), next_hist.row(i * h));
      std::copy(t.obs.end() - static_cast<std::ptrdiff_t>(obs_dim_), t.obs.end(), state.row(i));
      std::copy(t.next_obs.end() - static_cast<std::ptrdiff_t>(obs_dim_), t.next_obs.end(), next_state.row(i));
      std::copy(t.action.begin(), t.action.end(), actions.row(i));
    }
    Matrix<T> target_noise = draw_noise(b);
    Matrix<T> actor_noise = draw_noise(b);

    // Soft Bellman target from target critics and a fresh next action.
    std::vector<double> y(b);
    {
      Tape<T> tape;
      auto pol = actor_.forward(tape, next_hist, false);
      auto s = squashed_sample(tape, pol.mean, pol.log_std, target_noise);
      Var in = tape.concat_cols(tape.constant(next_state), s.action);
      const Matrix<T> q1 = tape.value(target1_.forward(tape, in, false));
      const Matrix<T> q2 = tape.value(target2_.forward(tape, in, false));
      const auto& lp = tape.value(s.log_prob);
      for (std::size_t i = 0; i < b; ++i) {
        const double soft_v = std::min<double>(q1.data[i], q2.data[i]) - alpha * lp.data[i];
        y[i] = items[i]->reward + cfg_.gamma * (items[i]->done ? 0.0 : 1.0) * soft_v;
      }
    }

    // Critic regression, importance weighted.
    {
      critic1_.params().zero_grad();
      critic2_.params().zero_grad();
      Tape<T> tape;
      auto cl = critic_loss(tape, state, actions, y, weights);
      res.stats.critic_loss = tape.scalar(cl.loss);
      if (!std::isfinite(res.stats.critic_loss)) throw NumericalError("critic loss is not finite");
      res.td_errors.resize(b);
      double td_sum = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        res.td_errors[i] = std::abs(y[i] - static_cast<double>(tape.value(cl.q1).data[i]));
        td_sum += res.td_errors[i];
        res.stats.max_td = std::max(res.stats.max_td, res.td_errors[i]);
      }
      res.stats.mean_td = td_sum / static_cast<double>(b);
      tape.backward(cl.loss);
      adaptive_update(critic1_.params(), cfg_.lr_critic);
      adaptive_update(critic2_.params(), cfg_.lr_critic);
    }

    // Actor: minimise alpha * log pi - min Q through the reparameterised action.
    std::vector<double> log_probs(b);
    {
      for (auto* set : actor_.param_sets()) set->zero_grad();
      Tape<T> tape;
      auto al = actor_loss(tape, hist, state, actor_noise, alpha);
      res.stats.actor_loss = tape.scalar(al.loss);
      for (std::size_t i = 0; i < b; ++i) log_probs[i] = tape.value(al.log_prob).data[i];
      tape.backward(al.loss);
      for (auto* set : actor_.param_sets()) adaptive_update(*set, cfg_.lr_actor);
    }

    // Entropy coefficient: loss = -log_alpha * mean(log pi + target_entropy).
    {
      double mean_lp = 0.0;
      for (double lp : log_probs) mean_lp += lp;
      mean_lp /= static_cast<double>(b);
      res.stats.mean_log_prob = mean_lp;
      res.stats.alpha_grad = -(mean_lp + cfg_.target_entropy);
      log_alpha_[0].grad.data[0] = static_cast<T>(res.stats.alpha_grad);
      adaptive_update(log_alpha_, cfg_.lr_alpha);
    }

    soft_update(target1_.params(), critic1_.params(), cfg_.tau);
    soft_update(target2_.params(), critic2_.params(), cfg_.tau);
    ++updates_;
    return res;
  }

  struct CriticLoss {
    Var loss, q1, q2;
  };
  struct ActorLoss {
    Var loss, log_prob;
  };

  // 0.5 * mean(w * ((Q1 - y)^2 + (Q2 - y)^2)) on trainable online critics.
  CriticLoss critic_loss(Tape<T>& tape, const Matrix<T>& state, const Matrix<T>& actions, std::span<const double> y,
                         std::span<const double> weights) {
    const std::size_t b = state.rows;
    Var in = tape.concat_cols(tape.constant(state), tape.constant(actions));
    Var q1 = critic1_.forward(tape, in);
    Var q2 = critic2_.forward(tape, in);
    Matrix<T> ym(b, 1), wm(b, 1);
    for (std::size_t i = 0; i < b; ++i) {
      ym.data[i] = static_cast<T>(y[i]);
      wm.data[i] = static_cast<T>(weights[i]);
    }
    Var yv = tape.constant(ym);
    Var sq = tape.add(tape.square(tape.sub(q1, yv)), tape.square(tape.sub(q2, yv)));
    return {tape.scale(tape.mean(tape.mul(tape.constant(wm), sq)), T(0.5)), q1, q2};
  }

  // mean(alpha * log pi(a~|s) - min(Q1, Q2)(s, a~)); critics frozen.
  ActorLoss actor_loss(Tape<T>& tape, const Matrix<T>& hist, const Matrix<T>& state, const Matrix<T>& noise,
                       double alpha) {
    auto pol = actor_.forward(tape, hist, true);
    auto s = squashed_sample(tape, pol.mean, pol.log_std, noise);
    Var in = tape.concat_cols(tape.constant(state), s.action);
    Var q = tape.min(critic1_.forward(tape, in, false), critic2_.forward(tape, in, false));
    return {tape.mean(tape.sub(tape.scale(s.log_prob, static_cast<T>(alpha)), q)), s.log_prob};
  }

  // ---- checkpointing ------------------------------------------------------------

  Checkpoint<T> to_checkpoint() const {
    Checkpoint<T> c;
    c.metadata["obs_dim"] = std::to_string(obs_dim_);
    c.metadata["window"] = std::to_string(window());
    c.metadata["use_performer"] = cfg_.use_performer ? "1" : "0";
    c.metadata["feature_seed"] = std::to_string(feature_seed_);
    c.metadata["updates"] = std::to_string(updates_);
    c.metadata["env_steps"] = std::to_string(env_steps_);
    c.metadata["rng.action"] = action_rng_.serialize();
    c.metadata["rng.update"] = update_rng_.serialize();
    c.metadata["rng.replay"] = replay_rng_.serialize();
    if (cfg_.use_performer) c.sets.push_back(actor_.attention_params());
    c.sets.push_back(actor_.trunk_params());
    c.sets.push_back(critic1_.params());
    c.sets.push_back(critic2_.params());
    c.sets.push_back(target1_.params());
    c.sets.push_back(target2_.params());
    c.sets.push_back(log_alpha_);
    return c;
  }

  // Includes the replay buffer so training can resume exactly.
  Checkpoint<T> to_full_checkpoint() const {
    auto c = to_checkpoint();
    c.blobs["replay"] = serialize_replay();
    return c;
  }

  void load_checkpoint(const Checkpoint<T>& c) {
    if (c.metadata.at("obs_dim") != std::to_string(obs_dim_) || c.metadata.at("window") != std::to_string(window()) ||
        c.metadata.at("use_performer") != (cfg_.use_performer ? "1" : "0"))
      throw CompatibilityError("checkpoint layout does not match agent (obs_dim/window/performer)");
    if (c.metadata.at("feature_seed") != std::to_string(feature_seed_))
      throw CompatibilityError("checkpoint feature seed does not match agent");
    if (cfg_.use_performer) copy_params(actor_.attention_params(), c.set("actor"));
    copy_params(actor_.trunk_params(), c.set("actor_trunk"));
    copy_params(critic1_.params(), c.set("critic1"));
    copy_params(critic2_.params(), c.set("critic2"));
    copy_params(target1_.params(), c.set("target1"));
    copy_params(target2_.params(), c.set("target2"));
    copy_params(log_alpha_, c.set("log_alpha"));
    updates_ = std::stoull(c.metadata.at("updates"));
    env_steps_ = std::stoull(c.metadata.at("env_steps"));
    action_rng_.deserialize(c.metadata.at("rng.action"));
    update_rng_.deserialize(c.metadata.at("rng.update"));
    replay_rng_.deserialize(c.metadata.at("rng.replay"));
    if (auto it = c.blobs.find("replay"); it != c.blobs.end()) deserialize_replay(it->second);
  }

 private:
  static ReplayConfig replay_config(const AgentConfig& cfg) {
    ReplayConfig rc = cfg.replay;
    if (!cfg.use_per) {
      rc.alpha = 0.0;
      rc.beta_start = 0.0;
    }
    return rc;
  }

  static void rename(ParamSet<T>& set, const std::string& name) {
    ParamSet<T> renamed(name);
    for (const auto& p : set.params()) renamed.params().push_back(p);
    set = std::move(renamed);
  }

  Matrix<T> draw_noise(std::size_t b) {
    Matrix<T> n(b, kActionDim);
    for (auto& x : n.data) x = static_cast<T>(update_rng_.normal());
    return n;
  }

  std::string serialize_replay() const {
    ByteWriter w;
    const auto st = replay_.state();
    w.pod(static_cast<std::uint64_t>(replay_.capacity()));
    w.pod(static_cast<std::uint64_t>(st.head));
    w.pod(static_cast<std::uint64_t>(st.count));
    w.pod(st.next_serial);
    w.pod(st.stale_updates);
    w.pod(st.max_priority);
    for (std::size_t i = 0; i < st.count; ++i) {
      const auto& t = replay_.at(i);
      w.pod(replay_.priority(i));
      w.pod(replay_.serial(i));
      w.pod(static_cast<std::uint64_t>(t.obs.size()));
      w.array(t.obs);
      w.array(t.next_obs);
      w.pod(static_cast<std::uint64_t>(t.action.size()));
      w.array(t.action);
      w.pod(t.reward);
      w.pod(static_cast<std::uint8_t>(t.done));
    }
    return w.bytes();
  }

  void deserialize_replay(const std::string& bytes) {
    ByteReader r(bytes);
    const auto cap = r.pod<std::uint64_t>();
    if (cap != replay_.capacity()) throw CompatibilityError("checkpoint replay capacity differs from config");
    typename PrioritizedReplay<T>::State st;
    st.head = r.pod<std::uint64_t>();
    st.count = r.pod<std::uint64_t>();
    st.next_serial = r.pod<std::uint64_t>();
    st.stale_updates = r.pod<std::uint64_t>();
    st.max_priority = r.pod<double>();
    std::vector<Transition<T>> items(cap);
    std::vector<double> prio(cap, 0.0);
    std::vector<std::uint64_t> serials(cap, 0);
    for (std::size_t i = 0; i < st.count; ++i) {
      prio[i] = r.pod<double>();
      serials[i] = r.pod<std::uint64_t>();
      const auto n = r.pod<std::uint64_t>();
      items[i].obs = r.array<T>(n);
      items[i].next_obs = r.array<T>(n);
      const auto na = r.pod<std::uint64_t>();
      items[i].action = r.array<T>(na);
      items[i].reward = r.pod<T>();
      items[i].done = r.pod<std::uint8_t>() != 0;
    }
    replay_.restore(st, std::move(items), std::move(prio), std::move(serials));
  }

  AgentConfig cfg_;
  std::size_t obs_dim_;
  std::uint64_t feature_seed_;
  Rng action_rng_;
  Rng update_rng_;
  Rng replay_rng_;
  PrioritizedReplay<T> replay_;
  Actor<T> actor_;
  Mlp<T> critic1_, critic2_, target1_, target2_;
  ParamSet<T> log_alpha_;
  std::uint64_t updates_ = 0;
  std::uint64_t env_steps_ = 0;
};

}  // namespace uavsac
