#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uavsac/autodiff.hpp"
#include "uavsac/errors.hpp"
#include "uavsac/matrix.hpp"
#include "uavsac/params.hpp"
#include "uavsac/rng.hpp"

namespace uavsac {

// Affine layers with softplus between them and a linear output layer.
// Layer k holds W{k} (in x out) and b{k} (1 x out).
template <typename T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, std::vector<std::size_t> sizes, Rng& rng) : sizes_(std::move(sizes)), params_(std::move(name)) {
    if (sizes_.size() < 2) throw TopologyError("Mlp: need at least input and output sizes");
    for (std::size_t k = 0; k + 1 < sizes_.size(); ++k) {
      auto& w = params_.add("W" + std::to_string(k), sizes_[k], sizes_[k + 1]);
      init_uniform(w, sizes_[k], rng);
      auto& b = params_.add("b" + std::to_string(k), 1, sizes_[k + 1]);
      init_uniform(b, sizes_[k], rng);
    }
  }

  std::size_t input_size() const { return sizes_.front(); }
  std::size_t output_size() const { return sizes_.back(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  Var forward(Tape<T>& tape, Var x, bool trainable = true) {
    if (tape.value(x).cols != input_size()) throw TopologyError("Mlp '" + params_.name() + "': input width mismatch");
    const std::size_t layers = sizes_.size() - 1;
    for (std::size_t k = 0; k < layers; ++k) {
      Var w = tape.param(params_[2 * k], trainable);
      Var b = tape.param(params_[2 * k + 1], trainable);
      x = tape.add_bias(tape.matmul(x, w), b);
      if (k + 1 < layers) x = tape.softplus(x);
    }
    return x;
  }

  // Batch forward without recording gradients.
  Matrix<T> forward(const Matrix<T>& input) {
    Tape<T> tape;
    return tape.value(forward(tape, tape.constant(input), false));
  }

  std::vector<T> forward(std::span<const T> input) {
    if (input.size() != input_size()) throw TopologyError("Mlp '" + params_.name() + "': input length mismatch");
    return forward(Matrix<T>::row_vector(input)).data;
  }

 private:
  std::vector<std::size_t> sizes_;
  ParamSet<T> params_;
};

// ---------------------------------------------------------------------------
// Random-feature attention.

// m x d matrix of i.i.d. standard normal rows, fixed for the network's lifetime.
template <typename T>
Matrix<T> draw_feature_matrix(std::size_t m, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix<T> w(m, d);
  for (auto& x : w.data) x = static_cast<T>(rng.normal());
  return w;
}

// phi(x)_k = exp(w_k . x - |x|^2 / 2) / sqrt(m). Strictly positive.
template <typename T>
std::vector<T> performer_feature_map(std::span<const T> x, const Matrix<T>& features) {
  if (x.size() != features.cols) throw TopologyError("performer_feature_map: dimension mismatch");
  T sq = 0;
  for (T v : x) sq += v * v;
  const T norm = T(1) / std::sqrt(static_cast<T>(features.rows));
  std::vector<T> out(features.rows);
  for (std::size_t k = 0; k < features.rows; ++k) {
    T dot = 0;
    for (std::size_t j = 0; j < x.size(); ++j) dot += features(k, j) * x[j];
    out[k] = std::exp(dot - sq / T(2)) * norm;
  }
  return out;
}

// Normalised linear attention of one sequence: rows of Q, K, V are positions.
// out = phi(Q)(phi(K)^T V) / phi(Q)(phi(K)^T 1), linear in sequence length.
template <typename T>
Matrix<T> performer_attention(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, const Matrix<T>& features) {
  if (q.rows != k.rows || k.rows != v.rows || q.cols != k.cols) throw TopologyError("performer_attention: shape mismatch");
  Tape<T> tape;
  Var phi_q = tape.feature_map(tape.constant(q), features, 1);
  Var phi_k = tape.feature_map(tape.constant(k), features, k.rows);
  return tape.value(tape.linear_attention(phi_q, phi_k, tape.constant(v), q.rows, k.rows));
}

// ---------------------------------------------------------------------------
// Actor: history window -> tanh-Gaussian policy parameters.

struct ActorConfig {
  std::size_t obs_dim = 0;
  std::size_t action_dim = 3;
  bool use_performer = true;
  std::size_t history = 8;      // forced to 1 without the performer block
  std::size_t embed_dim = 128;
  std::vector<std::size_t> hidden{128, 128};
  std::size_t num_features = 64;
  std::uint64_t feature_seed = 0;

  std::size_t window() const { return use_performer ? history : 1; }
};

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

// With the performer: rows are embedded (softplus dense), the last row queries
// every row of the window through one normalised random-feature attention
// block, the attended vector plus the last embedding (residual) feeds the
// trunk. Without it, the trunk reads the latest observation directly.
template <typename T>
class Actor {
 public:
  struct Output {
    Var mean;
    Var log_std;
  };

  Actor() = default;
  Actor(const ActorConfig& cfg, Rng& rng) : cfg_(cfg), params_("actor") {
    if (cfg_.obs_dim == 0 || cfg_.action_dim == 0) throw TopologyError("Actor: empty observation or action");
    if (cfg_.use_performer && (cfg_.history == 0 || cfg_.num_features == 0))
      throw TopologyError("Actor: history and feature count must be positive");
    std::vector<std::size_t> sizes;
    if (cfg_.use_performer) {
      const std::size_t e = cfg_.embed_dim;
      init(params_.add("embed_W", cfg_.obs_dim, e), cfg_.obs_dim, rng);
      init(params_.add("embed_b", 1, e), cfg_.obs_dim, rng);
      init(params_.add("query_W", e, e), e, rng);
      init(params_.add("key_W", e, e), e, rng);
      init(params_.add("value_W", e, e), e, rng);
      features_ = draw_feature_matrix<T>(cfg_.num_features, e, cfg_.feature_seed);
      sizes.push_back(e);
    } else {
      sizes.push_back(cfg_.obs_dim);
    }
    sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    sizes.push_back(2 * cfg_.action_dim);
    trunk_ = Mlp<T>("actor_trunk", sizes, rng);
  }

  const ActorConfig& config() const { return cfg_; }
  const Matrix<T>& feature_matrix() const { return features_; }
  ParamSet<T>& attention_params() { return params_; }
  ParamSet<T>& trunk_params() { return trunk_.params(); }
  const ParamSet<T>& attention_params() const { return params_; }
  const ParamSet<T>& trunk_params() const { return trunk_.params(); }

  // `history` stacks batch windows: (B * window) x obs_dim, oldest row first.
  Output forward(Tape<T>& tape, const Matrix<T>& history, bool trainable = true) {
    const std::size_t h = cfg_.window();
    if (history.cols != cfg_.obs_dim || history.rows % h != 0)
      throw TopologyError("Actor: history shape does not match configuration");
    Var x = tape.constant(history);
    Var z;
    if (cfg_.use_performer) {
      const T qk_scale = static_cast<T>(std::pow(static_cast<double>(cfg_.embed_dim), -0.25));
      Var e = tape.softplus(
          tape.add_bias(tape.matmul(x, tape.param(params_[0], trainable)), tape.param(params_[1], trainable)));
      Var last = tape.select_rows(e, h, h - 1);
      Var q = tape.scale(tape.matmul(last, tape.param(params_[2], trainable)), qk_scale);
      Var k = tape.scale(tape.matmul(e, tape.param(params_[3], trainable)), qk_scale);
      Var v = tape.matmul(e, tape.param(params_[4], trainable));
      Var attn = tape.linear_attention(tape.feature_map(q, features_, 1), tape.feature_map(k, features_, h), v, 1, h);
      z = tape.add(attn, last);
    } else {
      z = x;
    }
    Var out = trunk_.forward(tape, z, trainable);
    Var mean = tape.slice_cols(out, 0, cfg_.action_dim);
    Var log_std = tape.clamp(tape.slice_cols(out, cfg_.action_dim, cfg_.action_dim), static_cast<T>(kLogStdMin),
                             static_cast<T>(kLogStdMax));
    return {mean, log_std};
  }

  // Single-window convenience: returns (mean, log_std).
  std::pair<std::vector<T>, std::vector<T>> forward(const Matrix<T>& history) {
    Tape<T> tape;
    auto o = forward(tape, history, false);
    return {tape.value(o.mean).data, tape.value(o.log_std).data};
  }

  std::vector<ParamSet<T>*> param_sets() {
    if (cfg_.use_performer) return {&params_, &trunk_.params()};
    return {&trunk_.params()};
  }

 private:
  static void init(Param<T>& p, std::size_t fan_in, Rng& rng) { init_uniform(p, fan_in, rng); }

  ActorConfig cfg_;
  ParamSet<T> params_;
  Mlp<T> trunk_;
  Matrix<T> features_;
};

// ---------------------------------------------------------------------------
// Tanh-squashed diagonal Gaussian.

inline constexpr double kSquashEpsilon = 1e-6;
// Sampled actions are kept inside [-kActionBound, kActionBound] so they stay
// strictly inside (-1, 1) after tanh rounds to +-1.
inline constexpr double kActionBound = 1.0 - 1e-6;

struct SquashedVars {
  Var action;    // B x A, in (-1, 1)
  Var log_prob;  // B x 1
};

// a = tanh(mean + exp(log_std) * noise); log pi(a) with the tanh Jacobian term.
template <typename T>
SquashedVars squashed_sample(Tape<T>& tape, Var mean, Var log_std, const Matrix<T>& noise) {
  Var xi = tape.constant(noise);
  Var pre = tape.add(mean, tape.mul(tape.exp(log_std), xi));
  Var a = tape.clamp(tape.tanh(pre), static_cast<T>(-kActionBound), static_cast<T>(kActionBound));
  Matrix<T> gauss(noise.rows, noise.cols);
  const T half_log_2pi = static_cast<T>(0.5 * std::log(2.0 * std::numbers::pi));
  for (std::size_t i = 0; i < noise.size(); ++i) gauss.data[i] = T(-0.5) * noise.data[i] * noise.data[i] - half_log_2pi;
  Var jac = tape.log(tape.add_scalar(tape.scale(tape.square(a), T(-1)), static_cast<T>(1.0 + kSquashEpsilon)));
  Var per_dim = tape.sub(tape.sub(tape.constant(std::move(gauss)), log_std), jac);
  return {a, tape.sum_cols(per_dim)};
}

struct SquashedSample {
  std::vector<double> action;
  double log_prob = 0.0;
};

// Log density of a squashed sample given the pre-tanh noise draw.
inline double squashed_log_prob(std::span<const double> mean, std::span<const double> log_std,
                                std::span<const double> noise) {
  double lp = 0.0;
  for (std::size_t j = 0; j < mean.size(); ++j) {
    const double a = std::clamp(std::tanh(mean[j] + std::exp(log_std[j]) * noise[j]), -kActionBound, kActionBound);
    lp += -0.5 * noise[j] * noise[j] - 0.5 * std::log(2.0 * std::numbers::pi) - log_std[j] -
          std::log(1.0 - a * a + kSquashEpsilon);
  }
  return lp;
}

inline SquashedSample sample_squashed(std::span<const double> mean, std::span<const double> log_std, Rng& rng) {
  SquashedSample s;
  std::vector<double> noise(mean.size());
  for (auto& n : noise) n = rng.normal();
  for (std::size_t j = 0; j < mean.size(); ++j)
    s.action.push_back(std::clamp(std::tanh(mean[j] + std::exp(log_std[j]) * noise[j]), -kActionBound, kActionBound));
  s.log_prob = squashed_log_prob(mean, log_std, noise);
  return s;
}

inline std::vector<double> deterministic_action(std::span<const double> mean) {
  std::vector<double> a;
  for (double m : mean) a.push_back(std::clamp(std::tanh(m), -kActionBound, kActionBound));
  return a;
}

}  // namespace uavsac
