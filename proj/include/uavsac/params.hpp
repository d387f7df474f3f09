#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uavsac/errors.hpp"
#include "uavsac/matrix.hpp"
#include "uavsac/rng.hpp"

namespace uavsac {

// One named parameter array with its gradient and adaptive-moment buffers.
template <typename T>
struct Param {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  Matrix<T> m;  // first moment
  Matrix<T> v;  // second moment

  Param() = default;
  Param(std::string n, std::size_t rows, std::size_t cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols), m(rows, cols), v(rows, cols) {}
};

// Flat, named parameter collection owned by one network.
template <typename T>
class ParamSet {
 public:
  ParamSet() = default;
  explicit ParamSet(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }

  Param<T>& add(const std::string& name, std::size_t rows, std::size_t cols) {
    params_.emplace_back(name, rows, cols);
    return params_.back();
  }

  std::vector<Param<T>>& params() { return params_; }
  const std::vector<Param<T>>& params() const { return params_; }
  Param<T>& operator[](std::size_t i) { return params_[i]; }
  const Param<T>& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }

  Param<T>& get(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return p;
    throw TopologyError("ParamSet '" + name_ + "': no parameter named " + name);
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  std::uint64_t& adam_step() { return adam_step_; }
  std::uint64_t adam_step() const { return adam_step_; }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T(0));
  }

  // Throws NumericalError naming the first non-finite value or gradient.
  void check_finite() const {
    for (const auto& p : params_) {
      for (T x : p.value.data)
        if (!std::isfinite(x)) throw NumericalError("non-finite value in " + name_ + "/" + p.name);
      for (T x : p.grad.data)
        if (!std::isfinite(x)) throw NumericalError("non-finite gradient in " + name_ + "/" + p.name);
    }
  }

  bool same_topology(const ParamSet& o) const {
    if (params_.size() != o.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name != o.params_[i].name || !params_[i].value.same_shape(o.params_[i].value)) return false;
    }
    return true;
  }

  std::vector<T> flatten() const {
    std::vector<T> out;
    out.reserve(scalar_count());
    for (const auto& p : params_) out.insert(out.end(), p.value.data.begin(), p.value.data.end());
    return out;
  }

  std::vector<T> flatten_grad() const {
    std::vector<T> out;
    out.reserve(scalar_count());
    for (const auto& p : params_) out.insert(out.end(), p.grad.data.begin(), p.grad.data.end());
    return out;
  }

  // Scalar access over the flattened layout.
  T& scalar(std::size_t k) {
    for (auto& p : params_) {
      if (k < p.value.size()) return p.value.data[k];
      k -= p.value.size();
    }
    throw TopologyError("ParamSet::scalar: index out of range");
  }

 private:
  std::string name_;
  std::vector<Param<T>> params_;
  std::uint64_t adam_step_ = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected first/second-moment update from the accumulated gradients.
template <typename T>
void adaptive_update(ParamSet<T>& set, double lr, const AdamConfig& cfg = {}) {
  set.check_finite();
  const std::uint64_t t = ++set.adam_step();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& p : set.params()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i];
      const double m = cfg.beta1 * p.m.data[i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * p.v.data[i] + (1.0 - cfg.beta2) * g * g;
      p.m.data[i] = static_cast<T>(m);
      p.v.data[i] = static_cast<T>(v);
      const double step = lr * (m / c1) / (std::sqrt(v / c2) + cfg.epsilon);
      p.value.data[i] = static_cast<T>(p.value.data[i] - step);
    }
  }
}

// target <- tau * online + (1 - tau) * target
template <typename T>
void soft_update(ParamSet<T>& target, const ParamSet<T>& online, double tau) {
  if (!target.same_topology(online)) throw TopologyError("soft_update: topology mismatch");
  if (tau == 1.0) {
    for (std::size_t k = 0; k < target.size(); ++k) target[k].value = online[k].value;
    return;
  }
  for (std::size_t k = 0; k < target.size(); ++k) {
    auto& dst = target[k].value.data;
    const auto& src = online[k].value.data;
    for (std::size_t i = 0; i < dst.size(); ++i)
      dst[i] = static_cast<T>(tau * src[i] + (1.0 - tau) * dst[i]);
  }
}

// Fan-in scaled uniform initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void init_uniform(Param<T>& p, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& x : p.value.data) x = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace uavsac
