#pragma once

// Proportional prioritized experience replay backed by a sum-tree.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "uavsac/errors.hpp"
#include "uavsac/rng.hpp"

namespace uavsac {

template <typename T>
struct Transition {
  std::vector<T> obs;       // observation history, H rows flattened, oldest first
  std::vector<T> action;    // policy-space action in [-1, 1]^3
  T reward = 0;
  std::vector<T> next_obs;
  bool done = false;        // true terminal (no bootstrap)
};

// w = (1 / (N P))^beta
inline double importance_weight(double prob, std::size_t count, double beta) {
  return std::pow(1.0 / (static_cast<double>(count) * prob), beta);
}

// Binary sum-tree over a fixed number of leaves. Internal nodes are always
// recomputed from their children so the root never drifts from the leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t leaves = 1) { resize(leaves); }

  void resize(std::size_t leaves) {
    leaves_ = std::max<std::size_t>(leaves, 1);
    base_ = 1;
    while (base_ < leaves_) base_ <<= 1;
    nodes_.assign(2 * base_, 0.0);
  }

  std::size_t size() const { return leaves_; }
  double total() const { return nodes_[1]; }
  double leaf(std::size_t i) const { return nodes_[base_ + i]; }

  void set(std::size_t i, double value) {
    std::size_t n = base_ + i;
    nodes_[n] = value;
    for (n >>= 1; n >= 1; n >>= 1) nodes_[n] = nodes_[2 * n] + nodes_[2 * n + 1];
  }

  // Leaf whose cumulative interval contains `mass`, skipping zero-weight leaves.
  std::size_t find(double mass) const {
    mass = std::clamp(mass, 0.0, total());
    std::size_t n = 1;
    while (n < base_) {
      const double left = nodes_[2 * n];
      if (mass < left || nodes_[2 * n + 1] <= 0.0) {
        n = 2 * n;
      } else {
        mass -= left;
        n = 2 * n + 1;
      }
    }
    return n - base_;
  }

 private:
  std::size_t leaves_ = 1;
  std::size_t base_ = 1;
  std::vector<double> nodes_;
};

struct ReplayConfig {
  std::size_t capacity = 100000;
  double alpha = 0.6;
  double beta_start = 0.4;
  std::uint64_t beta_anneal_steps = 100000;  // beta reaches 1 after this many training steps
  double epsilon = 1e-5;
};

// Handle to a sampled slot; `serial` detects overwrites between sample and update.
struct ReplayRef {
  std::size_t slot = 0;
  std::uint64_t serial = 0;
};

template <typename T>
struct ReplayBatch {
  std::vector<const Transition<T>*> items;
  std::vector<ReplayRef> refs;
  std::vector<double> probabilities;
  std::vector<double> weights;
  std::size_t size() const { return items.size(); }
};

template <typename T>
class PrioritizedReplay {
 public:
  explicit PrioritizedReplay(ReplayConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.capacity == 0) throw ConfigError("replay.capacity", "must be positive");
    if (cfg_.alpha < 0.0 || cfg_.alpha > 1.0) throw ConfigError("replay.alpha", "must lie in [0, 1]");
    if (cfg_.beta_start < 0.0 || cfg_.beta_start > 1.0) throw ConfigError("replay.beta_start", "must lie in [0, 1]");
    if (!(cfg_.epsilon > 0.0)) throw ConfigError("replay.epsilon", "must be positive");
    tree_.resize(cfg_.capacity);
    items_.resize(cfg_.capacity);
    priorities_.assign(cfg_.capacity, 0.0);
    serials_.assign(cfg_.capacity, 0);
  }

  const ReplayConfig& config() const { return cfg_; }
  std::size_t size() const { return count_; }
  std::size_t capacity() const { return cfg_.capacity; }
  double max_priority() const { return max_priority_; }
  std::uint64_t stale_updates() const { return stale_updates_; }
  double total_mass() const { return tree_.total(); }
  double priority(std::size_t slot) const { return priorities_[slot]; }
  const Transition<T>& at(std::size_t slot) const { return items_[slot]; }
  std::uint64_t serial(std::size_t slot) const { return serials_[slot]; }

  double beta_at(std::uint64_t step) const {
    if (cfg_.beta_anneal_steps == 0) return 1.0;
    const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(cfg_.beta_anneal_steps));
    return cfg_.beta_start + (1.0 - cfg_.beta_start) * frac;
  }

  // Stores with the largest priority seen so far.
  std::size_t push(Transition<T> t) { return push(std::move(t), max_priority_); }

  std::size_t push(Transition<T> t, double priority) {
    const std::size_t slot = head_;
    items_[slot] = std::move(t);
    serials_[slot] = ++next_serial_;
    set_priority(slot, priority);
    head_ = (head_ + 1) % cfg_.capacity;
    count_ = std::min(count_ + 1, cfg_.capacity);
    return slot;
  }

  // Stratified proportional sampling; weights are normalised by the batch maximum.
  ReplayBatch<T> sample(std::size_t batch, Rng& rng, double beta) const {
    if (batch == 0 || count_ < batch) throw NotReadyError("replay: fewer stored transitions than batch size");
    ReplayBatch<T> out;
    out.items.reserve(batch);
    const double total = tree_.total();
    const double segment = total / static_cast<double>(batch);
    double max_w = 0.0;
    for (std::size_t k = 0; k < batch; ++k) {
      double mass = (static_cast<double>(k) + rng.uniform()) * segment;
      if (mass >= total) mass = std::nextafter(total, 0.0);
      std::size_t slot = tree_.find(mass);
      if (slot >= count_ && count_ < cfg_.capacity) slot = count_ - 1;
      const double p = tree_.leaf(slot) / total;
      const double w = importance_weight(p, count_, beta);
      out.items.push_back(&items_[slot]);
      out.refs.push_back({slot, serials_[slot]});
      out.probabilities.push_back(p);
      out.weights.push_back(w);
      max_w = std::max(max_w, w);
    }
    for (double& w : out.weights) w /= max_w;
    return out;
  }

  // p = |delta| + epsilon. Refs to overwritten slots are skipped and counted.
  void update_priorities(std::span<const ReplayRef> refs, std::span<const double> td_errors) {
    for (std::size_t k = 0; k < refs.size(); ++k) {
      const auto& r = refs[k];
      if (r.slot >= cfg_.capacity || serials_[r.slot] != r.serial || r.serial == 0) {
        ++stale_updates_;
        continue;
      }
      set_priority(r.slot, std::abs(td_errors[k]) + cfg_.epsilon);
    }
  }

  // Sampling probability of a stored slot.
  double probability(std::size_t slot) const { return tree_.leaf(slot) / tree_.total(); }

  // One JSON object per live slot: {"index":i,"priority":p}
  void dump_priorities(std::ostream& os) const {
    for (std::size_t i = 0; i < count_; ++i)
      os << "{\"index\":" << i << ",\"priority\":" << priorities_[i] << "}\n";
  }

  // Raw state access for checkpointing.
  struct State {
    std::size_t head = 0, count = 0;
    std::uint64_t next_serial = 0, stale_updates = 0;
    double max_priority = 1.0;
  };
  State state() const { return {head_, count_, next_serial_, stale_updates_, max_priority_}; }

  void restore(const State& s, std::vector<Transition<T>> items, std::vector<double> priorities,
               std::vector<std::uint64_t> serials) {
    if (items.size() != cfg_.capacity || priorities.size() != cfg_.capacity || serials.size() != cfg_.capacity)
      throw TopologyError("replay: restored state does not match capacity");
    items_ = std::move(items);
    serials_ = std::move(serials);
    priorities_.assign(cfg_.capacity, 0.0);
    tree_.resize(cfg_.capacity);
    for (std::size_t i = 0; i < cfg_.capacity; ++i) {
      if (priorities[i] > 0.0) {
        priorities_[i] = priorities[i];
        tree_.set(i, std::pow(priorities[i], cfg_.alpha));
      }
    }
    head_ = s.head;
    count_ = s.count;
    next_serial_ = s.next_serial;
    stale_updates_ = s.stale_updates;
    max_priority_ = s.max_priority;
  }

 private:
  void set_priority(std::size_t slot, double priority) {
    const double p = std::max(priority, cfg_.epsilon);
    priorities_[slot] = p;
    max_priority_ = std::max(max_priority_, p);
    tree_.set(slot, std::pow(p, cfg_.alpha));
  }

  ReplayConfig cfg_;
  SumTree tree_;
  std::vector<Transition<T>> items_;
  std::vector<double> priorities_;
  std::vector<std::uint64_t> serials_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  std::uint64_t next_serial_ = 0;
  std::uint64_t stale_updates_ = 0;
  double max_priority_ = 1.0;
};

}  // namespace uavsac
