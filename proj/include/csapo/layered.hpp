#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "csapo/errors.hpp"

namespace csapo {

// State space of a loop-free layered MDP. States are addressed by
// (layer, index-within-layer); layer 0 and layer L hold a single state.
class LayeredStateSpace {
 public:
  LayeredStateSpace() = default;

  LayeredStateSpace(std::vector<int> layer_sizes, int num_actions)
      : layer_sizes_(std::move(layer_sizes)), num_actions_(num_actions) {
    if (layer_sizes_.size() < 2) {
      throw ShapeMismatchError("a layered state space needs at least two layers");
    }
    if (layer_sizes_.front() != 1 || layer_sizes_.back() != 1) {
      throw ShapeMismatchError("first and last layers must be singletons");
    }
    for (int n : layer_sizes_) {
      if (n < 1) throw ShapeMismatchError("every layer needs at least one state");
    }
    if (num_actions_ < 1) throw ShapeMismatchError("need at least one action");
    offsets_.resize(layer_sizes_.size() + 1, 0);
    std::partial_sum(layer_sizes_.begin(), layer_sizes_.end(),
                     offsets_.begin() + 1);
  }

  // Number of decision layers L.
  int horizon() const { return static_cast<int>(layer_sizes_.size()) - 1; }
  int layer_size(int layer) const { return layer_sizes_[layer]; }
  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  int num_actions() const { return num_actions_; }
  int num_states() const { return offsets_.back(); }
  int global_index(int layer, int x) const { return offsets_[layer] + x; }

  // Number of (x, a) pairs with x outside the terminal layer.
  int num_pairs() const {
    return offsets_[horizon()] * num_actions_;
  }

  bool operator==(const LayeredStateSpace& other) const {
    return layer_sizes_ == other.layer_sizes_ &&
           num_actions_ == other.num_actions_;
  }

 private:
  std::vector<int> layer_sizes_;
  int num_actions_ = 0;
  std::vector<int> offsets_;
};

inline void require_same_space(const LayeredStateSpace& a,
                               const LayeredStateSpace& b,
                               const char* what) {
  if (!(a == b)) throw ShapeMismatchError(std::string(what) + ": state spaces differ");
}

// Values indexed by (layer, x, a) for the decision layers 0..L-1.
class StateActionTable {
 public:
  StateActionTable() = default;
  explicit StateActionTable(const LayeredStateSpace& space, double fill = 0.0)
      : space_(space), data_(space.horizon()) {
    for (int l = 0; l < space.horizon(); ++l) {
      data_[l].assign(space.layer_size(l) * space.num_actions(), fill);
    }
  }

  const LayeredStateSpace& space() const { return space_; }

  double& operator()(int l, int x, int a) {
    return data_[l][x * space_.num_actions() + a];
  }
  double operator()(int l, int x, int a) const {
    return data_[l][x * space_.num_actions() + a];
  }

  std::span<double> row(int l, int x) {
    return {data_[l].data() + x * space_.num_actions(),
            static_cast<std::size_t>(space_.num_actions())};
  }
  std::span<const double> row(int l, int x) const {
    return {data_[l].data() + x * space_.num_actions(),
            static_cast<std::size_t>(space_.num_actions())};
  }

  std::vector<double>& layer(int l) { return data_[l]; }
  const std::vector<double>& layer(int l) const { return data_[l]; }

  bool operator==(const StateActionTable& other) const {
    return space_ == other.space_ && data_ == other.data_;
  }

 private:
  LayeredStateSpace space_;
  std::vector<std::vector<double>> data_;
};

// Values indexed by (layer, x, a, x') with x in layer l and x' in layer l+1.
class TripleTable {
 public:
  TripleTable() = default;
  explicit TripleTable(const LayeredStateSpace& space, double fill = 0.0)
      : space_(space), data_(space.horizon()) {
    for (int l = 0; l < space.horizon(); ++l) {
      data_[l].assign(
          space.layer_size(l) * space.num_actions() * space.layer_size(l + 1),
          fill);
    }
  }

  const LayeredStateSpace& space() const { return space_; }

  double& operator()(int l, int x, int a, int next) {
    return data_[l][index(l, x, a, next)];
  }
  double operator()(int l, int x, int a, int next) const {
    return data_[l][index(l, x, a, next)];
  }

  // Entries over next states for a fixed (x, a).
  std::span<double> row(int l, int x, int a) {
    return {data_[l].data() + index(l, x, a, 0),
            static_cast<std::size_t>(space_.layer_size(l + 1))};
  }
  std::span<const double> row(int l, int x, int a) const {
    return {data_[l].data() + index(l, x, a, 0),
            static_cast<std::size_t>(space_.layer_size(l + 1))};
  }

  double row_sum(int l, int x, int a) const {
    double s = 0.0;
    for (double v : row(l, x, a)) s += v;
    return s;
  }

  std::vector<double>& layer(int l) { return data_[l]; }
  const std::vector<double>& layer(int l) const { return data_[l]; }

  bool operator==(const TripleTable& other) const {
    return space_ == other.space_ && data_ == other.data_;
  }

 private:
  int index(int l, int x, int a, int next) const {
    return (x * space_.num_actions() + a) * space_.layer_size(l + 1) + next;
  }

  LayeredStateSpace space_;
  std::vector<std::vector<double>> data_;
};

// Stochastic policy pi(a | x); every row is a distribution over actions.
class Policy : public StateActionTable {
 public:
  using StateActionTable::StateActionTable;
  explicit Policy(StateActionTable table) : StateActionTable(std::move(table)) {}

  static Policy uniform(const LayeredStateSpace& space) {
    return Policy(space, 1.0 / space.num_actions());
  }

  // Throws InvalidPolicyError if a row is negative or fails to sum to one.
  void check(double tol = 1e-9) const {
    for (int l = 0; l < space().horizon(); ++l) {
      for (int x = 0; x < space().layer_size(l); ++x) {
        double s = 0.0;
        for (double p : row(l, x)) {
          if (!(p >= 0.0)) throw InvalidPolicyError("negative policy entry");
          s += p;
        }
        if (std::abs(s - 1.0) > tol) {
          throw InvalidPolicyError("policy row at layer " + std::to_string(l) +
                                   ", state " + std::to_string(x) +
                                   " sums to " + std::to_string(s));
        }
      }
    }
  }
};

// Transition kernel P(x' | x, a) supported on the next layer.
class TransitionKernel : public TripleTable {
 public:
  using TripleTable::TripleTable;
  explicit TransitionKernel(TripleTable table) : TripleTable(std::move(table)) {}

  static TransitionKernel uniform(const LayeredStateSpace& space) {
    TransitionKernel k(space);
    for (int l = 0; l < space.horizon(); ++l) {
      std::fill(k.layer(l).begin(), k.layer(l).end(),
                1.0 / space.layer_size(l + 1));
    }
    return k;
  }

  // Largest |row sum - 1| over all (x, a); negative entries count as
  // infinite error.
  double max_row_error() const {
    double worst = 0.0;
    for (int l = 0; l < space().horizon(); ++l) {
      for (int x = 0; x < space().layer_size(l); ++x) {
        for (int a = 0; a < space().num_actions(); ++a) {
          for (double p : row(l, x, a)) {
            if (!(p >= 0.0)) return INFINITY;
          }
          worst = std::max(worst, std::abs(row_sum(l, x, a) - 1.0));
        }
      }
    }
    return worst;
  }
};

// A realized episode: L+1 states (layer-local indices) and L actions.
struct Trajectory {
  std::vector<int> states;
  std::vector<int> actions;

  bool operator==(const Trajectory&) const = default;
};

}  // namespace csapo
