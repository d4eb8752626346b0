#pragma once

#include <cstddef>
#include <vector>

#include "opac/types.hpp"

namespace opac {

struct Transition {
  RowVector state;
  RowVector action;
  double reward = 0.0;
  RowVector next_state;
  bool done = false;
  bool truncated = false;

  // Bootstrap mask d: 1 only for true terminals, 0 for time-limit truncation.
  double terminal() const { return done && !truncated ? 1.0 : 0.0; }
};

struct Batch {
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Vector done;  // d in {0, 1}

  Eigen::Index size() const { return states.rows(); }
};

// Fixed-capacity FIFO ring of transitions with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int state_dim, int action_dim);

  void push(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return size_ == 0; }

  // i-th oldest stored transition.
  Transition at(std::size_t i) const;

  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
  Batch gather(const std::vector<std::size_t>& logical_indices) const;
  Batch sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t physical(std::size_t logical) const;

  std::size_t capacity_;
  int state_dim_;
  int action_dim_;
  std::size_t size_ = 0;
  std::size_t cursor_ = 0;
  std::vector<double> states_;
  std::vector<double> actions_;
  std::vector<double> next_states_;
  std::vector<double> rewards_;
  std::vector<double> done_;
  std::vector<char> truncated_;
};

}  // namespace opac
