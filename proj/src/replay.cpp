#include "opac/replay.hpp"

#include <algorithm>

#include "opac/errors.hpp"

namespace opac {

ReplayBuffer::ReplayBuffer(std::size_t capacity, int state_dim, int action_dim)
    : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
  if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be >= 1");
  if (state_dim < 1 || action_dim < 1) throw ConfigError("ReplayBuffer: dims must be >= 1");
  const std::size_t initial = std::min<std::size_t>(capacity, 4096);
  states_.reserve(initial * state_dim);
  next_states_.reserve(initial * state_dim);
  actions_.reserve(initial * action_dim);
}

void ReplayBuffer::push(const Transition& t) {
  if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_ || t.action.size() != action_dim_)
    throw ShapeError("ReplayBuffer::push: transition dims do not match the buffer");
  if (size_ < capacity_) {
    states_.insert(states_.end(), t.state.data(), t.state.data() + state_dim_);
    actions_.insert(actions_.end(), t.action.data(), t.action.data() + action_dim_);
    next_states_.insert(next_states_.end(), t.next_state.data(), t.next_state.data() + state_dim_);
    rewards_.push_back(t.reward);
    done_.push_back(t.terminal());
    truncated_.push_back(t.truncated ? 1 : 0);
    ++size_;
    cursor_ = size_ % capacity_;
    return;
  }
  const std::size_t k = cursor_;
  std::copy_n(t.state.data(), state_dim_, states_.begin() + static_cast<std::ptrdiff_t>(k * state_dim_));
  std::copy_n(t.action.data(), action_dim_, actions_.begin() + static_cast<std::ptrdiff_t>(k * action_dim_));
  std::copy_n(t.next_state.data(), state_dim_, next_states_.begin() + static_cast<std::ptrdiff_t>(k * state_dim_));
  rewards_[k] = t.reward;
  done_[k] = t.terminal();
  truncated_[k] = t.truncated ? 1 : 0;
  cursor_ = (cursor_ + 1) % capacity_;
}

std::size_t ReplayBuffer::physical(std::size_t logical) const {
  if (logical >= size_) throw ContractError("ReplayBuffer: index out of range");
  return size_ < capacity_ ? logical : (cursor_ + logical) % capacity_;
}

Transition ReplayBuffer::at(std::size_t i) const {
  const std::size_t k = physical(i);
  Transition t;
  t.state = Eigen::Map<const RowVector>(states_.data() + k * state_dim_, state_dim_);
  t.action = Eigen::Map<const RowVector>(actions_.data() + k * action_dim_, action_dim_);
  t.next_state = Eigen::Map<const RowVector>(next_states_.data() + k * state_dim_, state_dim_);
  t.reward = rewards_[k];
  t.truncated = truncated_[k] != 0;
  t.done = done_[k] != 0.0 || t.truncated;
  return t;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (size_ == 0) throw ContractError("ReplayBuffer::sample: buffer is empty");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

Batch ReplayBuffer::gather(const std::vector<std::size_t>& logical_indices) const {
  const auto n = static_cast<Eigen::Index>(logical_indices.size());
  Batch b{Matrix(n, state_dim_), Matrix(n, action_dim_), Vector(n), Matrix(n, state_dim_), Vector(n)};
  for (Eigen::Index r = 0; r < n; ++r) {
    const std::size_t k = physical(logical_indices[static_cast<std::size_t>(r)]);
    for (int j = 0; j < state_dim_; ++j) {
      b.states(r, j) = states_[k * state_dim_ + j];
      b.next_states(r, j) = next_states_[k * state_dim_ + j];
    }
    for (int j = 0; j < action_dim_; ++j) b.actions(r, j) = actions_[k * action_dim_ + j];
    b.rewards[r] = rewards_[k];
    b.done[r] = done_[k];
  }
  return b;
}

Batch ReplayBuffer::sample(std::size_t n, Rng& rng) const { return gather(sample_indices(n, rng)); }

}  // namespace opac
