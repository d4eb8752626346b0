#pragma once

// Desk-scale continuous-control environments and the random finite-MDP
// generator used by the tabular experiments.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "opac/policy.hpp"
#include "opac/tabular.hpp"
#include "opac/types.hpp"

namespace opac {

struct EnvSpec {
  int observation_dim = 1;
  int action_dim = 1;
  ActionBounds bounds;
  int max_episode_steps = 1;

  void validate() const;
};

struct StepResult {
  RowVector observation;
  double reward = 0.0;
  bool done = false;       // episode over (terminal or time limit)
  bool truncated = false;  // ended by the time limit only
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual std::string name() const = 0;
  virtual RowVector reset(std::uint64_t seed) = 0;
  virtual StepResult step(const RowVector& action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

struct PendulumState {
  double theta = 0.0;      // 0 = upright, wrapped to (-pi, pi]
  double theta_dot = 0.0;  // rad/s, |theta_dot| <= max speed
};

class Pendulum final : public Environment {
 public:
  static constexpr double kGravity = 10.0;
  static constexpr double kLength = 1.0;
  static constexpr double kMass = 1.0;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr int kEpisodeSteps = 500;

  Pendulum();

  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return "pendulum"; }
  RowVector reset(std::uint64_t seed) override;
  StepResult step(const RowVector& action) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<Pendulum>(*this); }

  const PendulumState& state() const { return state_; }
  void set_state(const PendulumState& s);
  RowVector observation() const;
  // Rod kinetic plus potential energy, zero potential at the pivot height.
  double energy() const;

  static double wrap_angle(double theta);
  static double reward(const PendulumState& s, double torque);

 private:
  EnvSpec spec_;
  PendulumState state_;
  int steps_ = 0;
};

// Unit point mass on a plane, pushed toward a fixed goal.
class PointMass final : public Environment {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kMaxSpeed = 2.0;
  static constexpr double kArena = 2.0;
  static constexpr int kEpisodeSteps = 200;

  PointMass();

  const EnvSpec& spec() const override { return spec_; }
  std::string name() const override { return "pointmass"; }
  RowVector reset(std::uint64_t seed) override;
  StepResult step(const RowVector& action) override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<PointMass>(*this); }

  const RowVector& goal() const { return goal_; }

 private:
  RowVector observation() const;

  EnvSpec spec_;
  RowVector position_;
  RowVector velocity_;
  RowVector goal_;
  int steps_ = 0;
};

struct RandomMdpKey {
  std::uint64_t seed = 0;
  int n_states = 0;
  int n_actions = 0;
};

// Parses "random-mdp:<seed>:<n_states>:<n_actions>".
std::optional<RandomMdpKey> parse_random_mdp(std::string_view name);

// Transition rows are normalized uniform draws; mean rewards uniform in [0, 1)
// with zero-mean Gaussian noise of std `reward_noise`; no terminal states.
FiniteMDP random_mdp(std::uint64_t seed, int n_states, int n_actions, double gamma = 0.9, double reward_noise = 0.5);

// Registry: "pendulum", "pointmass". Throws ConfigError for unknown names and
// for "random-mdp:..." keys (use make_finite_mdp for those).
std::unique_ptr<Environment> make_env(std::string_view name);
FiniteMDP make_finite_mdp(std::string_view name, double gamma = 0.9, double reward_noise = 0.5);

}  // namespace opac
