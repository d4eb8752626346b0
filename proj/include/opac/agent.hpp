#pragma once

// Opportunistic actor-critic training: three critics sharing one bootstrap
// target, a squashed-Gaussian actor updated every `policy_delay` critic steps
// against critic 1, Polyak-averaged targets and a learned entropy temperature.
// SAC and TD3 baselines are configurations of the same loop.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "opac/checkpoint.hpp"
#include "opac/ensemble.hpp"
#include "opac/envs.hpp"
#include "opac/nets.hpp"
#include "opac/optim.hpp"
#include "opac/policy.hpp"
#include "opac/replay.hpp"

namespace opac {

enum class Variant { kOpac, kSac, kTd3 };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);  // "opac", "sac", "td3"

struct AgentConfig {
  Variant variant = Variant::kOpac;
  TargetStrategy strategy = TargetStrategy::kMedianThree;
  double gamma = 0.99;
  double tau = 0.995;  // Polyak retention weight
  int batch_size = 256;
  int policy_delay = 2;
  std::optional<double> entropy_target;  // H0; defaults to -action_dim
  double initial_alpha = 0.2;
  double alpha_min = 1e-4;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double alpha_lr = 3e-4;
  std::uint64_t start_steps = 10000;
  int update_every = 1;
  std::size_t replay_capacity = 1000000;
  std::vector<int> hidden{256, 256};
  std::optional<SmoothingSpec> smoothing = SmoothingSpec{};
  double exploration_noise = 0.1;  // TD3 behaviour noise, normalized action units

  // OPAC keeps `strategy`; SAC and TD3 switch to two critics with kMinPair.
  static AgentConfig for_variant(Variant v, TargetStrategy opac_strategy = TargetStrategy::kMedianThree);
  void validate() const;

  bool stochastic_policy() const { return variant != Variant::kTd3; }
  bool learns_alpha() const { return variant != Variant::kTd3; }
  std::size_t critic_count() const { return critics_for(strategy); }
  double entropy_target_for(int action_dim) const { return entropy_target.value_or(-double(action_dim)); }
};

enum class ActMode { kExplore, kExploit };

struct UpdateDiagnostics {
  std::uint64_t step = 0;  // gradient-step index j of this update
  std::vector<double> critic_losses;
  std::optional<double> policy_loss;
  std::optional<double> entropy;  // -mean log pi over the policy batch
  double alpha = 0.0;
  bool delayed_step = false;      // policy, alpha and targets were updated
};

struct UpdateCounters {
  std::uint64_t critic_steps = 0;  // per-critic gradient steps, summed over critics
  std::uint64_t policy_steps = 0;
  std::uint64_t alpha_steps = 0;
  std::uint64_t target_updates = 0;
};

struct PolicyLossResult {
  double loss = 0.0;
  ParamSet grad;     // w.r.t. the actor parameters
  Vector log_prob;   // detached; empty for deterministic policies
};

// mean_b (alpha * log pi(a_b|s_b) - Q_1(s_b, a_b)) with a_b reparameterized
// from the fixed noise `eps`; critic 1 is held constant. A deterministic
// policy uses a_b = squash(mu(s_b)) and the loss -mean Q_1.
PolicyLossResult policy_loss(const ActorNet& actor, const CriticNet& critic1, const Matrix& states, const Matrix& eps,
                             double alpha, const ActionBounds& bounds, bool stochastic);

// d/d(log alpha) of J = E[-alpha log pi - alpha H0] = alpha * (entropy - H0).
double log_alpha_gradient(double alpha, double entropy_estimate, double entropy_target);

// Entropy temperature kept as log alpha and moved by Adam on J, floored at
// alpha_min so it stays positive.
class Temperature {
 public:
  Temperature() = default;
  Temperature(double initial_alpha, double learning_rate, double alpha_min);

  double alpha() const { return std::exp(log_alpha_); }
  double log_alpha() const { return log_alpha_; }
  void set(double alpha);
  // One descent step from a batch entropy estimate; returns the new alpha.
  double step(double entropy_estimate, double entropy_target);

 private:
  double log_alpha_ = 0.0;
  double log_floor_ = 0.0;
  AdamConfig config_;
  double m_ = 0.0;
  double v_ = 0.0;
  std::uint64_t t_ = 0;
};

// Frozen actor used for evaluation rollouts.
struct PolicySnapshot {
  ActorNet actor;
  ActionBounds bounds;

  RowVector act(const RowVector& observation) const;
};

class Agent {
 public:
  Agent(AgentConfig config, EnvSpec env, std::uint64_t seed);

  const AgentConfig& config() const { return config_; }
  const EnvSpec& env_spec() const { return env_; }

  // Uniform random while fewer than start_steps environment steps have been
  // recorded (explore mode only); then a policy sample, or the squashed mean
  // in exploit mode.
  RowVector act(const RowVector& observation, ActMode mode, Rng& rng) const;
  void record_env_step() { ++env_steps_; }
  std::uint64_t env_steps() const { return env_steps_; }

  UpdateDiagnostics update_step(const Batch& batch, Rng& rng);

  // Shared bootstrap targets y for a batch (consumes rng for target noise).
  Vector compute_targets(const Batch& batch, Rng& rng) const;

  // One temperature step from the batch entropy estimate; returns the new alpha.
  double alpha_update(const Vector& log_probs);

  double alpha() const { return alpha_; }
  void set_alpha(double alpha);
  double entropy_target() const { return config_.entropy_target_for(env_.action_dim); }

  std::uint64_t gradient_steps() const { return j_; }
  const UpdateCounters& counters() const { return counters_; }

  const ActorNet& actor() const { return actor_; }
  ActorNet& actor() { return actor_; }
  const ActorNet& actor_target() const { return actor_target_; }
  const CriticTriple& critics() const { return critics_; }
  CriticTriple& critics() { return critics_; }

  PolicySnapshot snapshot() const { return {actor_, env_.bounds}; }
  Checkpoint checkpoint() const;

 private:
  AgentConfig config_;
  EnvSpec env_;
  ActorNet actor_;
  ActorNet actor_target_;
  CriticTriple critics_;
  Adam actor_opt_;
  std::vector<Adam> critic_opts_;
  double alpha_;
  Temperature temperature_;
  std::uint64_t j_ = 0;
  std::uint64_t env_steps_ = 0;
  UpdateCounters counters_;
};

struct TrainHooks {
  std::function<void(const UpdateDiagnostics&)> on_update;
  // After environment step t (1-based) and any updates scheduled for it.
  std::function<void(std::uint64_t t, const Agent&)> after_env_step;
  std::function<void(const Transition&)> on_transition;
};

struct TrainSummary {
  std::uint64_t env_steps = 0;
  std::uint64_t gradient_updates = 0;
  std::uint64_t episodes = 0;
};

// Runs the interaction loop on a caller-owned agent.
TrainSummary train(Agent& agent, Environment& env, std::uint64_t total_steps, std::uint64_t seed,
                   const TrainHooks& hooks = {});

struct TrainResult {
  Agent agent;
  TrainSummary summary;
};

TrainResult train(const AgentConfig& config, Environment& env, std::uint64_t total_steps, std::uint64_t seed,
                  const TrainHooks& hooks = {});

// Seed of the k-th episode reset for a run seeded with `seed`.
std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t episode);

}  // namespace opac
