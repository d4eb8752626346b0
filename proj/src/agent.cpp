#include "opac/agent.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "opac/diff/tape.hpp"
#include "opac/errors.hpp"

namespace opac {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kOpac: return "opac";
    case Variant::kSac: return "sac";
    case Variant::kTd3: return "td3";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  if (name == "opac") return Variant::kOpac;
  if (name == "sac") return Variant::kSac;
  if (name == "td3") return Variant::kTd3;
  throw ConfigError("unknown algorithm '" + std::string(name) + "' (expected opac, sac or td3)");
}

AgentConfig AgentConfig::for_variant(Variant v, TargetStrategy opac_strategy) {
  AgentConfig c;
  c.variant = v;
  switch (v) {
    case Variant::kOpac:
      c.strategy = opac_strategy;
      break;
    case Variant::kSac:
      c.strategy = TargetStrategy::kMinPair;
      c.smoothing.reset();
      break;
    case Variant::kTd3:
      c.strategy = TargetStrategy::kMinPair;
      c.initial_alpha = 0.0;
      break;
  }
  return c;
}

void AgentConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (policy_delay < 1) throw ConfigError("policy_delay must be >= 1");
  if (update_every < 1) throw ConfigError("update_every must be >= 1");
  if (replay_capacity < 1) throw ConfigError("replay_capacity must be >= 1");
  if (!(actor_lr > 0.0 && critic_lr > 0.0 && alpha_lr >= 0.0)) throw ConfigError("learning rates must be positive");
  if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
  for (int h : hidden)
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
  if (smoothing) smoothing->validate();
  if (!(exploration_noise >= 0.0)) throw ConfigError("exploration_noise must be >= 0");
  if (variant == Variant::kOpac && strategy == TargetStrategy::kMinPair)
    throw ConfigError("opac uses mean2 or median3; minpair is reserved for the sac/td3 baselines");
  if (variant != Variant::kOpac && strategy != TargetStrategy::kMinPair)
    throw ConfigError(std::string(to_string(variant)) + " baseline uses the minpair target");
  if (learns_alpha()) {
    if (!(initial_alpha > 0.0)) throw ConfigError("initial alpha must be > 0");
    if (!(alpha_min > 0.0)) throw ConfigError("alpha_min must be > 0");
  } else if (initial_alpha != 0.0) {
    throw ConfigError("td3 keeps alpha fixed at 0");
  }
}

PolicyLossResult policy_loss(const ActorNet& actor, const CriticNet& critic1, const Matrix& states, const Matrix& eps,
                             double alpha, const ActionBounds& bounds, bool stochastic) {
  diff::Tape tape;
  const diff::Var s = tape.constant(states);
  const BoundParams actor_vars = bind(tape, actor.params, true);
  const BoundParams critic_vars = bind(tape, critic1.params, false);
  const ActorVars out = forward_actor(actor, actor_vars, s);

  PolicyLossResult res;
  diff::Var loss;
  if (stochastic) {
    const SquashedVars sq = sample_reparam(out.mu, out.log_std, eps, bounds);
    const diff::Var q = forward_critic(critic1, critic_vars, s, sq.action);
    loss = mean(alpha * sq.log_prob - q);
    res.log_prob = sq.log_prob.value().col(0);
  } else {
    const diff::Var q = forward_critic(critic1, critic_vars, s, deterministic_action(out.mu, bounds));
    loss = -mean(q);
  }
  res.loss = loss.value()(0, 0);
  res.grad = gradients_of(tape.backward(loss), actor_vars);
  return res;
}

double log_alpha_gradient(double alpha, double entropy_estimate, double entropy_target) {
  return alpha * (entropy_estimate - entropy_target);
}

Temperature::Temperature(double initial_alpha, double learning_rate, double alpha_min)
    : log_floor_(std::log(alpha_min)), config_{learning_rate} {
  if (!(alpha_min > 0.0)) throw ContractError("alpha_min must be > 0");
  set(initial_alpha);
}

void Temperature::set(double alpha) {
  if (!(alpha > 0.0)) throw ContractError("alpha must stay positive");
  log_alpha_ = std::max(std::log(alpha), log_floor_);
}

double Temperature::step(double entropy_estimate, double entropy_target) {
  const double g = log_alpha_gradient(alpha(), entropy_estimate, entropy_target);
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * g;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * g * g;
  const double mhat = m_ / (1.0 - std::pow(config_.beta1, double(t_)));
  const double vhat = v_ / (1.0 - std::pow(config_.beta2, double(t_)));
  log_alpha_ = std::max(log_alpha_ - config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon), log_floor_);
  return alpha();
}

RowVector PolicySnapshot::act(const RowVector& observation) const {
  return deterministic_action(forward_actor(actor, Matrix(observation)).mu, bounds).row(0);
}

Agent::Agent(AgentConfig config, EnvSpec env, std::uint64_t seed)
    : config_(std::move(config)), env_(std::move(env)), alpha_(config_.initial_alpha) {
  config_.validate();
  env_.validate();
  const MLPSpec actor_spec{env_.observation_dim, config_.hidden, env_.action_dim, Activation::kRelu};
  actor_ = ActorNet::create(actor_spec, derive_seed(seed, 1));
  actor_target_ = actor_;
  critics_ = CriticTriple::create(config_.critic_count(), env_.observation_dim, env_.action_dim, config_.hidden,
                                  derive_seed(seed, 2));
  actor_opt_ = Adam(actor_.params, AdamConfig{config_.actor_lr});
  if (config_.learns_alpha()) temperature_ = Temperature(config_.initial_alpha, config_.alpha_lr, config_.alpha_min);
  for (const auto& c : critics_.models) critic_opts_.emplace_back(c.params, AdamConfig{config_.critic_lr});
}

void Agent::set_alpha(double alpha) {
  if (config_.learns_alpha()) {
    temperature_.set(alpha);
    alpha_ = temperature_.alpha();
  } else {
    alpha_ = alpha;
  }
}

RowVector Agent::act(const RowVector& observation, ActMode mode, Rng& rng) const {
  if (observation.size() != env_.observation_dim)
    throw ShapeError("act: observation has " + std::to_string(observation.size()) + " entries, expected " +
                     std::to_string(env_.observation_dim));
  const ActionBounds& b = env_.bounds;
  if (mode == ActMode::kExplore && env_steps_ < config_.start_steps) {
    RowVector a(b.dim());
    for (int i = 0; i < b.dim(); ++i) a[i] = std::uniform_real_distribution<double>(b.low[i], b.high[i])(rng);
    return a;
  }
  const ActorOutput out = forward_actor(actor_, Matrix(observation));
  if (mode == ActMode::kExploit) return deterministic_action(out.mu, b).row(0);
  if (config_.stochastic_policy()) {
    const Matrix eps = standard_normal(1, b.dim(), rng);
    return sample_reparam(out.mu, out.log_std, eps, b).action.row(0);
  }
  RowVector a = deterministic_action(out.mu, b).row(0);
  if (config_.exploration_noise > 0.0) {
    std::normal_distribution<double> noise(0.0, config_.exploration_noise);
    const RowVector scale = b.scale();
    for (int i = 0; i < b.dim(); ++i) a[i] = std::clamp(a[i] + scale[i] * noise(rng), b.low[i], b.high[i]);
  }
  return a;
}

Vector Agent::compute_targets(const Batch& batch, Rng& rng) const {
  const TargetActions next = target_action(actor_target_, batch.next_states, config_.smoothing, env_.bounds,
                                           config_.stochastic_policy(), rng);
  const Vector agg = aggregate(evaluate_targets(critics_, batch.next_states, next.actions), config_.strategy);
  return shared_q_target(batch.rewards, batch.done, config_.gamma, agg, alpha_, next.log_prob);
}

double Agent::alpha_update(const Vector& log_probs) {
  if (log_probs.size() == 0) throw ContractError("alpha_update: empty log-prob batch");
  alpha_ = temperature_.step(-log_probs.mean(), entropy_target());
  ++counters_.alpha_steps;
  return alpha_;
}

UpdateDiagnostics Agent::update_step(const Batch& batch, Rng& rng) {
  if (batch.size() == 0) throw ContractError("update_step: empty batch");
  UpdateDiagnostics d;
  d.step = j_;

  const Vector y = compute_targets(batch, rng);
  CriticLosses cl = critic_loss(critics_, batch.states, batch.actions, y);
  for (std::size_t i = 0; i < critics_.size(); ++i) {
    critic_opts_[i].step(critics_.models[i].params, cl.grads[i]);
    ++counters_.critic_steps;
  }
  d.critic_losses = std::move(cl.losses);

  if (j_ % static_cast<std::uint64_t>(config_.policy_delay) == 0) {
    const bool stochastic = config_.stochastic_policy();
    const Matrix eps = stochastic ? standard_normal(batch.size(), env_.action_dim, rng)
                                  : Matrix::Zero(batch.size(), env_.action_dim);
    PolicyLossResult pl =
        policy_loss(actor_, critics_.models[0], batch.states, eps, alpha_, env_.bounds, stochastic);
    actor_opt_.step(actor_.params, pl.grad);
    ++counters_.policy_steps;
    d.policy_loss = pl.loss;
    if (stochastic) {
      d.entropy = -pl.log_prob.mean();
      if (config_.learns_alpha()) alpha_update(pl.log_prob);
    }
    polyak_update(actor_target_.params, actor_.params, config_.tau);
    for (std::size_t i = 0; i < critics_.size(); ++i)
      polyak_update(critics_.targets[i].params, critics_.models[i].params, config_.tau);
    ++counters_.target_updates;
    d.delayed_step = true;
  }
  d.alpha = alpha_;
  ++j_;
  return d;
}

Checkpoint Agent::checkpoint() const {
  return Checkpoint{actor_, actor_target_, critics_.models, critics_.targets, alpha_, j_};
}

std::uint64_t episode_seed(std::uint64_t seed, std::uint64_t episode) {
  return derive_seed(derive_seed(seed, 100), episode);
}

TrainSummary train(Agent& agent, Environment& env, std::uint64_t total_steps, std::uint64_t seed,
                   const TrainHooks& hooks) {
  const AgentConfig& cfg = agent.config();
  const EnvSpec& spec = env.spec();
  if (spec.observation_dim != agent.env_spec().observation_dim || spec.action_dim != agent.env_spec().action_dim)
    throw ConfigError("train: environment does not match the agent's EnvSpec");

  Rng act_rng(derive_seed(seed, 10));
  Rng update_rng(derive_seed(seed, 11));
  ReplayBuffer replay(std::min<std::size_t>(cfg.replay_capacity, std::max<std::uint64_t>(total_steps, 1)),
                      spec.observation_dim, spec.action_dim);

  TrainSummary summary;
  RowVector obs = env.reset(episode_seed(seed, 0));
  for (std::uint64_t t = 1; t <= total_steps; ++t) {
    const RowVector action = agent.act(obs, ActMode::kExplore, act_rng);
    StepResult sr;
    try {
      sr = env.step(action);
    } catch (const std::exception& e) {
      throw std::runtime_error("environment step " + std::to_string(t) + " failed: " + e.what());
    }
    Transition tr{obs, action, sr.reward, sr.observation, sr.done, sr.truncated};
    replay.push(tr);
    if (hooks.on_transition) hooks.on_transition(tr);
    agent.record_env_step();
    ++summary.env_steps;
    obs = sr.observation;
    if (sr.done) {
      ++summary.episodes;
      obs = env.reset(episode_seed(seed, summary.episodes));
    }

    if (t > cfg.start_steps && t % static_cast<std::uint64_t>(cfg.update_every) == 0) {
      for (int k = 0; k < cfg.update_every; ++k) {
        const Batch batch = replay.sample(static_cast<std::size_t>(cfg.batch_size), update_rng);
        const UpdateDiagnostics d = agent.update_step(batch, update_rng);
        ++summary.gradient_updates;
        if (hooks.on_update) hooks.on_update(d);
      }
    }
    if (hooks.after_env_step) hooks.after_env_step(t, agent);
  }
  return summary;
}

TrainResult train(const AgentConfig& config, Environment& env, std::uint64_t total_steps, std::uint64_t seed,
                  const TrainHooks& hooks) {
  TrainResult r{Agent(config, env.spec(), seed), {}};
  r.summary = train(r.agent, env, total_steps, seed, hooks);
  return r;
}

}  // namespace opac
