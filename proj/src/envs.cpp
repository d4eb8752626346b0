#include "opac/envs.hpp"

#include <charconv>
#include <cmath>
#include <numbers>
#include <vector>

#include "opac/errors.hpp"

namespace opac {
namespace {

void check_action(const RowVector& action, int dim, const char* env) {
  if (action.size() != dim)
    throw ShapeError(std::string(env) + ": expected a " + std::to_string(dim) + "-dim action, got " +
                     std::to_string(action.size()));
  if (!action.allFinite()) throw ContractError(std::string(env) + ": non-finite action");
}

}  // namespace

void EnvSpec::validate() const {
  if (observation_dim < 1 || action_dim < 1 || max_episode_steps < 1) throw ConfigError("EnvSpec: invalid dims");
  bounds.validate();
  if (bounds.dim() != action_dim) throw ConfigError("EnvSpec: bounds dim differs from action dim");
}

Pendulum::Pendulum() : spec_{3, 1, ActionBounds::symmetric(1, kMaxTorque), kEpisodeSteps} {}

double Pendulum::wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta + std::numbers::pi, two_pi);
  if (w <= 0.0) w += two_pi;
  return w - std::numbers::pi;
}

double Pendulum::reward(const PendulumState& s, double torque) {
  return -(s.theta * s.theta + 0.1 * s.theta_dot * s.theta_dot + 0.001 * torque * torque);
}

RowVector Pendulum::reset(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> speed(-1.0, 1.0);
  state_.theta = -angle(rng);  // [-pi, pi) mirrored onto (-pi, pi]
  state_.theta_dot = speed(rng);
  steps_ = 0;
  return observation();
}

void Pendulum::set_state(const PendulumState& s) {
  state_.theta = wrap_angle(s.theta);
  state_.theta_dot = std::clamp(s.theta_dot, -kMaxSpeed, kMaxSpeed);
}

RowVector Pendulum::observation() const {
  RowVector obs(3);
  obs << std::cos(state_.theta), std::sin(state_.theta), state_.theta_dot;
  return obs;
}

double Pendulum::energy() const {
  return kMass * kLength * kLength * state_.theta_dot * state_.theta_dot / 6.0 +
         kMass * kGravity * 0.5 * kLength * std::cos(state_.theta);
}

StepResult Pendulum::step(const RowVector& action) {
  check_action(action, 1, "pendulum");
  const double torque = std::clamp(action[0], -kMaxTorque, kMaxTorque);
  StepResult out;
  out.reward = reward(state_, torque);

  const double accel = -(3.0 * kGravity / (2.0 * kLength)) * std::sin(state_.theta + std::numbers::pi) +
                       3.0 * torque / (kMass * kLength * kLength);
  state_.theta_dot = std::clamp(state_.theta_dot + accel * kDt, -kMaxSpeed, kMaxSpeed);
  state_.theta = wrap_angle(state_.theta + state_.theta_dot * kDt);
  ++steps_;

  out.observation = observation();
  out.done = steps_ >= kEpisodeSteps;
  out.truncated = out.done;
  return out;
}

PointMass::PointMass()
    : spec_{4, 2, ActionBounds::symmetric(2, 1.0), kEpisodeSteps},
      position_(RowVector::Zero(2)),
      velocity_(RowVector::Zero(2)),
      goal_(RowVector::Constant(2, 1.0)) {}

RowVector PointMass::reset(std::uint64_t /*seed*/) {
  position_.setZero();
  velocity_.setZero();
  steps_ = 0;
  return observation();
}

RowVector PointMass::observation() const {
  RowVector obs(4);
  obs << position_, velocity_;
  return obs;
}

StepResult PointMass::step(const RowVector& action) {
  check_action(action, 2, "pointmass");
  const RowVector force = action.cwiseMax(-1.0).cwiseMin(1.0);
  StepResult out;
  out.reward = -(position_ - goal_).norm() - 0.01 * force.squaredNorm();
  velocity_ = (velocity_ + force * kDt).cwiseMax(-kMaxSpeed).cwiseMin(kMaxSpeed);
  position_ = (position_ + velocity_ * kDt).cwiseMax(-kArena).cwiseMin(kArena);
  ++steps_;
  out.observation = observation();
  out.done = steps_ >= kEpisodeSteps;
  out.truncated = out.done;
  return out;
}

std::optional<RandomMdpKey> parse_random_mdp(std::string_view name) {
  constexpr std::string_view prefix = "random-mdp:";
  if (name.substr(0, prefix.size()) != prefix) return std::nullopt;
  std::string_view rest = name.substr(prefix.size());
  std::vector<std::uint64_t> parts;
  while (!rest.empty()) {
    const auto colon = rest.find(':');
    const std::string_view tok = rest.substr(0, colon);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty())
      throw ConfigError("bad random-mdp key '" + std::string(name) + "'");
    parts.push_back(v);
    if (colon == std::string_view::npos) break;
    rest = rest.substr(colon + 1);
  }
  if (parts.size() != 3 || parts[1] == 0 || parts[2] == 0)
    throw ConfigError("random-mdp key must be random-mdp:<seed>:<n_states>:<n_actions>");
  return RandomMdpKey{parts[0], static_cast<int>(parts[1]), static_cast<int>(parts[2])};
}

FiniteMDP random_mdp(std::uint64_t seed, int n_states, int n_actions, double gamma, double reward_noise) {
  if (n_states < 1 || n_actions < 1) throw ConfigError("random_mdp: need at least one state and action");
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FiniteMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.reward_noise = reward_noise;
  mdp.terminal.assign(static_cast<std::size_t>(n_states), false);
  mdp.reward.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      RowVector row(n_states);
      for (int k = 0; k < n_states; ++k) row[k] = u(rng);
      row /= row.sum();
      mdp.transition.push_back(std::move(row));
    }
  }
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) mdp.reward(s, a) = u(rng);
  mdp.validate();
  return mdp;
}

std::unique_ptr<Environment> make_env(std::string_view name) {
  if (name == "pendulum") return std::make_unique<Pendulum>();
  if (name == "pointmass") return std::make_unique<PointMass>();
  if (parse_random_mdp(name))
    throw ConfigError("'" + std::string(name) + "' is a finite MDP; it has no continuous-control interface");
  throw ConfigError("unknown environment '" + std::string(name) + "' (expected pendulum, pointmass or "
                    "random-mdp:<seed>:<n_states>:<n_actions>)");
}

FiniteMDP make_finite_mdp(std::string_view name, double gamma, double reward_noise) {
  const auto key = parse_random_mdp(name);
  if (!key) throw ConfigError("'" + std::string(name) + "' is not a random-mdp key");
  return random_mdp(key->seed, key->n_states, key->n_actions, gamma, reward_noise);
}

}  // namespace opac
